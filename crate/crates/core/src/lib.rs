pub mod analysis;
pub mod checks;
pub mod cli;
pub mod error;
pub mod feshbach;
pub mod fock;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod num;
pub mod pipeline;
pub mod rg;
pub mod wick;

pub use error::{Error, Result};
