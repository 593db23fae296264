//! Normal ordering of operator products: the explicit contraction sum and
//! the tagged-leg Neumann engine.

pub mod chain;
pub mod explicit;

pub use chain::{high_leg_bound, neumann_terms, series_ratio, neumann_wick, Interaction, NeumannOutput, NeumannSetup};
pub use explicit::{
    contracted_block, direct_product, normal_order, normal_order_all, vev_chain, ContractionSpec, Profile,
    ShiftAccounting, Slot,
};
