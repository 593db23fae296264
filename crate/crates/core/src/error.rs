use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("symmetry error: {0}")]
    Symmetry(String),
    #[error("kernel entry ({0},{1}) missing")]
    KernelMissing(usize, usize),
    #[error("truncation error: {0}")]
    Truncation(String),
    #[error("invalid Feshbach pair: {0}")]
    PairInvalid(String),
    #[error("Neumann series not contracting (estimated ratio {ratio:.3e})")]
    SeriesDiverged { ratio: f64 },
    #[error("ball violation: {0}")]
    BallViolation(String),
    #[error("Newton iteration diverged: {0}")]
    NewtonDiverged(String),
    #[error("point outside the analytic domain: {0}")]
    OutOfDomain(String),
    #[error("maximum number of iterations ({0}) exceeded")]
    MaxItersExceeded(usize),
    #[error("degenerate ground state: {0}")]
    DegenerateGroundState(String),
    #[error("contour crosses spectrum: {0}")]
    ContourCrossesSpectrum(String),
    #[error("eigenvalue tracking lost: {0}")]
    TrackingLost(String),
    #[error("decay window too small: {0}")]
    WindowTooSmall(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
