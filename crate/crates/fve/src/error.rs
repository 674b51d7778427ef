use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    KernelInvalid(String),

    #[error("covariance not positive semidefinite: eigenvalue {eigenvalue:e} below tolerance {tolerance:e}")]
    NotPsd { eigenvalue: f64, tolerance: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("unstable time step: dt = {dt:e} exceeds stability bound {bound:e}; retry with dt <= {bound:e}")]
    Unstable { dt: f64, bound: f64 },

    #[error("too many discarded replicates: {discarded} of {total}")]
    TooManyDiscards { discarded: usize, total: usize },

    #[error("no trajectories accepted; raise delta or the attempt budget")]
    ZeroAcceptance,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;
