use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Shapes or lengths that have to agree do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),
    /// A NaN or infinity appeared where a finite value is required.
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("numeric divergence at {0}")]
    Divergence(String),
    /// A tape was asked to run backward twice.
    #[error("adjoint graph already consumed")]
    GraphReused,
    #[error("DC leak: |X[0]| = {magnitude:e} exceeds {tolerance:e} (input was not zero-mean)")]
    DcLeak { magnitude: f64, tolerance: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("node {0} has no observed values and cannot be imputed")]
    Unimputable(String),
    #[error("split {0} is too short for a single window")]
    EmptySplit(String),
}

macro_rules! dim_err {
    ($($arg:tt)*) => { $crate::error::Error::Dimension(alloc::format!($($arg)*)) };
}
macro_rules! contract_err {
    ($($arg:tt)*) => { $crate::error::Error::Contract(alloc::format!($($arg)*)) };
}
pub(crate) use contract_err;
pub(crate) use dim_err;
