use thiserror::Error;

/// Errors raised by the tracking library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("time grids differ")]
    GridMismatch,

    #[error("insufficient data: need at least {needed} samples, have {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("time index {got} does not follow previous index {prev}")]
    Ordering { prev: u64, got: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("hyperparameter optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("posterior variance {0} is negative beyond rounding tolerance")]
    NegativeVariance(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(expected: impl ToString, got: impl ToString) -> Error {
    Error::DimensionMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
