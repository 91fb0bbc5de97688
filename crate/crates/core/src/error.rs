use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The conformal index ⌈(1-α)(m+1)⌉ exceeds the calibration size.
    #[error("calibration infeasible: index {k} exceeds m = {m} at alpha = {alpha}")]
    CalibrationInfeasible { k: usize, m: usize, alpha: f64 },

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
