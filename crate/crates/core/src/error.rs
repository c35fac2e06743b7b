use thiserror::Error;

/// Errors raised by model evaluation and the optimizer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch { context: &'static str, expected: String, actual: String },

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("matrix is not Hermitian positive semidefinite: {0}")]
    NotPsd(String),

    #[error("solver failure: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch { context, expected: expected.to_string(), actual: actual.to_string() }
    }
}
