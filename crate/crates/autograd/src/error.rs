use thiserror::Error;

/// Errors raised by tensor construction, graph ops and the optimizer.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    /// Incompatible or invalid shapes.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// API misuse (non-scalar loss, foreign variable, mismatched optimizer state).
    #[error("usage error: {0}")]
    Usage(String),
    /// Invalid input values (e.g. out-of-range class labels).
    #[error("input error: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) fn dim_err<S: Into<String>>(msg: S) -> TensorError {
    TensorError::Dimension(msg.into())
}
