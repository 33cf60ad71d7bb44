use thiserror::Error;

/// Errors raised by tensor construction, operations, and optimization.
#[derive(Debug, Error)]
pub enum TensorError {
    /// Shapes or axes do not line up for the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A caller-side precondition was violated (bad argument, missing grad).
    #[error("contract error: {0}")]
    Contract(String),

    /// A completed operation produced a non-finite value, or a numeric
    /// guard rejected an input.
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;
