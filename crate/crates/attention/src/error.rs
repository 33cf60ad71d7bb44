use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttentionError {
    /// Invalid mechanism configuration (head counts, dimensions, modes).
    #[error("configuration error: {0}")]
    Config(String),

    /// Propagated tensor failure (dimension, contract, or numeric).
    #[error(transparent)]
    Tensor(#[from] tensor_core::TensorError),
}

impl AttentionError {
    /// True when the underlying cause is a numeric guard or non-finite
    /// value rather than a structural problem.
    pub fn is_numeric(&self) -> bool {
        matches!(self, AttentionError::Tensor(tensor_core::TensorError::Numeric(_)))
    }
}

pub type Result<T> = std::result::Result<T, AttentionError>;
