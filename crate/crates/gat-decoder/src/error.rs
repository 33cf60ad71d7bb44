//! Error type shared by the decoder, its training loop, and checkpoints.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecoderError {
    /// Invalid model or training configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates a contract (shapes, labels, emptiness).
    #[error("data error: {0}")]
    Data(String),

    /// Malformed checkpoint bytes.
    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Tensor(#[from] tensor_core::TensorError),

    #[error(transparent)]
    Attention(#[from] attention::AttentionError),
}

impl DecoderError {
    /// True when the cause is a numeric guard or non-finite value.
    pub fn is_numeric(&self) -> bool {
        match self {
            DecoderError::Tensor(tensor_core::TensorError::Numeric(_)) => true,
            DecoderError::Attention(e) => e.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, DecoderError>;
