//! Error type for dataset generation, file ingestion, and splitting.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    /// A generation or split contract was violated.
    #[error("spec error: {0}")]
    Spec(String),

    /// Malformed embedding file bytes.
    #[error("file format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Sample(#[from] gat_decoder::DecoderError),
}

pub type Result<T> = std::result::Result<T, IngestError>;
