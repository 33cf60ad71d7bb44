//! Error type for importance-factor computation and export.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IfError {
    /// An input violated a contract (shape mismatch, empty list, bad count).
    #[error("contract error: {0}")]
    Contract(String),

    /// Malformed heatmap file content.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, IfError>;
