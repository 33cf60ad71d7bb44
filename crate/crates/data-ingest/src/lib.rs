//! Synthetic regime-switching datasets, a binary embedding file format,
//! and stratified splitting: everything the experiment pipeline needs to
//! feed the decoder.

pub mod error;
pub mod format;
pub mod split;
pub mod synth;

pub use error::{IngestError, Result};
pub use format::{
    labels_to_csv, read_embeddings, write_embeddings, EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use split::split;
pub use synth::{generate, RegimeSpec, MAX_SWITCHES};
