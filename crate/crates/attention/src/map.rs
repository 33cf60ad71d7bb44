//! Snapshot of the weights an attention mechanism applied to one input.

use crate::error::{AttentionError, Result};
use tensor_core::DenseTensor;

/// Dense matrix of attention weights plus enough provenance to interpret
/// its rows. For multi-head mechanisms that stack head outputs vertically,
/// rows are grouped head-major: row `h * num_layers + l` belongs to head
/// `h`, layer `l`.
#[derive(Clone, Debug)]
pub struct AttentionMap {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    /// Number of distinct input rows (layers); `rows` is a multiple of it.
    pub num_layers: usize,
    /// Which mechanism produced the map.
    pub mechanism: String,
    /// Identifier of the sample the map was computed for.
    pub source: u32,
}

impl AttentionMap {
    pub fn new(
        values: Vec<f64>,
        rows: usize,
        cols: usize,
        num_layers: usize,
        mechanism: &str,
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(AttentionError::Config(format!(
                "attention map {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if num_layers == 0 || rows % num_layers != 0 {
            return Err(AttentionError::Config(format!(
                "map rows {rows} are not a whole multiple of {num_layers} layers"
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(AttentionError::Tensor(tensor_core::TensorError::Numeric(
                format!("attention map holds non-finite value {bad}"),
            )));
        }
        Ok(Self {
            values,
            rows,
            cols,
            num_layers,
            mechanism: mechanism.to_string(),
            source: 0,
        })
    }

    /// Snapshot a rank-2 weights tensor.
    pub fn from_tensor(weights: &DenseTensor, num_layers: usize, mechanism: &str) -> Result<Self> {
        if weights.rank() != 2 {
            return Err(AttentionError::Config(format!(
                "attention map must be rank 2, got shape {:?}",
                weights.shape()
            )));
        }
        Self::new(
            weights.to_vec(),
            weights.shape()[0],
            weights.shape()[1],
            num_layers,
            mechanism,
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Rows per layer (1 for single-head and feature-concatenated maps).
    pub fn heads(&self) -> usize {
        self.rows / self.num_layers
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
