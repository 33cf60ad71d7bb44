//! Residual stacks of shape-preserving attention layers.

use crate::error::{AttentionError, Result};
use crate::map::AttentionMap;
use crate::multi::{CombineMode, MultiGaam};
use tensor_core::DenseTensor;

/// A sequence of subspace-split head banks applied with residual
/// connections: `x <- layer(x) + x`, in order. An empty block is the
/// identity.
pub struct GaussianBlock {
    layers: Vec<MultiGaam>,
}

impl GaussianBlock {
    /// Layers must combine by subspace splitting so the residual addition
    /// is well-shaped for any row count.
    pub fn new(layers: Vec<MultiGaam>) -> Result<Self> {
        for (i, layer) in layers.iter().enumerate() {
            if layer.combine() != CombineMode::SplitSubspaces {
                return Err(AttentionError::Config(format!(
                    "block layer {i} ({}) must use subspace splitting so residual addition \
                     preserves shape",
                    layer.mechanism_name()
                )));
            }
        }
        if layers.len() > 1 {
            let d = layers[0].in_features();
            if layers.iter().any(|l| l.in_features() != d) {
                return Err(AttentionError::Config(
                    "all block layers must share one feature width".into(),
                ));
            }
        }
        Ok(Self { layers })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[MultiGaam] {
        &self.layers
    }

    pub fn param_count(&self) -> u64 {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn params(&self) -> Vec<(String, DenseTensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, t) in layer.params() {
                out.push((format!("l{i}.{name}"), t));
            }
        }
        out
    }

    /// Residual forward pass. The returned map is the final layer's gate
    /// weights (the modulation actually applied to the block output);
    /// `None` when the block is empty.
    pub fn forward(&self, x: &DenseTensor) -> Result<(DenseTensor, Option<AttentionMap>)> {
        let mut cur = x.clone();
        let mut last_map = None;
        for layer in &self.layers {
            let (out, map) = layer.forward(&cur)?;
            cur = out.add(&cur)?;
            last_map = Some(map);
        }
        Ok((cur, last_map))
    }
}

/// Block forward as a free operation, returning only the features.
pub fn gaussian_block_forward(x: &DenseTensor, block: &GaussianBlock) -> Result<DenseTensor> {
    Ok(block.forward(x)?.0)
}
