//! Stacked per-layer embeddings, the decoder's input unit.

use crate::error::{DecoderError, Result};
use tensor_core::DenseTensor;

/// One sample's features: `num_layers` encoder layers by `time_steps` by
/// `dim`, stored as 32-bit values so file round trips are bit-exact,
/// plus its class label and a source identifier.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStack {
    values: Vec<f32>,
    num_layers: usize,
    time_steps: usize,
    dim: usize,
    pub label: u32,
    pub source: u32,
}

impl EmbeddingStack {
    pub fn new(
        values: Vec<f32>,
        num_layers: usize,
        time_steps: usize,
        dim: usize,
        label: u32,
    ) -> Result<Self> {
        if num_layers == 0 || time_steps == 0 || dim == 0 {
            return Err(DecoderError::Data(format!(
                "stack extents must be positive, got {num_layers}x{time_steps}x{dim}"
            )));
        }
        if values.len() != num_layers * time_steps * dim {
            return Err(DecoderError::Data(format!(
                "stack {num_layers}x{time_steps}x{dim} needs {} values, got {}",
                num_layers * time_steps * dim,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(DecoderError::Data(format!(
                "stack holds non-finite value {bad}"
            )));
        }
        Ok(Self {
            values,
            num_layers,
            time_steps,
            dim,
            label,
            source: 0,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn time_steps(&self) -> usize {
        self.time_steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, layer: usize, step: usize, feature: usize) -> f32 {
        self.values[(layer * self.time_steps + step) * self.dim + feature]
    }

    /// Average over the time axis, yielding the `num_layers x dim` context
    /// matrix the decoder attends over.
    pub fn mean_pool_time(&self) -> Result<DenseTensor> {
        let t = self.time_steps as f64;
        let mut pooled = vec![0.0f64; self.num_layers * self.dim];
        for l in 0..self.num_layers {
            for s in 0..self.time_steps {
                let base = (l * self.time_steps + s) * self.dim;
                for f in 0..self.dim {
                    pooled[l * self.dim + f] += self.values[base + f] as f64;
                }
            }
        }
        for v in pooled.iter_mut() {
            *v /= t;
        }
        Ok(DenseTensor::from_vec(pooled, &[self.num_layers, self.dim])?)
    }

    /// A copy keeping only the given layers, in the given order. Used by
    /// the ablation flow to retrain on a layer subset.
    pub fn retain_layers(&self, layers: &[usize]) -> Result<Self> {
        if layers.is_empty() {
            return Err(DecoderError::Data("layer selection is empty".into()));
        }
        let plane = self.time_steps * self.dim;
        let mut values = Vec::with_capacity(layers.len() * plane);
        for &l in layers {
            if l >= self.num_layers {
                return Err(DecoderError::Data(format!(
                    "layer {l} out of range for a {}-layer stack",
                    self.num_layers
                )));
            }
            values.extend_from_slice(&self.values[l * plane..(l + 1) * plane]);
        }
        Ok(Self {
            values,
            num_layers: layers.len(),
            time_steps: self.time_steps,
            dim: self.dim,
            label: self.label,
            source: self.source,
        })
    }
}
