//! Synthetic regime-switching embedding generator.
//!
//! Every sample starts as standard-normal noise over `layers x steps x dim`.
//! On the informative layers the sample's class plants its mean shift, and
//! the time axis is cut into piecewise-stationary segments whose noise
//! amplitude wanders up to the class's variance multiplier, so the signal
//! is non-stationary in time.

use crate::error::{IngestError, Result};
use gat_decoder::EmbeddingStack;
use tensor_core::RngState;

/// Most regime switches a single sample can have.
pub const MAX_SWITCHES: usize = 3;

/// Recipe for one synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct RegimeSpec {
    pub num_classes: usize,
    pub num_layers: usize,
    pub time_steps: usize,
    pub dim: usize,
    /// Layers that carry the class signal; all others stay pure noise.
    pub informative_layers: Vec<usize>,
    /// Additive shift per class, applied on informative layers.
    pub mean_shifts: Vec<f64>,
    /// Per-class bound on how far a segment's noise amplitude may drift
    /// from 1. Must be positive; 1 keeps the noise stationary.
    pub var_multipliers: Vec<f64>,
    /// Base noise amplitude on informative layers.
    pub noise_scale: f64,
    pub num_samples: usize,
    pub seed: u64,
}

impl RegimeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(IngestError::Spec(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.num_layers == 0 || self.dim == 0 {
            return Err(IngestError::Spec(
                "layer count and dimension must be positive".into(),
            ));
        }
        if self.time_steps < 4 {
            return Err(IngestError::Spec(format!(
                "need at least 4 time steps to place regime boundaries, got {}",
                self.time_steps
            )));
        }
        if self.num_samples == 0 {
            return Err(IngestError::Spec("sample count must be positive".into()));
        }
        if let Some(&bad) = self.informative_layers.iter().find(|&&l| l >= self.num_layers) {
            return Err(IngestError::Spec(format!(
                "informative layer {bad} out of range for {} layers",
                self.num_layers
            )));
        }
        if self.mean_shifts.len() != self.num_classes
            || self.var_multipliers.len() != self.num_classes
        {
            return Err(IngestError::Spec(format!(
                "need one mean shift and one variance multiplier per class: \
                 {} classes, {} shifts, {} multipliers",
                self.num_classes,
                self.mean_shifts.len(),
                self.var_multipliers.len()
            )));
        }
        if let Some(&bad) = self.mean_shifts.iter().find(|v| !v.is_finite()) {
            return Err(IngestError::Spec(format!("mean shift {bad} is not finite")));
        }
        if let Some(&bad) = self
            .var_multipliers
            .iter()
            .find(|&&v| !(v.is_finite() && v > 0.0))
        {
            return Err(IngestError::Spec(format!(
                "variance multipliers must be positive and finite, got {bad}"
            )));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(IngestError::Spec(format!(
                "noise scale must be finite and non-negative, got {}",
                self.noise_scale
            )));
        }
        Ok(())
    }

    /// Half-open index range regime boundaries are drawn from.
    fn boundary_range(&self) -> (usize, usize) {
        let lo = (self.time_steps / 4).max(1);
        let hi = 3 * self.time_steps / 4;
        (lo, hi)
    }
}

/// Generate the dataset described by `spec`. Sample `i` gets label
/// `i % num_classes`, `source = i`, and its own random stream derived from
/// the spec seed, so datasets are reproducible sample by sample.
pub fn generate(spec: &RegimeSpec) -> Result<Vec<EmbeddingStack>> {
    spec.validate()?;
    let base = RngState::new(spec.seed);
    let mut out = Vec::with_capacity(spec.num_samples);
    for i in 0..spec.num_samples {
        let mut rng = base.derive(i as u64);
        let label = (i % spec.num_classes) as u32;
        let mut stack = generate_sample(spec, label, &mut rng)?;
        stack.source = i as u32;
        out.push(stack);
    }
    Ok(out)
}

fn generate_sample(spec: &RegimeSpec, label: u32, rng: &mut RngState) -> Result<EmbeddingStack> {
    let class = label as usize;
    let shift = spec.mean_shifts[class];
    let multiplier = spec.var_multipliers[class];

    let boundaries = draw_boundaries(spec, rng);
    // One noise amplitude per segment, drawn between 1 and the class's
    // multiplier (inclusive of whichever side of 1 the multiplier lies on).
    let (lo, hi) = if multiplier < 1.0 {
        (multiplier, 1.0)
    } else {
        (1.0, multiplier)
    };
    let amplitudes: Vec<f64> = (0..boundaries.len() + 1)
        .map(|_| rng.uniform(lo, hi))
        .collect();

    let mut values = Vec::with_capacity(spec.num_layers * spec.time_steps * spec.dim);
    for layer in 0..spec.num_layers {
        let informative = spec.informative_layers.contains(&layer);
        for step in 0..spec.time_steps {
            let segment = boundaries.iter().filter(|&&b| b <= step).count();
            for _ in 0..spec.dim {
                let n = rng.standard_normal();
                let v = if informative {
                    shift + spec.noise_scale * amplitudes[segment] * n
                } else {
                    n
                };
                values.push(v as f32);
            }
        }
    }
    Ok(EmbeddingStack::new(
        values,
        spec.num_layers,
        spec.time_steps,
        spec.dim,
        label,
    )?)
}

/// One to three distinct switch points in the middle half of the time axis.
fn draw_boundaries(spec: &RegimeSpec, rng: &mut RngState) -> Vec<usize> {
    let (lo, hi) = spec.boundary_range();
    let count = 1 + rng.index(MAX_SWITCHES);
    let mut boundaries: Vec<usize> = (0..count).map(|_| lo + rng.index(hi - lo)).collect();
    boundaries.sort_unstable();
    boundaries.dedup();
    boundaries
}
