//! Mixture-of-Gaussians adaptive attention head.
//!
//! All component Gaussians share the input's sample moments; each one has
//! its own learnable per-feature mean offset and scale. The per-element
//! densities are multiplied across components, the product is normalized to
//! sum to one along the moment axis, and the input is modulated by the
//! normalized weights.

use crate::error::{AttentionError, Result};
use crate::gaam::guard_width;
use tensor_core::DenseTensor;

/// Added to the shared variance before the square root.
pub const MIX_EPS: f64 = 1e-8;

pub struct MixtureGaamHead {
    mean_offsets: DenseTensor, // [num_gaussians, dim]
    scales: DenseTensor,       // [num_gaussians, dim]
}

impl MixtureGaamHead {
    /// Fresh head: offsets start at 0, scales at 1 (a squared scale of 1
    /// gives the same 2c^2 = 2 width a fresh plain head uses).
    pub fn new(num_gaussians: usize, dim: usize) -> Result<Self> {
        if num_gaussians == 0 || dim == 0 {
            return Err(AttentionError::Config(
                "mixture head needs at least one gaussian and a positive dimension".into(),
            ));
        }
        Ok(Self {
            mean_offsets: DenseTensor::parameter(vec![0.0; num_gaussians * dim], &[num_gaussians, dim])?,
            scales: DenseTensor::parameter(vec![1.0; num_gaussians * dim], &[num_gaussians, dim])?,
        })
    }

    pub fn from_params(mean_offsets: DenseTensor, scales: DenseTensor) -> Result<Self> {
        if mean_offsets.rank() != 2
            || scales.rank() != 2
            || mean_offsets.shape() != scales.shape()
            || mean_offsets.len() == 0
        {
            return Err(AttentionError::Config(format!(
                "mean offsets {:?} and scales {:?} must be matching [gaussians, dim] matrices",
                mean_offsets.shape(),
                scales.shape()
            )));
        }
        Ok(Self {
            mean_offsets,
            scales,
        })
    }

    pub fn num_gaussians(&self) -> usize {
        self.mean_offsets.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.mean_offsets.shape()[1]
    }

    pub fn mean_offsets(&self) -> &DenseTensor {
        &self.mean_offsets
    }

    pub fn scales(&self) -> &DenseTensor {
        &self.scales
    }

    pub fn param_count(&self) -> u64 {
        2 * (self.num_gaussians() * self.dim()) as u64
    }

    /// Modulated features and the normalized mixture weights.
    pub fn forward(&self, x: &DenseTensor, axis: usize) -> Result<(DenseTensor, DenseTensor)> {
        if x.rank() != 2 {
            return Err(AttentionError::Config(format!(
                "expected a rank-2 input, got shape {:?}",
                x.shape()
            )));
        }
        if axis > 1 {
            return Err(AttentionError::Config(format!(
                "norm axis must be 0 or 1, got {axis}"
            )));
        }
        if x.shape()[1] != self.dim() {
            return Err(AttentionError::Config(format!(
                "input features {} do not match mixture dimension {}",
                x.shape()[1],
                self.dim()
            )));
        }
        guard_width(&self.scales, "mixture scale")?;

        let mean = x.mean_axis(axis, true)?;
        let var = x
            .square()?
            .mean_axis(axis, true)?
            .sub(&mean.square()?)?
            .add_scalar(MIX_EPS)?;
        let std = var.sqrt()?;

        let mut mixture: Option<DenseTensor> = None;
        for i in 0..self.num_gaussians() {
            let offset = self.mean_offsets.slice_axis(0, i, 1)?;
            let scale = self.scales.slice_axis(0, i, 1)?;
            let adjusted = mean.add(&offset)?;
            let y_norm = x.sub(&adjusted)?.div(&std)?;
            let scale_sq = scale.square()?;
            let density = y_norm
                .square()?
                .neg()?
                .div(&scale_sq.scale(2.0)?)?
                .exp()?
                .div(&scale_sq.scale(std::f64::consts::TAU)?.sqrt()?)?;
            mixture = Some(match mixture {
                Some(m) => m.mul(&density)?,
                None => density,
            });
        }
        let mixture = mixture.expect("at least one gaussian");
        let weights = mixture.div(&mixture.sum_axis(axis, true)?)?;
        let out = x.mul(&weights)?;
        Ok((out, weights))
    }
}
