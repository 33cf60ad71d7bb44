//! Single-head Gaussian adaptive attention.
//!
//! A head turns each input row into element-wise Gaussian gate weights:
//! per-row sample moments give a data-driven center and spread, a learnable
//! offset `delta` shifts the center per feature, and a learnable width `xi`
//! controls how sharply values away from the center are suppressed. The
//! output is the input modulated by those weights.

use crate::error::{AttentionError, Result};
use crate::map::AttentionMap;
use tensor_core::{DenseTensor, TensorError};

/// Added to the absolute variance so downstream divisions stay defined.
pub const EPS_VAR: f64 = 1e-8;
/// Added under the normalization square root.
pub const EPS_NORM: f64 = 1e-5;
/// Widths with magnitude below this are rejected outright.
pub const XI_MIN: f64 = 1e-6;
/// Sign-preserving term added to the width in the weight denominator.
pub const XI_GUARD: f64 = 1e-8;

/// Axis along which sample moments are taken: 1 pools each row's features
/// (the default orientation), 0 pools each feature down the rows.
pub const FEATURE_AXIS: usize = 1;

/// Per-row (or per-column) sample mean and guarded biased variance, both
/// kept as length-1 axes so they broadcast against the input.
/// The variance is `|E[x^2] - E[x]^2| + EPS_VAR`.
pub fn sample_moments(x: &DenseTensor, axis: usize) -> Result<(DenseTensor, DenseTensor)> {
    check_input(x, axis)?;
    let mean = x.mean_axis(axis, true)?;
    let raw = x.square()?.mean_axis(axis, true)?.sub(&mean.square()?)?;
    let var = raw.abs()?.add_scalar(EPS_VAR)?;
    Ok((mean, var))
}

/// Learned center: sample mean shifted by the per-feature offset.
pub fn adjusted_mean(mean: &DenseTensor, delta: &DenseTensor) -> Result<DenseTensor> {
    Ok(mean.add(delta)?)
}

/// Center and scale the input: `(x - psi) / sqrt(var + EPS_NORM)`.
pub fn normalize_features(
    x: &DenseTensor,
    psi: &DenseTensor,
    var: &DenseTensor,
) -> Result<DenseTensor> {
    Ok(x.sub(psi)?.div(&var.add_scalar(EPS_NORM)?.sqrt()?)?)
}

/// Gaussian gate weights `exp(-x_norm^2 / (2 * xi))`. The width keeps its
/// sign and gains a tiny same-sign guard in the denominator; widths smaller
/// in magnitude than [`XI_MIN`] are a numeric error.
pub fn gaam_weights(x_norm: &DenseTensor, xi: &DenseTensor) -> Result<DenseTensor> {
    guard_width(xi, "xi")?;
    let sign_guard: Vec<f64> = xi
        .data()
        .iter()
        .map(|v| if *v >= 0.0 { XI_GUARD } else { -XI_GUARD })
        .collect();
    let guard = DenseTensor::from_vec(sign_guard, xi.shape())?;
    let denom = xi.add(&guard)?.scale(2.0)?;
    Ok(x_norm.square()?.neg()?.div(&denom)?.exp()?)
}

pub(crate) fn guard_width(xi: &DenseTensor, what: &str) -> Result<()> {
    if let Some(bad) = xi.data().iter().find(|v| v.abs() < XI_MIN) {
        return Err(AttentionError::Tensor(TensorError::Numeric(format!(
            "{what} value {bad} is below the magnitude floor {XI_MIN}"
        ))));
    }
    Ok(())
}

fn check_input(x: &DenseTensor, axis: usize) -> Result<()> {
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
    if x.shape()[0] == 0 || x.shape()[1] == 0 {
        return Err(AttentionError::Config(format!(
            "input has an empty extent: {:?}",
            x.shape()
        )));
    }
    Ok(())
}

/// One Gaussian adaptive attention head: per-feature center offset and
/// width over a `dim`-feature input.
pub struct GaamHead {
    delta: DenseTensor,
    xi: DenseTensor,
}

impl GaamHead {
    /// Fresh head: offsets start at 0, widths at 2.
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(AttentionError::Config("head dimension must be positive".into()));
        }
        Ok(Self {
            delta: DenseTensor::parameter(vec![0.0; dim], &[dim])?,
            xi: DenseTensor::parameter(vec![2.0; dim], &[dim])?,
        })
    }

    /// Head over existing parameter tensors (shared with a `ParamStore`).
    pub fn from_params(delta: DenseTensor, xi: DenseTensor) -> Result<Self> {
        if delta.rank() != 1 || xi.rank() != 1 || delta.len() != xi.len() || delta.len() == 0 {
            return Err(AttentionError::Config(format!(
                "delta {:?} and xi {:?} must be equal-length vectors",
                delta.shape(),
                xi.shape()
            )));
        }
        Ok(Self { delta, xi })
    }

    pub fn dim(&self) -> usize {
        self.delta.len()
    }

    pub fn delta(&self) -> &DenseTensor {
        &self.delta
    }

    pub fn xi(&self) -> &DenseTensor {
        &self.xi
    }

    /// Number of learnable scalars (offset + width per feature).
    pub fn param_count(&self) -> u64 {
        2 * self.dim() as u64
    }

    /// Modulated features and the gate weights, both `x`-shaped.
    pub fn forward(&self, x: &DenseTensor, axis: usize) -> Result<(DenseTensor, DenseTensor)> {
        check_input(x, axis)?;
        if x.shape()[1] != self.dim() {
            return Err(AttentionError::Config(format!(
                "input features {} do not match head dimension {}",
                x.shape()[1],
                self.dim()
            )));
        }
        let (mean, var) = sample_moments(x, axis)?;
        let psi = adjusted_mean(&mean, &self.delta)?;
        let x_norm = normalize_features(x, &psi, &var)?;
        let weights = gaam_weights(&x_norm, &self.xi)?;
        let out = x.mul(&weights)?;
        Ok((out, weights))
    }
}

/// Single-head forward returning the output and its attention map.
pub fn gaam_forward(
    x: &DenseTensor,
    head: &GaamHead,
    axis: usize,
) -> Result<(DenseTensor, AttentionMap)> {
    let (out, weights) = head.forward(x, axis)?;
    let map = AttentionMap::from_tensor(&weights, x.shape()[0], "gaam")?;
    Ok((out, map))
}
