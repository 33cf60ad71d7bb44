//! Gaussian context gate: a fixed-center bell curve over feature values
//! with a single learnable variance, used as a lightweight baseline.

use crate::error::{AttentionError, Result};
use tensor_core::{DenseTensor, TensorError};

/// Bell-curve weights `exp(-(x - mu)^2 / (2 sigma^2))` with a shared scalar
/// center and variance tensor. `sigma2` is usually a rank-0 parameter and
/// must be strictly positive.
pub fn gct_weights(x: &DenseTensor, mu: f64, sigma2: &DenseTensor) -> Result<DenseTensor> {
    if let Some(bad) = sigma2.data().iter().find(|v| **v <= 0.0 || !v.is_finite()) {
        return Err(AttentionError::Tensor(TensorError::Numeric(format!(
            "gate variance must be positive, got {bad}"
        ))));
    }
    let centered = x.add_scalar(-mu)?;
    let denom = sigma2.scale(2.0)?;
    let w = centered.square()?.div(&denom)?.neg()?.exp()?;
    Ok(w)
}

/// Gating layer with a fixed zero center and learnable scalar variance.
pub struct GctGate {
    sigma2: DenseTensor,
    learn_sigma: bool,
}

impl GctGate {
    pub fn new(learn_sigma: bool) -> Self {
        let sigma2 = if learn_sigma {
            DenseTensor::parameter(vec![1.0], &[]).expect("scalar parameter")
        } else {
            DenseTensor::scalar(1.0).expect("scalar constant")
        };
        Self {
            sigma2,
            learn_sigma,
        }
    }

    pub fn from_params(sigma2: DenseTensor) -> Result<Self> {
        if sigma2.rank() != 0 {
            return Err(AttentionError::Config(format!(
                "variance must be a scalar, got shape {:?}",
                sigma2.shape()
            )));
        }
        let learn_sigma = sigma2.requires_grad();
        Ok(Self {
            sigma2,
            learn_sigma,
        })
    }

    pub fn param_count(&self) -> u64 {
        if self.learn_sigma {
            1
        } else {
            0
        }
    }

    pub fn params(&self) -> Vec<(String, DenseTensor)> {
        if self.learn_sigma {
            vec![("sigma2".into(), self.sigma2.clone())]
        } else {
            Vec::new()
        }
    }

    /// Applies the gate elementwise and returns the gated features along
    /// with the weights used.
    pub fn forward(&self, x: &DenseTensor) -> Result<(DenseTensor, DenseTensor)> {
        let w = gct_weights(x, 0.0, &self.sigma2)?;
        let out = x.mul(&w)?;
        Ok((out, w))
    }
}
