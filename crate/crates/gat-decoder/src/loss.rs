//! Classification losses over batched logits, built from numerically
//! stable log-softmax pieces.

use crate::error::{DecoderError, Result};
use tensor_core::{max_axis_detached, DenseTensor};

/// Which loss the training loop minimizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossKind {
    /// `(1 - p_t)^gamma * (-log p_t)`, averaged over the batch.
    Focal { gamma: f64 },
    CrossEntropy,
}

impl LossKind {
    pub fn compute(&self, logits: &DenseTensor, labels: &[u32]) -> Result<DenseTensor> {
        match *self {
            LossKind::Focal { gamma } => focal_loss(logits, labels, gamma),
            LossKind::CrossEntropy => cross_entropy(logits, labels),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Focal { .. } => "focal",
            LossKind::CrossEntropy => "cross_entropy",
        }
    }
}

fn check_batch(logits: &DenseTensor, labels: &[u32]) -> Result<()> {
    if logits.rank() != 2 || logits.shape()[0] == 0 || logits.shape()[1] == 0 {
        return Err(DecoderError::Config(format!(
            "logits must be a non-empty [batch, classes] matrix, got {:?}",
            logits.shape()
        )));
    }
    if labels.len() != logits.shape()[0] {
        return Err(DecoderError::Config(format!(
            "{} labels for a batch of {}",
            labels.len(),
            logits.shape()[0]
        )));
    }
    let classes = logits.shape()[1] as u32;
    if let Some(bad) = labels.iter().find(|l| **l >= classes) {
        return Err(DecoderError::Config(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Row-stable `log softmax`: subtract the detached row maximum, exponentiate,
/// normalize in log space.
pub fn log_softmax(logits: &DenseTensor, axis: usize) -> Result<DenseTensor> {
    let m = max_axis_detached(logits, axis)?;
    let shifted = logits.sub(&m)?;
    let lse = shifted.exp()?.sum_axis(axis, true)?.ln()?;
    Ok(shifted.sub(&lse)?)
}

/// One-hot matrix matching the logits layout, used to select the true-class
/// entries while keeping gradients flowing.
fn one_hot(labels: &[u32], classes: usize) -> Result<DenseTensor> {
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        data[i * classes + l as usize] = 1.0;
    }
    Ok(DenseTensor::from_vec(data, &[labels.len(), classes])?)
}

/// Per-sample log probability of the true class, shape `[batch, 1]`.
fn true_class_log_prob(logits: &DenseTensor, labels: &[u32]) -> Result<DenseTensor> {
    let logp = log_softmax(logits, 1)?;
    let hot = one_hot(labels, logits.shape()[1])?;
    Ok(logp.mul(&hot)?.sum_axis(1, true)?)
}

/// Batch-averaged cross-entropy via the log-sum-exp identity.
pub fn cross_entropy(logits: &DenseTensor, labels: &[u32]) -> Result<DenseTensor> {
    check_batch(logits, labels)?;
    let m = max_axis_detached(logits, 1)?;
    let lse = logits.sub(&m)?.exp()?.sum_axis(1, true)?.ln()?.add(&m)?;
    let hot = one_hot(labels, logits.shape()[1])?;
    let true_logit = logits.mul(&hot)?.sum_axis(1, true)?;
    Ok(lse.sub(&true_logit)?.mean_all()?)
}

/// Batch-averaged focal loss. `gamma = 0` coincides with cross-entropy;
/// larger values down-weight already-confident samples.
pub fn focal_loss(logits: &DenseTensor, labels: &[u32], gamma: f64) -> Result<DenseTensor> {
    check_batch(logits, labels)?;
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(DecoderError::Config(format!(
            "focal gamma must be finite and non-negative, got {gamma}"
        )));
    }
    let logp_t = true_class_log_prob(logits, labels)?;
    let p_t = logp_t.exp()?;
    // Clamp the base at zero: rounding can push p_t a hair above one.
    let damp = DenseTensor::ones(p_t.shape())
        .sub(&p_t)?
        .relu()?
        .pow_scalar(gamma)?;
    Ok(damp.mul(&logp_t.neg()?)?.mean_all()?)
}
