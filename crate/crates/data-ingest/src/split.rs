//! Deterministic class-stratified train/validation splitting.

use crate::error::{IngestError, Result};
use gat_decoder::EmbeddingStack;
use std::collections::BTreeMap;
use tensor_core::RngState;

/// Split `samples` into train and validation sets, stratified by label:
/// each class is shuffled on its own and contributes `round(n * fraction)`
/// train samples, clamped so both sides keep at least one. Sample order in
/// the outputs follows the original order.
pub fn split(
    samples: &[EmbeddingStack],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<EmbeddingStack>, Vec<EmbeddingStack>)> {
    if !(fraction.is_finite() && fraction > 0.0 && fraction < 1.0) {
        return Err(IngestError::Spec(format!(
            "train fraction must lie strictly between 0 and 1, got {fraction}"
        )));
    }
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_class.entry(s.label).or_default().push(i);
    }
    if by_class.is_empty() {
        return Err(IngestError::Spec("cannot split an empty sample list".into()));
    }

    let mut rng = RngState::new(seed);
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for (label, mut indices) in by_class {
        let n = indices.len();
        if n < 2 {
            return Err(IngestError::Spec(format!(
                "class {label} has only {n} sample(s); need at least 2 to split"
            )));
        }
        let take = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
        rng.shuffle(&mut indices);
        train_idx.extend_from_slice(&indices[..take]);
        val_idx.extend_from_slice(&indices[take..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();

    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect();
    Ok((pick(&train_idx), pick(&val_idx)))
}
