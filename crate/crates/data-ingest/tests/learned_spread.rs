//! Trains the single-head Gaussian decoder on two synthetic profiles and
//! checks a qualitative property of the learned offsets: data with strong
//! regime variance (speech-like) drives the per-feature offsets further
//! apart than near-stationary data (vision-like).

use data_ingest::{generate, split, RegimeSpec};
use gat_decoder::{train, AttentionKind, DecoderConfig, LossKind, TrainConfig};

fn profile(noise_scale: f64, multiplier: f64, seed: u64) -> RegimeSpec {
    RegimeSpec {
        num_classes: 2,
        num_layers: 4,
        time_steps: 8,
        dim: 16,
        informative_layers: vec![1],
        mean_shifts: vec![-1.5, 1.5],
        var_multipliers: vec![multiplier, multiplier],
        noise_scale,
        num_samples: 64,
        seed,
    }
}

fn offset_spread(spec: &RegimeSpec, seed: u64) -> f64 {
    let samples = generate(spec).unwrap();
    let (train_set, val_set) = split(&samples, 0.75, seed).unwrap();
    let config = DecoderConfig {
        attention: AttentionKind::GaamV2,
        num_layers: 4,
        dim: 16,
        num_classes: 2,
        conv_channels: (2, 3),
    };
    let tcfg = TrainConfig {
        epochs: 6,
        learning_rate: 0.01,
        weight_decay: 0.0,
        batch_size: 8,
        loss: LossKind::CrossEntropy,
        seed,
    };
    let outcome = train(&train_set, &val_set, &config, &tcfg).unwrap();
    assert!(outcome.aborted_at.is_none());
    let delta = outcome
        .model
        .store()
        .get("attn.h0.delta")
        .expect("offset parameter")
        .to_vec();
    let lo = delta.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = delta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

#[test]
fn regime_variance_widens_the_learned_offsets() {
    let seeds = [101u64, 202, 303, 404, 505];
    let mut speech = Vec::new();
    let mut vision = Vec::new();
    for &seed in &seeds {
        speech.push(offset_spread(&profile(1.0, 4.0, seed), seed));
        vision.push(offset_spread(&profile(0.1, 1.0, seed), seed));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (s, v) = (mean(&speech), mean(&vision));
    assert!(
        s > v,
        "speech-like spreads {speech:?} (mean {s}) should exceed vision-like {vision:?} (mean {v})"
    );
}
