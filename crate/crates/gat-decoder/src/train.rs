//! Training loop, evaluation, and metrics serialization for the decoder.

use crate::embed::EmbeddingStack;
use crate::error::{DecoderError, Result};
use crate::loss::LossKind;
use crate::model::{DecoderConfig, GatDecoder};
use attention::AttentionMap;
use tensor_core::RngState;

/// Optimization settings. The defaults train with focal loss and
/// decoupled weight decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub loss: LossKind,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            epochs: 35,
            learning_rate: 1e-4,
            weight_decay: 0.1,
            batch_size: 8,
            loss: LossKind::Focal { gamma: 2.5 },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(DecoderError::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(DecoderError::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(DecoderError::Config(format!(
                "weight decay must be finite and non-negative, got {}",
                self.weight_decay
            )));
        }
        if let LossKind::Focal { gamma } = self.loss {
            if !(gamma.is_finite() && gamma >= 0.0) {
                return Err(DecoderError::Config(format!(
                    "focal exponent must be finite and non-negative, got {gamma}"
                )));
            }
        }
        Ok(())
    }
}

/// One row of the training history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// Result of a training run. `aborted_at` is set when an epoch produced a
/// non-finite value; the model is then rolled back to the end of the last
/// healthy epoch and `history` stops there.
pub struct TrainOutcome {
    pub model: GatDecoder,
    pub history: Vec<EpochMetrics>,
    pub aborted_at: Option<usize>,
}

/// Predictions over a dataset plus the per-sample attention maps.
pub struct Evaluation {
    pub accuracy: f64,
    pub predictions: Vec<u32>,
    pub maps: Vec<AttentionMap>,
}

fn check_dataset(name: &str, data: &[EmbeddingStack], config: &DecoderConfig) -> Result<()> {
    if data.is_empty() {
        return Err(DecoderError::Data(format!("{name} set is empty")));
    }
    for (i, stack) in data.iter().enumerate() {
        if stack.num_layers() != config.num_layers || stack.dim() != config.dim {
            return Err(DecoderError::Data(format!(
                "{name} sample {i} is {}x{}x{} but the model expects {} layers of width {}",
                stack.num_layers(),
                stack.time_steps(),
                stack.dim(),
                config.num_layers,
                config.dim
            )));
        }
        if stack.label as usize >= config.num_classes {
            return Err(DecoderError::Data(format!(
                "{name} sample {i} has label {} but the model has {} classes",
                stack.label, config.num_classes
            )));
        }
    }
    Ok(())
}

/// Train a fresh decoder. Sample order is reshuffled every epoch from the
/// seed, so equal seeds give bitwise-equal runs. A non-finite value inside
/// an epoch rolls the model back to the last epoch boundary and returns
/// with `aborted_at` set instead of failing.
pub fn train(
    train_set: &[EmbeddingStack],
    val_set: &[EmbeddingStack],
    model_config: &DecoderConfig,
    train_config: &TrainConfig,
) -> Result<TrainOutcome> {
    model_config.validate()?;
    train_config.validate()?;
    check_dataset("train", train_set, model_config)?;
    check_dataset("validation", val_set, model_config)?;

    let mut rng = RngState::new(train_config.seed);
    let mut model = GatDecoder::new(model_config, &mut rng)?;
    let mut checkpoint = model.snapshot();
    let mut history = Vec::with_capacity(train_config.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=train_config.epochs {
        rng.shuffle(&mut order);
        match run_epoch(&mut model, train_set, val_set, &order, train_config) {
            Ok((train_loss, val_accuracy)) => {
                checkpoint = model.snapshot();
                history.push(EpochMetrics {
                    epoch,
                    train_loss,
                    val_accuracy,
                });
            }
            Err(err) if err.is_numeric() => {
                model.restore(&checkpoint)?;
                return Ok(TrainOutcome {
                    model,
                    history,
                    aborted_at: Some(epoch),
                });
            }
            Err(err) => return Err(err),
        }
    }

    Ok(TrainOutcome {
        model,
        history,
        aborted_at: None,
    })
}

fn run_epoch(
    model: &mut GatDecoder,
    train_set: &[EmbeddingStack],
    val_set: &[EmbeddingStack],
    order: &[usize],
    train_config: &TrainConfig,
) -> Result<(f64, f64)> {
    let mut loss_sum = 0.0;
    for batch in order.chunks(train_config.batch_size) {
        let stacks: Vec<&EmbeddingStack> = batch.iter().map(|&i| &train_set[i]).collect();
        let labels: Vec<u32> = stacks.iter().map(|s| s.label).collect();
        model.store().zero_grads();
        let (logits, _) = model.forward_batch(&stacks)?;
        let loss = train_config.loss.compute(&logits, &labels)?;
        loss.backward()?;
        model
            .store_mut()
            .adam_step(train_config.learning_rate, train_config.weight_decay)?;
        loss_sum += loss.to_vec()[0] * batch.len() as f64;
    }
    let train_loss = loss_sum / order.len() as f64;
    let val = evaluate(model, val_set)?;
    Ok((train_loss, val.accuracy))
}

/// Run the model over a dataset. The predicted class is the argmax of the
/// logits, lower index winning ties.
pub fn evaluate(model: &GatDecoder, data: &[EmbeddingStack]) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(DecoderError::Data("cannot evaluate an empty set".into()));
    }
    let mut predictions = Vec::with_capacity(data.len());
    let mut maps = Vec::with_capacity(data.len());
    let mut correct = 0usize;
    for stack in data {
        let (logits, map) = model.forward_stack(stack)?;
        let row = logits.to_vec();
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(DecoderError::Tensor(tensor_core::TensorError::Numeric(
                format!("non-finite logit {bad}"),
            )));
        }
        let mut best = 0usize;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        if best as u32 == stack.label {
            correct += 1;
        }
        predictions.push(best as u32);
        maps.push(map);
    }
    Ok(Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        predictions,
        maps,
    })
}

/// Render a training history as CSV with a fixed six-decimal format.
pub fn metrics_to_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,val_accuracy\n");
    for m in history {
        out.push_str(&format!(
            "{},{:.6},{:.6}\n",
            m.epoch, m.train_loss, m.val_accuracy
        ));
    }
    out
}
