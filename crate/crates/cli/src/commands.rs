//! The six subcommands: dataset generation, training, evaluation,
//! heatmap export, layer ablation, and parameter accounting.

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use gat_decoder::{
    evaluate, metrics_to_csv, train, AttentionKind, DecoderConfig, EmbeddingStack,
    LoadedCheckpoint, TrainConfig,
};
use importance_factor::{
    average_maps, export_heatmap, importance_factor, layer_contribution, select_layers,
    HeatmapFormat, SelectionMode,
};
use std::path::{Path, PathBuf};

/// Which end of the contribution ranking the ablation retrains on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblateMode {
    High,
    Low,
    Both,
}

fn read_dataset(path: &Path) -> Result<Vec<EmbeddingStack>> {
    data_ingest::read_embeddings(path)
        .map_err(|e| CliError::Io(format!("cannot read dataset {}: {e}", path.display())))
}

fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    gat_decoder::load(path)
        .map_err(|e| CliError::Io(format!("cannot load checkpoint {}: {e}", path.display())))
}

/// Reject data whose geometry or labels disagree with the model.
fn check_compatible(samples: &[EmbeddingStack], config: &DecoderConfig) -> Result<()> {
    if samples.is_empty() {
        return Err(CliError::Config("the dataset is empty".into()));
    }
    for s in samples {
        if s.num_layers() != config.num_layers || s.dim() != config.dim {
            return Err(CliError::Config(format!(
                "data/model mismatch: sample {} is {} layers x {} dims but the model \
                 expects {} layers x {} dims",
                s.source,
                s.num_layers(),
                s.dim(),
                config.num_layers,
                config.dim
            )));
        }
        if s.label as usize >= config.num_classes {
            return Err(CliError::Config(format!(
                "data/model mismatch: sample {} has label {} but the model has {} classes",
                s.source, s.label, config.num_classes
            )));
        }
    }
    Ok(())
}

fn check_time_steps(samples: &[EmbeddingStack], expected: Option<usize>) -> Result<()> {
    let Some(t) = expected else {
        return Ok(());
    };
    for s in samples {
        if s.time_steps() != t {
            return Err(CliError::Config(format!(
                "data/config mismatch: sample {} has {} time steps but the config says T = {t}",
                s.source,
                s.time_steps()
            )));
        }
    }
    Ok(())
}

fn write_file(path: &Path, content: &str, what: &str) -> Result<()> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Io(format!("cannot write {what} {}: {e}", path.display())))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

/// Parameter counts grouped by component, from shapes alone.
fn layout_param_counts(config: &DecoderConfig) -> (u64, u64) {
    let mut attention = 0u64;
    let mut total = 0u64;
    for (name, shape) in config.param_layout() {
        let count: u64 = shape.iter().map(|&e| e as u64).product();
        if name.starts_with("attn.") {
            attention += count;
        }
        total += count;
    }
    (attention, total)
}

fn class_histogram(samples: &[EmbeddingStack], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; num_classes];
    for s in samples {
        counts[s.label as usize] += 1;
    }
    counts
}

pub fn cmd_generate(spec_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = RunConfig::load(spec_path)?;
    let spec = cfg.regime_spec()?;
    let out = cfg.resolve_path(out, "out")?;

    let samples = data_ingest::generate(&spec).map_err(CliError::from_ingest)?;
    data_ingest::write_embeddings(&samples, &out)
        .map_err(|e| CliError::Io(format!("cannot write dataset {}: {e}", out.display())))?;

    println!(
        "wrote {} samples to {} ({} layers x {} steps x {} dims)",
        samples.len(),
        out.display(),
        spec.num_layers,
        spec.time_steps,
        spec.dim
    );
    println!("class histogram:");
    for (class, count) in class_histogram(&samples, spec.num_classes).iter().enumerate() {
        println!("  class {class}: {count}");
    }
    Ok(())
}

pub fn cmd_train(config_path: &Path, data: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let cfg = RunConfig::load(config_path)?;
    let dcfg = cfg.decoder_config()?;
    let tcfg = cfg.train_config()?;
    let fraction = cfg.train_fraction()?;
    let data_path = cfg.resolve_path(data, "data")?;
    let out_path = cfg.resolve_path(out, "out")?;

    let samples = read_dataset(&data_path)?;
    check_compatible(&samples, &dcfg)?;
    check_time_steps(&samples, cfg.time_steps()?)?;
    let (train_set, val_set) =
        data_ingest::split(&samples, fraction, tcfg.seed).map_err(CliError::from_ingest)?;

    let (attention_params, total_params) = layout_param_counts(&dcfg);
    println!(
        "training a {} decoder: {} layers x {} dims, {} classes",
        dcfg.attention.name(),
        dcfg.num_layers,
        dcfg.dim,
        dcfg.num_classes
    );
    println!("attention parameters: {attention_params} ({total_params} total)");
    println!(
        "split: {} train / {} validation samples",
        train_set.len(),
        val_set.len()
    );

    let outcome = train(&train_set, &val_set, &dcfg, &tcfg).map_err(CliError::from_decoder)?;
    for m in &outcome.history {
        println!(
            "epoch {}: train loss {:.6}, validation accuracy {:.6}",
            m.epoch, m.train_loss, m.val_accuracy
        );
    }

    gat_decoder::save(&outcome.model, &tcfg, &out_path)
        .map_err(|e| CliError::Io(format!("cannot write checkpoint {}: {e}", out_path.display())))?;
    let metrics_path = with_suffix(&out_path, ".metrics.csv");
    write_file(&metrics_path, &metrics_to_csv(&outcome.history), "metrics")?;
    println!("checkpoint: {}", out_path.display());
    println!("metrics: {}", metrics_path.display());

    if let Some(epoch) = outcome.aborted_at {
        return Err(CliError::Numeric(format!(
            "training aborted at epoch {epoch}: the loss became non-finite; \
             the checkpoint holds the last finished epoch"
        )));
    }
    Ok(())
}

pub fn cmd_eval(checkpoint: &Path, data: &Path, predictions_out: Option<PathBuf>) -> Result<()> {
    let loaded = load_checkpoint(checkpoint)?;
    let samples = read_dataset(data)?;
    check_compatible(&samples, loaded.model.config())?;

    let eval = evaluate(&loaded.model, &samples).map_err(CliError::from_decoder)?;
    let correct = eval
        .predictions
        .iter()
        .zip(&samples)
        .filter(|(p, s)| **p == s.label)
        .count();
    println!(
        "accuracy: {:.6} ({correct}/{} correct)",
        eval.accuracy,
        samples.len()
    );

    if let Some(path) = predictions_out {
        let mut csv = String::from("sample_id,prediction,label\n");
        for (pred, s) in eval.predictions.iter().zip(&samples) {
            csv.push_str(&format!("{},{pred},{}\n", s.source, s.label));
        }
        write_file(&path, &csv, "predictions")?;
        println!("predictions: {}", path.display());
    }
    Ok(())
}

pub fn cmd_heatmap(
    checkpoint: &Path,
    data: &Path,
    out_prefix: &Path,
    format: HeatmapFormat,
) -> Result<()> {
    let loaded = load_checkpoint(checkpoint)?;
    let samples = read_dataset(data)?;
    check_compatible(&samples, loaded.model.config())?;

    let eval = evaluate(&loaded.model, &samples).map_err(CliError::from_decoder)?;
    let average = average_maps(&eval.maps).map_err(CliError::from_importance)?;
    let ifmap = importance_factor(&average);
    if ifmap.degenerate {
        println!("note: the averaged attention map is constant, so the heatmap is all zeros");
    }

    let extension = match format {
        HeatmapFormat::Csv => ".csv",
        HeatmapFormat::Pgm => ".pgm",
    };
    let path = with_suffix(out_prefix, extension);
    export_heatmap(&ifmap, &path, format).map_err(CliError::from_importance)?;
    println!("heatmap: {}", path.display());

    match layer_contribution(&ifmap) {
        Ok(contrib) => {
            println!("layer contributions:");
            for (layer, pct) in contrib.percentages().iter().enumerate() {
                println!("  layer {layer}: {pct:.2}%");
            }
        }
        Err(_) => println!("layer contributions unavailable: the importance map is all zeros"),
    }
    Ok(())
}

pub fn cmd_ablate(checkpoint: &Path, data: &Path, k: usize, mode: AblateMode) -> Result<()> {
    let loaded = load_checkpoint(checkpoint)?;
    let samples = read_dataset(data)?;
    let config = *loaded.model.config();
    check_compatible(&samples, &config)?;
    if k == 0 {
        return Err(CliError::Config("k must be at least 1".into()));
    }
    if k > config.num_layers {
        return Err(CliError::Config(format!(
            "k = {k} exceeds the {} layers the model was trained on",
            config.num_layers
        )));
    }

    let eval = evaluate(&loaded.model, &samples).map_err(CliError::from_decoder)?;
    let average = average_maps(&eval.maps).map_err(CliError::from_importance)?;
    let contrib =
        layer_contribution(&importance_factor(&average)).map_err(CliError::from_importance)?;

    let selections = match mode {
        AblateMode::High => vec![SelectionMode::Highest],
        AblateMode::Low => vec![SelectionMode::Lowest],
        AblateMode::Both => vec![SelectionMode::Highest, SelectionMode::Lowest],
    };
    println!(
        "ablation: retraining on {k} of {} layers, chosen by importance contribution",
        config.num_layers
    );
    for selection in selections {
        let chosen =
            select_layers(&contrib, k, selection).map_err(CliError::from_importance)?;
        let accuracy = retrain_on_layers(&samples, &config, &loaded.train_config, &chosen)?;
        let list = chosen
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        println!(
            "  {}-contribution layers [{list}]: validation accuracy {accuracy:.6}",
            selection.name()
        );
    }
    Ok(())
}

/// Train a fresh decoder on just the chosen layers and report its final
/// validation accuracy. The subset keeps the original layer order no
/// matter how the selection was ranked.
fn retrain_on_layers(
    samples: &[EmbeddingStack],
    config: &DecoderConfig,
    tcfg: &TrainConfig,
    chosen: &[usize],
) -> Result<f64> {
    let mut keep = chosen.to_vec();
    keep.sort_unstable();
    let subset = samples
        .iter()
        .map(|s| s.retain_layers(&keep))
        .collect::<gat_decoder::Result<Vec<_>>>()
        .map_err(CliError::from_decoder)?;
    let sub_config = DecoderConfig {
        num_layers: keep.len(),
        ..*config
    };
    let (train_set, val_set) =
        data_ingest::split(&subset, 0.8, tcfg.seed).map_err(CliError::from_ingest)?;
    let outcome = train(&train_set, &val_set, &sub_config, tcfg).map_err(CliError::from_decoder)?;
    if let Some(epoch) = outcome.aborted_at {
        return Err(CliError::Numeric(format!(
            "retraining aborted at epoch {epoch}: the loss became non-finite"
        )));
    }
    outcome
        .history
        .last()
        .map(|m| m.val_accuracy)
        .ok_or_else(|| CliError::Config("training ran for zero epochs".into()))
}

pub fn cmd_paramcount(config_path: &Path) -> Result<()> {
    let cfg = RunConfig::load(config_path)?;
    let dcfg = cfg.decoder_config()?;

    let mut attention = 0u64;
    let mut gaussian_stage = 0u64;
    let mut grouped_stage = 0u64;
    let mut convolution = 0u64;
    let mut classifier = 0u64;
    for (name, shape) in dcfg.param_layout() {
        let count: u64 = shape.iter().map(|&e| e as u64).product();
        if name.starts_with("attn.") {
            attention += count;
            if name.starts_with("attn.gaam.") {
                gaussian_stage += count;
            } else if name.starts_with("attn.gqa.") {
                grouped_stage += count;
            }
        } else if name.starts_with("conv") {
            convolution += count;
        } else {
            classifier += count;
        }
    }

    println!(
        "parameter counts for a {} decoder ({} layers x {} dims, {} classes):",
        dcfg.attention.name(),
        dcfg.num_layers,
        dcfg.dim,
        dcfg.num_classes
    );
    println!("  {:<12}{}", "attention", attention);
    if dcfg.attention == AttentionKind::Gqgaam {
        println!("    {:<20}{}", "gaussian stage", gaussian_stage);
        println!("    {:<20}{}", "grouped-query stage", grouped_stage);
    }
    println!("  {:<12}{}", "convolution", convolution);
    println!("  {:<12}{}", "classifier", classifier);
    println!("  {:<12}{}", "total", attention + convolution + classifier);
    Ok(())
}
