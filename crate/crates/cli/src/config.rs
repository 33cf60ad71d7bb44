//! Flat key-value run configuration shared by every command.
//!
//! The file format is one `key = value` per line; blank lines and lines
//! starting with `#` are skipped. Unknown and duplicate keys are rejected,
//! and every present value is validated on load so a bad file fails
//! before any work starts.

use crate::error::{CliError, Result};
use data_ingest::RegimeSpec;
use gat_decoder::{AttentionKind, DecoderConfig, LossKind, TrainConfig, MIXTURE_COMPONENTS, WIDE_HEADS};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Every key a configuration file may contain. Architecture and training
/// keys feed the decoder; the layer/shift/multiplier family describes a
/// synthetic dataset; `data` and `out` are fallback paths for the
/// matching flags.
const KNOWN_KEYS: &[&str] = &[
    "attention",
    "g",
    "num_gaussians",
    "combine_mode",
    "N",
    "T",
    "d",
    "num_classes",
    "epochs",
    "lr",
    "weight_decay",
    "batch_size",
    "loss",
    "gamma",
    "seed",
    "informative_layers",
    "mean_shifts",
    "var_multipliers",
    "noise_scale",
    "num_samples",
    "train_fraction",
    "data",
    "out",
];

const COMBINE_MODES: &[&str] = &["stack_rows", "concat_features", "split_subspaces"];

fn config_err(message: String) -> CliError {
    CliError::Config(message)
}

/// Parsed key-value configuration with typed, validated accessors.
#[derive(Clone, Debug)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let config = Self::parse(&text)?;
        config.check_all()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(config_err(format!(
                    "line {}: expected key = value, got {raw:?}",
                    i + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(config_err(format!(
                    "line {}: empty key or value in {raw:?}",
                    i + 1
                )));
            }
            if !KNOWN_KEYS.contains(&key) {
                return Err(config_err(format!("line {}: unknown key {key:?}", i + 1)));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(config_err(format!("line {}: duplicate key {key:?}", i + 1)));
            }
        }
        Ok(Self { values })
    }

    /// Validate every key that is present, regardless of which command
    /// will consume it.
    fn check_all(&self) -> Result<()> {
        for key in self.values.keys() {
            match key.as_str() {
                "attention" => {
                    self.attention_kind()?;
                }
                "g" | "num_gaussians" | "N" | "T" | "d" | "num_classes" | "epochs"
                | "batch_size" | "num_samples" => {
                    self.positive_usize(key)?;
                }
                "combine_mode" => {
                    self.combine_mode()?;
                }
                "lr" | "weight_decay" | "gamma" | "noise_scale" => {
                    self.non_negative_f64(key)?;
                }
                "seed" => {
                    self.seed_value()?;
                }
                "loss" => {
                    self.loss_name()?;
                }
                "informative_layers" => {
                    self.usize_list(key)?;
                }
                "mean_shifts" => {
                    self.f64_list(key)?;
                }
                "var_multipliers" => {
                    for v in self.f64_list(key)?.unwrap_or_default() {
                        if v <= 0.0 {
                            return Err(config_err(format!(
                                "key {key}: multipliers must be positive, got {v}"
                            )));
                        }
                    }
                }
                "train_fraction" => {
                    self.train_fraction()?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| config_err(format!("missing required key {key:?}")))
    }

    // ---- typed accessors ----

    fn positive_usize(&self, key: &str) -> Result<Option<usize>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(config_err(format!(
                "key {key}: expected a positive integer, got {v:?}"
            ))),
        }
    }

    fn require_usize(&self, key: &str) -> Result<usize> {
        self.require(key)?;
        Ok(self.positive_usize(key)?.expect("key was just required"))
    }

    fn non_negative_f64(&self, key: &str) -> Result<Option<f64>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() && x >= 0.0 => Ok(Some(x)),
            _ => Err(config_err(format!(
                "key {key}: expected a finite non-negative number, got {v:?}"
            ))),
        }
    }

    fn require_f64(&self, key: &str) -> Result<f64> {
        self.require(key)?;
        Ok(self.non_negative_f64(key)?.expect("key was just required"))
    }

    fn seed_value(&self) -> Result<Option<u64>> {
        let Some(v) = self.get("seed") else {
            return Ok(None);
        };
        v.parse::<u64>().map(Some).map_err(|_| {
            config_err(format!("key seed: expected an unsigned integer, got {v:?}"))
        })
    }

    fn require_seed(&self) -> Result<u64> {
        self.require("seed")?;
        Ok(self.seed_value()?.expect("key was just required"))
    }

    fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|part| {
                part.trim().parse::<usize>().map_err(|_| {
                    config_err(format!(
                        "key {key}: expected comma-separated indices, got {v:?}"
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|part| match part.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(config_err(format!(
                    "key {key}: expected comma-separated finite numbers, got {v:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn require_list_f64(&self, key: &str) -> Result<Vec<f64>> {
        self.require(key)?;
        Ok(self.f64_list(key)?.expect("key was just required"))
    }

    fn attention_kind(&self) -> Result<Option<AttentionKind>> {
        match self.get("attention") {
            None => Ok(None),
            Some(v) => AttentionKind::parse(v)
                .map(Some)
                .map_err(CliError::from_decoder),
        }
    }

    fn combine_mode(&self) -> Result<Option<&str>> {
        match self.get("combine_mode") {
            None => Ok(None),
            Some(v) if COMBINE_MODES.contains(&v) => Ok(Some(v)),
            Some(v) => Err(config_err(format!(
                "key combine_mode: expected one of {}, got {v:?}",
                COMBINE_MODES.join(", ")
            ))),
        }
    }

    fn loss_name(&self) -> Result<Option<&str>> {
        match self.get("loss") {
            None => Ok(None),
            Some(v @ ("focal" | "cross_entropy")) => Ok(Some(v)),
            Some(v) => Err(config_err(format!(
                "key loss: expected focal or cross_entropy, got {v:?}"
            ))),
        }
    }

    pub fn time_steps(&self) -> Result<Option<usize>> {
        self.positive_usize("T")
    }

    pub fn train_fraction(&self) -> Result<f64> {
        let Some(v) = self.get("train_fraction") else {
            return Ok(0.8);
        };
        match v.parse::<f64>() {
            Ok(f) if f.is_finite() && f > 0.0 && f < 1.0 => Ok(f),
            _ => Err(config_err(format!(
                "key train_fraction: expected a number strictly between 0 and 1, got {v:?}"
            ))),
        }
    }

    /// A path from a command-line flag, falling back to the config key of
    /// the same name.
    pub fn resolve_path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        flag.or_else(|| self.get(key).map(PathBuf::from))
            .ok_or_else(|| config_err(format!("missing required key {key:?} (or --{key} flag)")))
    }

    // ---- builders ----

    /// Decoder architecture from `attention`, `N`, `d`, and `num_classes`.
    /// The optional `g`, `num_gaussians`, and `combine_mode` keys must
    /// agree with the fixed layout of the chosen attention kind.
    pub fn decoder_config(&self) -> Result<DecoderConfig> {
        self.require("attention")?;
        let kind = self.attention_kind()?.expect("key was just required");
        let num_layers = self.require_usize("N")?;
        let dim = self.require_usize("d")?;
        let num_classes = self.require_usize("num_classes")?;
        self.check_architecture_keys(kind)?;
        let config = DecoderConfig::new(kind, num_layers, dim, num_classes);
        config.validate().map_err(CliError::from_decoder)?;
        Ok(config)
    }

    fn check_architecture_keys(&self, kind: AttentionKind) -> Result<()> {
        if let Some(g) = self.positive_usize("g")? {
            match heads_for(kind) {
                Some(expected) if expected == g => {}
                Some(expected) => {
                    return Err(config_err(format!(
                        "key g: {} uses {expected} head(s), got {g}",
                        kind.name()
                    )));
                }
                None => {
                    return Err(config_err(format!(
                        "key g does not apply to {}",
                        kind.name()
                    )));
                }
            }
        }
        if let Some(n) = self.positive_usize("num_gaussians")? {
            match gaussians_for(kind) {
                Some(expected) if expected == n => {}
                Some(expected) => {
                    return Err(config_err(format!(
                        "key num_gaussians: {} uses {expected} component(s) per head, got {n}",
                        kind.name()
                    )));
                }
                None => {
                    return Err(config_err(format!(
                        "key num_gaussians does not apply to {}",
                        kind.name()
                    )));
                }
            }
        }
        if let Some(mode) = self.combine_mode()? {
            match combine_for(kind) {
                Some(expected) if expected == mode => {}
                Some(expected) => {
                    return Err(config_err(format!(
                        "key combine_mode: {} combines heads by {expected}, got {mode}",
                        kind.name()
                    )));
                }
                None => {
                    return Err(config_err(format!(
                        "key combine_mode does not apply to {}",
                        kind.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Training settings; only `seed` is required, everything else has a
    /// default.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut tc = TrainConfig::new(self.require_seed()?);
        if let Some(epochs) = self.positive_usize("epochs")? {
            tc.epochs = epochs;
        }
        if let Some(lr) = self.non_negative_f64("lr")? {
            tc.learning_rate = lr;
        }
        if let Some(wd) = self.non_negative_f64("weight_decay")? {
            tc.weight_decay = wd;
        }
        if let Some(batch) = self.positive_usize("batch_size")? {
            tc.batch_size = batch;
        }
        match self.loss_name()? {
            None | Some("focal") => {
                if let Some(gamma) = self.non_negative_f64("gamma")? {
                    tc.loss = LossKind::Focal { gamma };
                }
            }
            Some(_) => {
                if self.get("gamma").is_some() {
                    return Err(config_err(
                        "key gamma only applies to the focal loss".into(),
                    ));
                }
                tc.loss = LossKind::CrossEntropy;
            }
        }
        tc.validate().map_err(CliError::from_decoder)?;
        Ok(tc)
    }

    /// A synthetic dataset recipe; all generator keys are required.
    pub fn regime_spec(&self) -> Result<RegimeSpec> {
        self.require("informative_layers")?;
        let spec = RegimeSpec {
            num_classes: self.require_usize("num_classes")?,
            num_layers: self.require_usize("N")?,
            time_steps: self.require_usize("T")?,
            dim: self.require_usize("d")?,
            informative_layers: self
                .usize_list("informative_layers")?
                .expect("key was just required"),
            mean_shifts: self.require_list_f64("mean_shifts")?,
            var_multipliers: self.require_list_f64("var_multipliers")?,
            noise_scale: self.require_f64("noise_scale")?,
            num_samples: self.require_usize("num_samples")?,
            seed: self.require_seed()?,
        };
        spec.validate().map_err(CliError::from_ingest)?;
        Ok(spec)
    }
}

fn heads_for(kind: AttentionKind) -> Option<usize> {
    match kind {
        AttentionKind::Mha | AttentionKind::GaamV1 | AttentionKind::Gqgaam => Some(WIDE_HEADS),
        AttentionKind::GaamV2 | AttentionKind::Mixture | AttentionKind::GaussianBlock => Some(1),
        AttentionKind::Gct => None,
    }
}

fn gaussians_for(kind: AttentionKind) -> Option<usize> {
    match kind {
        AttentionKind::GaamV1 | AttentionKind::GaamV2 | AttentionKind::Gqgaam => Some(1),
        AttentionKind::Mixture | AttentionKind::GaussianBlock => Some(MIXTURE_COMPONENTS),
        AttentionKind::Mha | AttentionKind::Gct => None,
    }
}

fn combine_for(kind: AttentionKind) -> Option<&'static str> {
    match kind {
        AttentionKind::GaamV1
        | AttentionKind::GaamV2
        | AttentionKind::Gqgaam
        | AttentionKind::Mixture => Some("stack_rows"),
        AttentionKind::GaussianBlock => Some("split_subspaces"),
        AttentionKind::Mha | AttentionKind::Gct => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> RunConfig {
        let config = RunConfig::parse(text).unwrap();
        config.check_all().unwrap();
        config
    }

    fn parse_err(text: &str) -> String {
        match RunConfig::parse(text).and_then(|c| c.check_all().map(|_| c)) {
            Ok(_) => panic!("expected the config to be rejected"),
            Err(e) => e.to_string(),
        }
    }

    #[test]
    fn comments_blanks_and_spacing_are_tolerated() {
        let config = parse("# a comment\n\n  attention = gaam_v2  \nseed=7\n");
        assert_eq!(config.get("attention"), Some("gaam_v2"));
        assert_eq!(config.require_seed().unwrap(), 7);
    }

    #[test]
    fn unknown_duplicate_and_malformed_keys_are_rejected() {
        assert!(parse_err("attentoin = mha\n").contains("unknown key"));
        assert!(parse_err("seed = 1\nseed = 2\n").contains("duplicate key"));
        assert!(parse_err("just some words\n").contains("expected key = value"));
        assert!(parse_err("seed =\n").contains("empty key or value"));
    }

    #[test]
    fn values_are_validated_on_load() {
        assert!(parse_err("d = -3\n").contains("positive integer"));
        assert!(parse_err("lr = nope\n").contains("non-negative number"));
        assert!(parse_err("seed = -1\n").contains("unsigned integer"));
        assert!(parse_err("loss = hinge\n").contains("focal or cross_entropy"));
        assert!(parse_err("combine_mode = diagonal\n").contains("expected one of"));
        assert!(parse_err("var_multipliers = 1.0,0.0\n").contains("must be positive"));
        assert!(parse_err("train_fraction = 1.5\n").contains("between 0 and 1"));
        assert!(parse_err("attention = gamm\n").contains("unknown attention kind"));
    }

    #[test]
    fn missing_required_keys_are_named() {
        let config = parse("attention = mha\nd = 64\nnum_classes = 4\n");
        let err = config.decoder_config().unwrap_err().to_string();
        assert!(err.contains("\"N\""), "{err}");
        let err = config.train_config().unwrap_err().to_string();
        assert!(err.contains("\"seed\""), "{err}");
        let err = config.regime_spec().unwrap_err().to_string();
        assert!(err.contains("\"informative_layers\""), "{err}");
    }

    #[test]
    fn decoder_config_is_assembled_and_validated() {
        let config = parse("attention = gaam_v1\nN = 8\nd = 64\nnum_classes = 4\nseed = 1\n");
        let dcfg = config.decoder_config().unwrap();
        assert_eq!(dcfg.attention, AttentionKind::GaamV1);
        assert_eq!((dcfg.num_layers, dcfg.dim, dcfg.num_classes), (8, 64, 4));

        let bad = parse("attention = mha\nN = 8\nd = 63\nnum_classes = 4\n");
        assert!(bad.decoder_config().is_err());
    }

    #[test]
    fn architecture_keys_must_agree_with_the_kind() {
        let ok = parse(
            "attention = gaam_v1\nN = 4\nd = 32\nnum_classes = 2\n\
             g = 8\nnum_gaussians = 1\ncombine_mode = stack_rows\n",
        );
        assert!(ok.decoder_config().is_ok());

        let wrong_g = parse("attention = gaam_v2\nN = 4\nd = 32\nnum_classes = 2\ng = 8\n");
        assert!(wrong_g.decoder_config().unwrap_err().to_string().contains("1 head"));

        let wrong_mix = parse(
            "attention = mixture\nN = 4\nd = 32\nnum_classes = 2\nnum_gaussians = 2\n",
        );
        assert!(wrong_mix
            .decoder_config()
            .unwrap_err()
            .to_string()
            .contains("3 component"));

        let wrong_mode = parse(
            "attention = gaussian_block\nN = 4\nd = 32\nnum_classes = 2\n\
             combine_mode = stack_rows\n",
        );
        assert!(wrong_mode
            .decoder_config()
            .unwrap_err()
            .to_string()
            .contains("split_subspaces"));

        let inapplicable = parse("attention = gct\nN = 4\nd = 32\nnum_classes = 2\ng = 1\n");
        assert!(inapplicable
            .decoder_config()
            .unwrap_err()
            .to_string()
            .contains("does not apply"));
    }

    #[test]
    fn train_config_defaults_and_overrides() {
        let config = parse("seed = 9\n");
        let tc = config.train_config().unwrap();
        assert_eq!((tc.epochs, tc.batch_size, tc.seed), (35, 8, 9));
        assert_eq!(tc.learning_rate, 1e-4);
        assert_eq!(tc.weight_decay, 0.1);
        assert_eq!(tc.loss, LossKind::Focal { gamma: 2.5 });

        let config = parse(
            "seed = 9\nepochs = 3\nlr = 0.01\nweight_decay = 0\nbatch_size = 4\n\
             loss = focal\ngamma = 1.0\n",
        );
        let tc = config.train_config().unwrap();
        assert_eq!((tc.epochs, tc.batch_size), (3, 4));
        assert_eq!(tc.loss, LossKind::Focal { gamma: 1.0 });

        let ce = parse("seed = 9\nloss = cross_entropy\n");
        assert_eq!(ce.train_config().unwrap().loss, LossKind::CrossEntropy);

        let clash = parse("seed = 9\nloss = cross_entropy\ngamma = 2.0\n");
        assert!(clash
            .train_config()
            .unwrap_err()
            .to_string()
            .contains("gamma only applies"));
    }

    #[test]
    fn regime_spec_is_assembled_and_validated() {
        let config = parse(
            "num_classes = 2\nN = 3\nT = 8\nd = 6\ninformative_layers = 0,2\n\
             mean_shifts = -1.0,1.5\nvar_multipliers = 2,2\nnoise_scale = 0.5\n\
             num_samples = 10\nseed = 42\n",
        );
        let spec = config.regime_spec().unwrap();
        assert_eq!(spec.informative_layers, vec![0, 2]);
        assert_eq!(spec.mean_shifts, vec![-1.0, 1.5]);
        assert_eq!(spec.num_samples, 10);

        let bad = parse(
            "num_classes = 2\nN = 3\nT = 8\nd = 6\ninformative_layers = 9\n\
             mean_shifts = -1.0,1.5\nvar_multipliers = 2,2\nnoise_scale = 0.5\n\
             num_samples = 10\nseed = 42\n",
        );
        assert!(bad.regime_spec().unwrap_err().to_string().contains("out of range"));
    }

    #[test]
    fn paths_prefer_flags_over_config_keys() {
        let config = parse("out = from_config.bin\nseed = 1\n");
        let flag = config
            .resolve_path(Some(PathBuf::from("from_flag.bin")), "out")
            .unwrap();
        assert_eq!(flag, PathBuf::from("from_flag.bin"));
        let fallback = config.resolve_path(None, "out").unwrap();
        assert_eq!(fallback, PathBuf::from("from_config.bin"));
        let missing = config.resolve_path(None, "data").unwrap_err();
        assert!(missing.to_string().contains("\"data\""));
    }

    #[test]
    fn config_errors_map_to_exit_code_two() {
        let err = parse("d = 64\n").decoder_config().unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
