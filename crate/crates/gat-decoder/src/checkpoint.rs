//! Binary checkpoints: a magic header, one metadata record describing the
//! architecture and training settings, then every parameter tensor in
//! canonical order. All values are little-endian f32.

use crate::error::{DecoderError, Result};
use crate::loss::LossKind;
use crate::model::{AttentionKind, DecoderConfig, GatDecoder};
use crate::train::TrainConfig;
use std::fs;
use std::path::Path;
use tensor_core::DenseTensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GATCKPT1";
const META_NAME: &str = "meta.config";
const META_VERSION: f32 = 1.0;
const META_LEN: usize = 17;

/// A checkpoint read back from disk.
pub struct LoadedCheckpoint {
    pub model: GatDecoder,
    pub train_config: TrainConfig,
}

/// Write the model and its training settings to `path`.
pub fn save(model: &GatDecoder, train_config: &TrainConfig, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    let num_records = 1 + model.store().len() as u32;
    bytes.extend_from_slice(&num_records.to_le_bytes());
    write_record(
        &mut bytes,
        META_NAME,
        &[META_LEN],
        &meta_values(model.config(), train_config),
    );
    for (name, tensor) in model.store().iter() {
        let values: Vec<f32> = tensor.to_vec().iter().map(|&v| v as f32).collect();
        write_record(&mut bytes, name, tensor.shape(), &values);
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Read a checkpoint and rebuild the model around it.
pub fn load(path: &Path) -> Result<LoadedCheckpoint> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes);
    let magic = r.take(CHECKPOINT_MAGIC.len(), "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(DecoderError::Format(format!(
            "bad magic {:?}; not a checkpoint file",
            &magic[..magic.len().min(8)]
        )));
    }
    let num_records = r.u32("record count")? as usize;
    if num_records == 0 {
        return Err(DecoderError::Format("checkpoint holds no records".into()));
    }

    let (meta_name, meta_shape, meta) = read_record(&mut r)?;
    if meta_name != META_NAME || meta_shape != [META_LEN] {
        return Err(DecoderError::Format(format!(
            "first record must be {META_NAME} with {META_LEN} values, got {meta_name} {meta_shape:?}"
        )));
    }
    let (model_config, train_config) = decode_meta(&meta)?;

    let mut params = Vec::with_capacity(num_records - 1);
    for _ in 1..num_records {
        let (name, shape, values) = read_record(&mut r)?;
        let wide: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        params.push((name, DenseTensor::parameter(wide, &shape)?));
    }
    if !r.done() {
        return Err(DecoderError::Format(format!(
            "{} trailing bytes after the last record",
            bytes.len() - r.pos
        )));
    }

    let model = GatDecoder::from_named_params(&model_config, params)?;
    Ok(LoadedCheckpoint {
        model,
        train_config,
    })
}

fn meta_values(config: &DecoderConfig, train_config: &TrainConfig) -> Vec<f32> {
    let (loss_kind, gamma) = match train_config.loss {
        LossKind::Focal { gamma } => (0.0, gamma as f32),
        LossKind::CrossEntropy => (1.0, 0.0),
    };
    let seed = train_config.seed;
    vec![
        META_VERSION,
        config.attention.index() as f32,
        config.num_layers as f32,
        config.dim as f32,
        config.num_classes as f32,
        config.conv_channels.0 as f32,
        config.conv_channels.1 as f32,
        train_config.epochs as f32,
        train_config.learning_rate as f32,
        train_config.weight_decay as f32,
        train_config.batch_size as f32,
        loss_kind,
        gamma,
        (seed & 0xffff) as f32,
        ((seed >> 16) & 0xffff) as f32,
        ((seed >> 32) & 0xffff) as f32,
        ((seed >> 48) & 0xffff) as f32,
    ]
}

fn decode_meta(meta: &[f32]) -> Result<(DecoderConfig, TrainConfig)> {
    if meta[0] != META_VERSION {
        return Err(DecoderError::Format(format!(
            "unsupported checkpoint version {}",
            meta[0]
        )));
    }
    let field = |i: usize, name: &str| -> Result<usize> {
        let v = meta[i];
        if !(v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f32) {
            return Err(DecoderError::Format(format!(
                "metadata field {name} must be a small non-negative integer, got {v}"
            )));
        }
        Ok(v as usize)
    };
    let attention = AttentionKind::from_index(field(1, "attention kind")? as u32)?;
    let model_config = DecoderConfig {
        attention,
        num_layers: field(2, "layer count")?,
        dim: field(3, "dimension")?,
        num_classes: field(4, "class count")?,
        conv_channels: (field(5, "conv channels")?, field(6, "conv channels")?),
    };
    let loss = match field(11, "loss kind")? {
        0 => LossKind::Focal {
            gamma: meta[12] as f64,
        },
        1 => LossKind::CrossEntropy,
        other => {
            return Err(DecoderError::Format(format!("unknown loss kind {other}")));
        }
    };
    let seed = field(13, "seed")? as u64
        | (field(14, "seed")? as u64) << 16
        | (field(15, "seed")? as u64) << 32
        | (field(16, "seed")? as u64) << 48;
    let train_config = TrainConfig {
        epochs: field(7, "epochs")?,
        learning_rate: meta[8] as f64,
        weight_decay: meta[9] as f64,
        batch_size: field(10, "batch size")?,
        loss,
        seed,
    };
    Ok((model_config, train_config))
}

fn write_record(bytes: &mut Vec<u8>, name: &str, shape: &[usize], values: &[f32]) {
    bytes.extend_from_slice(&(name.len() as u32).to_le_bytes());
    bytes.extend_from_slice(name.as_bytes());
    bytes.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &e in shape {
        bytes.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for &v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_record(r: &mut Reader) -> Result<(String, Vec<usize>, Vec<f32>)> {
    let name_len = r.u32("record name length")? as usize;
    let name_bytes = r.take(name_len, "record name")?;
    let name = String::from_utf8(name_bytes.to_vec())
        .map_err(|_| DecoderError::Format("record name is not valid utf-8".into()))?;
    let rank = r.u32("record rank")? as usize;
    r.check_remaining(rank * 4, "record shape")?;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u32("record extent")? as usize);
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| DecoderError::Format(format!("record shape {shape:?} overflows")))?;
    let byte_len = count
        .checked_mul(4)
        .ok_or_else(|| DecoderError::Format(format!("record shape {shape:?} overflows")))?;
    r.check_remaining(byte_len, "record values")?;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(r.f32("record value")?);
    }
    Ok((name, shape, values))
}

/// Byte-slice reader that reports the offset where data ran out.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(DecoderError::Format(format!(
                "file truncated at byte {}: needed {n} more bytes for {what}",
                self.bytes.len()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    /// Bounds check without consuming, so a corrupt length field fails
    /// before any allocation sized from it.
    fn check_remaining(&self, n: usize, what: &str) -> Result<()> {
        if self.pos.saturating_add(n) > self.bytes.len() {
            return Err(DecoderError::Format(format!(
                "file truncated at byte {}: needed {n} more bytes for {what}",
                self.bytes.len()
            )));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
