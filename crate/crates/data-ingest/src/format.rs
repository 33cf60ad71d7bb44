//! Binary embedding files, so precomputed encoder outputs can be fed to
//! the decoder without regeneration.
//!
//! Layout: 4-byte magic `GAEB`, u16 version, four u32 counts (samples,
//! layers, steps, dim), a u64 offset to the label table, the payload as
//! little-endian f32 in sample/layer/step/feature order, then one u32
//! label per sample at the recorded offset.

use crate::error::{IngestError, Result};
use gat_decoder::EmbeddingStack;
use std::fs;
use std::path::Path;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"GAEB";
pub const EMBEDDING_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 * 4 + 8;

/// Serialize a non-empty, shape-consistent batch of samples.
pub fn write_embeddings(samples: &[EmbeddingStack], path: &Path) -> Result<()> {
    let first = samples
        .first()
        .ok_or_else(|| IngestError::Spec("cannot write an empty sample list".into()))?;
    let (layers, steps, dim) = (first.num_layers(), first.time_steps(), first.dim());
    for (i, s) in samples.iter().enumerate() {
        if s.num_layers() != layers || s.time_steps() != steps || s.dim() != dim {
            return Err(IngestError::Spec(format!(
                "sample {i} is {}x{}x{} but sample 0 is {layers}x{steps}x{dim}",
                s.num_layers(),
                s.time_steps(),
                s.dim()
            )));
        }
    }

    let payload_len = samples.len() * layers * steps * dim * 4;
    let label_offset = (HEADER_LEN + payload_len) as u64;
    let mut bytes = Vec::with_capacity(HEADER_LEN + payload_len + samples.len() * 4);
    bytes.extend_from_slice(EMBEDDING_MAGIC);
    bytes.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    for count in [samples.len(), layers, steps, dim] {
        let count = u32::try_from(count)
            .map_err(|_| IngestError::Spec(format!("count {count} exceeds the u32 format")))?;
        bytes.extend_from_slice(&count.to_le_bytes());
    }
    bytes.extend_from_slice(&label_offset.to_le_bytes());
    for s in samples {
        for v in s.values() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    for s in samples {
        bytes.extend_from_slice(&s.label.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Read a file written by [`write_embeddings`]. Each sample's `source` is
/// its position in the file.
pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingStack>> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes);

    let magic = r.take(4, "magic")?;
    if magic != EMBEDDING_MAGIC {
        return Err(IngestError::Format(format!(
            "bad magic {magic:?}; not an embedding file"
        )));
    }
    let vb = r.take(2, "version")?;
    let version = u16::from_le_bytes([vb[0], vb[1]]);
    if version != EMBEDDING_VERSION {
        return Err(IngestError::Format(format!(
            "unsupported version {version}, expected {EMBEDDING_VERSION}"
        )));
    }
    let num_samples = r.u32("sample count")? as usize;
    let layers = r.u32("layer count")? as usize;
    let steps = r.u32("step count")? as usize;
    let dim = r.u32("dimension")? as usize;
    let label_offset = r.u64("label table offset")?;

    let cells = [num_samples, layers, steps, dim]
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| IngestError::Format("sample extents overflow".into()))?;
    let expected_offset = (HEADER_LEN + cells * 4) as u64;
    if label_offset != expected_offset {
        return Err(IngestError::Format(format!(
            "label table offset {label_offset} does not match the payload end {expected_offset}"
        )));
    }

    let plane = layers * steps * dim;
    r.check_remaining(cells * 4 + num_samples * 4, "payload and labels")?;
    let mut samples = Vec::with_capacity(num_samples);
    let mut all_values = Vec::with_capacity(cells);
    for _ in 0..cells {
        all_values.push(r.f32("payload value")?);
    }
    let mut labels = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        labels.push(r.u32("label")?);
    }
    if !r.done() {
        return Err(IngestError::Format(format!(
            "{} trailing bytes after the label table",
            bytes.len() - r.pos
        )));
    }

    for (i, label) in labels.into_iter().enumerate() {
        let values = all_values[i * plane..(i + 1) * plane].to_vec();
        let mut stack = EmbeddingStack::new(values, layers, steps, dim, label)?;
        stack.source = i as u32;
        samples.push(stack);
    }
    Ok(samples)
}

/// Label sidecar: one `sample_id,label` row per sample.
pub fn labels_to_csv(samples: &[EmbeddingStack]) -> String {
    let mut out = String::from("sample_id,label\n");
    for s in samples {
        out.push_str(&format!("{},{}\n", s.source, s.label));
    }
    out
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

    fn check_remaining(&self, n: usize, what: &str) -> Result<()> {
        if self.pos.saturating_add(n) > self.bytes.len() {
            return Err(IngestError::Format(format!(
                "file truncated at byte {}: needed {n} more bytes for {what}",
                self.bytes.len()
            )));
        }
        Ok(())
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        self.check_remaining(n, what)?;
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
