//! Scaled dot-product attention baselines: multi-head attention and its
//! grouped-query variant, both bias-free with an output projection.

use crate::error::{AttentionError, Result};
use tensor_core::{concat, softmax, xavier_init, DenseTensor, RngState};

/// Multi-head self-attention weights over a `dim`-feature sequence.
pub struct MhaWeights {
    wq: DenseTensor, // [dim, dim]
    wk: DenseTensor,
    wv: DenseTensor,
    wo: DenseTensor,
    num_heads: usize,
}

impl MhaWeights {
    pub fn new(dim: usize, num_heads: usize, rng: &mut RngState) -> Result<Self> {
        check_heads(dim, num_heads)?;
        Ok(Self {
            wq: xavier_init(&[dim, dim], rng)?,
            wk: xavier_init(&[dim, dim], rng)?,
            wv: xavier_init(&[dim, dim], rng)?,
            wo: xavier_init(&[dim, dim], rng)?,
            num_heads,
        })
    }

    pub fn from_params(
        wq: DenseTensor,
        wk: DenseTensor,
        wv: DenseTensor,
        wo: DenseTensor,
        num_heads: usize,
    ) -> Result<Self> {
        let dim = wq.shape().first().copied().unwrap_or(0);
        for (name, w) in [("wq", &wq), ("wk", &wk), ("wv", &wv), ("wo", &wo)] {
            if w.rank() != 2 || w.shape() != [dim, dim] {
                return Err(AttentionError::Config(format!(
                    "{name} must be [{dim}, {dim}], got {:?}",
                    w.shape()
                )));
            }
        }
        check_heads(dim, num_heads)?;
        Ok(Self {
            wq,
            wk,
            wv,
            wo,
            num_heads,
        })
    }

    pub fn dim(&self) -> usize {
        self.wq.shape()[0]
    }

    pub fn num_heads(&self) -> usize {
        self.num_heads
    }

    pub fn head_dim(&self) -> usize {
        self.dim() / self.num_heads
    }

    pub fn param_count(&self) -> u64 {
        4 * (self.dim() * self.dim()) as u64
    }

    pub fn params(&self) -> Vec<(String, DenseTensor)> {
        vec![
            ("wq".into(), self.wq.clone()),
            ("wk".into(), self.wk.clone()),
            ("wv".into(), self.wv.clone()),
            ("wo".into(), self.wo.clone()),
        ]
    }

    /// Self-attention over `x` (`[tokens, dim]`). Returns the projected
    /// output and a detached stack of per-head attention probabilities
    /// (`[heads * tokens, tokens]`, head-major).
    pub fn forward(&self, x: &DenseTensor) -> Result<(DenseTensor, DenseTensor)> {
        let dim = self.dim();
        if x.rank() != 2 || x.shape()[1] != dim {
            return Err(AttentionError::Config(format!(
                "expected input [tokens, {dim}], got {:?}",
                x.shape()
            )));
        }
        let hd = self.head_dim();
        let q = x.matmul(&self.wq)?;
        let k = x.matmul(&self.wk)?;
        let v = x.matmul(&self.wv)?;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut heads = Vec::with_capacity(self.num_heads);
        let mut probs = Vec::with_capacity(self.num_heads);
        for h in 0..self.num_heads {
            let qh = q.slice_axis(1, h * hd, hd)?;
            let kh = k.slice_axis(1, h * hd, hd)?;
            let vh = v.slice_axis(1, h * hd, hd)?;
            let scores = qh.matmul(&kh.transpose()?)?.scale(scale)?;
            let a = softmax(&scores, 1)?;
            heads.push(a.matmul(&vh)?);
            probs.push(a.detach());
        }
        let out = concat(&heads, 1)?.matmul(&self.wo)?;
        Ok((out, concat(&probs, 0)?))
    }
}

fn check_heads(dim: usize, num_heads: usize) -> Result<()> {
    if num_heads == 0 || dim == 0 {
        return Err(AttentionError::Config(
            "dimension and head count must be positive".into(),
        ));
    }
    if dim % num_heads != 0 {
        return Err(AttentionError::Config(format!(
            "dimension {dim} is not divisible by {num_heads} heads"
        )));
    }
    Ok(())
}

/// Multi-head attention as a free operation.
pub fn mha_forward(x: &DenseTensor, weights: &MhaWeights) -> Result<(DenseTensor, DenseTensor)> {
    weights.forward(x)
}

/// Grouped-query attention configuration: `query_heads` query projections
/// share `kv_heads` key/value projections, consecutive queries grouped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GqaConfig {
    pub query_heads: usize,
    pub kv_heads: usize,
    pub head_dim: usize,
    pub model_dim: usize,
}

impl GqaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.query_heads == 0 || self.kv_heads == 0 || self.head_dim == 0 || self.model_dim == 0
        {
            return Err(AttentionError::Config(
                "grouped-query attention extents must be positive".into(),
            ));
        }
        if self.query_heads % self.kv_heads != 0 {
            return Err(AttentionError::Config(format!(
                "{} query heads cannot be grouped over {} kv heads",
                self.query_heads, self.kv_heads
            )));
        }
        Ok(())
    }

    /// Queries that share each key/value head.
    pub fn group_size(&self) -> usize {
        self.query_heads / self.kv_heads
    }

    pub fn param_count(&self) -> u64 {
        let d = self.model_dim as u64;
        let qw = self.query_heads as u64 * self.head_dim as u64;
        let kvw = self.kv_heads as u64 * self.head_dim as u64;
        d * qw + 2 * d * kvw + qw * d
    }
}

pub struct GqaWeights {
    cfg: GqaConfig,
    wq: DenseTensor, // [model_dim, query_heads * head_dim]
    wk: DenseTensor, // [model_dim, kv_heads * head_dim]
    wv: DenseTensor,
    wo: DenseTensor, // [query_heads * head_dim, model_dim]
}

impl GqaWeights {
    pub fn new(cfg: GqaConfig, rng: &mut RngState) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.model_dim;
        let qw = cfg.query_heads * cfg.head_dim;
        let kvw = cfg.kv_heads * cfg.head_dim;
        Ok(Self {
            cfg,
            wq: xavier_init(&[d, qw], rng)?,
            wk: xavier_init(&[d, kvw], rng)?,
            wv: xavier_init(&[d, kvw], rng)?,
            wo: xavier_init(&[qw, d], rng)?,
        })
    }

    pub fn from_params(
        cfg: GqaConfig,
        wq: DenseTensor,
        wk: DenseTensor,
        wv: DenseTensor,
        wo: DenseTensor,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.model_dim;
        let qw = cfg.query_heads * cfg.head_dim;
        let kvw = cfg.kv_heads * cfg.head_dim;
        for (name, w, shape) in [
            ("wq", &wq, [d, qw]),
            ("wk", &wk, [d, kvw]),
            ("wv", &wv, [d, kvw]),
            ("wo", &wo, [qw, d]),
        ] {
            if w.shape() != shape {
                return Err(AttentionError::Config(format!(
                    "{name} must be {shape:?}, got {:?}",
                    w.shape()
                )));
            }
        }
        Ok(Self {
            cfg,
            wq,
            wk,
            wv,
            wo,
        })
    }

    pub fn config(&self) -> GqaConfig {
        self.cfg
    }

    pub fn param_count(&self) -> u64 {
        self.cfg.param_count()
    }

    pub fn params(&self) -> Vec<(String, DenseTensor)> {
        vec![
            ("wq".into(), self.wq.clone()),
            ("wk".into(), self.wk.clone()),
            ("wv".into(), self.wv.clone()),
            ("wo".into(), self.wo.clone()),
        ]
    }

    /// Grouped-query self-attention over `x` (`[tokens, model_dim]`).
    /// Returns the projected output and detached per-query-head attention
    /// probabilities (`[query_heads * tokens, tokens]`).
    pub fn forward(&self, x: &DenseTensor) -> Result<(DenseTensor, DenseTensor)> {
        let d = self.cfg.model_dim;
        if x.rank() != 2 || x.shape()[1] != d {
            return Err(AttentionError::Config(format!(
                "expected input [tokens, {d}], got {:?}",
                x.shape()
            )));
        }
        let hd = self.cfg.head_dim;
        let q = x.matmul(&self.wq)?;
        let k = x.matmul(&self.wk)?;
        let v = x.matmul(&self.wv)?;
        let scale = 1.0 / (hd as f64).sqrt();
        let group = self.cfg.group_size();
        let mut heads = Vec::with_capacity(self.cfg.query_heads);
        let mut probs = Vec::with_capacity(self.cfg.query_heads);
        for qi in 0..self.cfg.query_heads {
            let kv = qi / group;
            let qh = q.slice_axis(1, qi * hd, hd)?;
            let kh = k.slice_axis(1, kv * hd, hd)?;
            let vh = v.slice_axis(1, kv * hd, hd)?;
            let scores = qh.matmul(&kh.transpose()?)?.scale(scale)?;
            let a = softmax(&scores, 1)?;
            heads.push(a.matmul(&vh)?);
            probs.push(a.detach());
        }
        let out = concat(&heads, 1)?.matmul(&self.wo)?;
        Ok((out, concat(&probs, 0)?))
    }
}

/// Grouped-query attention as a free operation.
pub fn gqa_forward(x: &DenseTensor, weights: &GqaWeights) -> Result<(DenseTensor, DenseTensor)> {
    weights.forward(x)
}
