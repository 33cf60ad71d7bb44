//! Multi-head composition of Gaussian adaptive heads.

use crate::error::{AttentionError, Result};
use crate::gaam::GaamHead;
use crate::map::AttentionMap;
use crate::mixture::MixtureGaamHead;
use tensor_core::{concat, DenseTensor};

/// How per-head outputs (and their weight maps) are merged.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CombineMode {
    /// Full-width heads stacked vertically: `(heads * rows, dim)`.
    StackRows,
    /// Full-width heads concatenated along features: `(rows, heads * dim)`.
    ConcatFeatures,
    /// Each head owns one feature chunk; output keeps the input shape.
    SplitSubspaces,
}

impl CombineMode {
    pub fn name(&self) -> &'static str {
        match self {
            CombineMode::StackRows => "stack_rows",
            CombineMode::ConcatFeatures => "concat_features",
            CombineMode::SplitSubspaces => "split_subspaces",
        }
    }
}

enum Heads {
    Plain(Vec<GaamHead>),
    Mixture(Vec<MixtureGaamHead>),
}

/// A bank of Gaussian adaptive heads with a combine mode and a shared
/// moment axis.
pub struct MultiGaam {
    heads: Heads,
    combine: CombineMode,
    norm_axis: usize,
}

impl MultiGaam {
    /// Bank of plain heads over a `dim`-feature input.
    pub fn plain(num_heads: usize, dim: usize, combine: CombineMode, norm_axis: usize) -> Result<Self> {
        let head_dim = head_dim_for(num_heads, dim, combine)?;
        let heads = (0..num_heads)
            .map(|_| GaamHead::new(head_dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            heads: Heads::Plain(heads),
            combine,
            norm_axis,
        })
    }

    /// Bank of mixture heads over a `dim`-feature input.
    pub fn mixture(
        num_heads: usize,
        num_gaussians: usize,
        dim: usize,
        combine: CombineMode,
        norm_axis: usize,
    ) -> Result<Self> {
        let head_dim = head_dim_for(num_heads, dim, combine)?;
        let heads = (0..num_heads)
            .map(|_| MixtureGaamHead::new(num_gaussians, head_dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            heads: Heads::Mixture(heads),
            combine,
            norm_axis,
        })
    }

    pub fn from_plain_heads(heads: Vec<GaamHead>, combine: CombineMode, norm_axis: usize) -> Result<Self> {
        if heads.is_empty() {
            return Err(AttentionError::Config("head bank must not be empty".into()));
        }
        if heads.iter().any(|h| h.dim() != heads[0].dim()) {
            return Err(AttentionError::Config("heads must share one dimension".into()));
        }
        Ok(Self {
            heads: Heads::Plain(heads),
            combine,
            norm_axis,
        })
    }

    pub fn from_mixture_heads(
        heads: Vec<MixtureGaamHead>,
        combine: CombineMode,
        norm_axis: usize,
    ) -> Result<Self> {
        if heads.is_empty() {
            return Err(AttentionError::Config("head bank must not be empty".into()));
        }
        if heads
            .iter()
            .any(|h| h.dim() != heads[0].dim() || h.num_gaussians() != heads[0].num_gaussians())
        {
            return Err(AttentionError::Config(
                "mixture heads must share dimension and gaussian count".into(),
            ));
        }
        Ok(Self {
            heads: Heads::Mixture(heads),
            combine,
            norm_axis,
        })
    }

    pub fn num_heads(&self) -> usize {
        match &self.heads {
            Heads::Plain(h) => h.len(),
            Heads::Mixture(h) => h.len(),
        }
    }

    fn head_dim(&self) -> usize {
        match &self.heads {
            Heads::Plain(h) => h[0].dim(),
            Heads::Mixture(h) => h[0].dim(),
        }
    }

    pub fn combine(&self) -> CombineMode {
        self.combine
    }

    pub fn norm_axis(&self) -> usize {
        self.norm_axis
    }

    /// Feature width the input must have.
    pub fn in_features(&self) -> usize {
        match self.combine {
            CombineMode::StackRows | CombineMode::ConcatFeatures => self.head_dim(),
            CombineMode::SplitSubspaces => self.head_dim() * self.num_heads(),
        }
    }

    /// Feature width of the combined output.
    pub fn out_features(&self) -> usize {
        match self.combine {
            CombineMode::StackRows => self.head_dim(),
            CombineMode::ConcatFeatures | CombineMode::SplitSubspaces => {
                self.head_dim() * self.num_heads()
            }
        }
    }

    /// True when output shape equals input shape for any row count.
    pub fn is_shape_preserving(&self) -> bool {
        match self.combine {
            CombineMode::SplitSubspaces => true,
            CombineMode::StackRows | CombineMode::ConcatFeatures => self.num_heads() == 1,
        }
    }

    pub fn mechanism_name(&self) -> String {
        let kind = match &self.heads {
            Heads::Plain(_) => "gaam",
            Heads::Mixture(_) => "mixture",
        };
        format!("{kind}[g={},{}]", self.num_heads(), self.combine.name())
    }

    /// Learnable tensors with stable relative names, head by head.
    pub fn params(&self) -> Vec<(String, DenseTensor)> {
        let mut out = Vec::new();
        match &self.heads {
            Heads::Plain(heads) => {
                for (i, h) in heads.iter().enumerate() {
                    out.push((format!("h{i}.delta"), h.delta().clone()));
                    out.push((format!("h{i}.xi"), h.xi().clone()));
                }
            }
            Heads::Mixture(heads) => {
                for (i, h) in heads.iter().enumerate() {
                    out.push((format!("h{i}.mean_offsets"), h.mean_offsets().clone()));
                    out.push((format!("h{i}.scales"), h.scales().clone()));
                }
            }
        }
        out
    }

    pub fn param_count(&self) -> u64 {
        match &self.heads {
            Heads::Plain(heads) => heads.iter().map(|h| h.param_count()).sum(),
            Heads::Mixture(heads) => heads.iter().map(|h| h.param_count()).sum(),
        }
    }

    /// Combined output plus the matching combined weight map.
    pub fn forward(&self, x: &DenseTensor) -> Result<(DenseTensor, AttentionMap)> {
        let (out, weights) = self.forward_weights(x)?;
        let map = AttentionMap::from_tensor(&weights, x.shape()[0], &self.mechanism_name())?;
        Ok((out, map))
    }

    /// Same as [`forward`](Self::forward) but keeps the weights in-graph,
    /// for callers that compose further.
    pub fn forward_weights(&self, x: &DenseTensor) -> Result<(DenseTensor, DenseTensor)> {
        if x.rank() != 2 {
            return Err(AttentionError::Config(format!(
                "expected a rank-2 input, got shape {:?}",
                x.shape()
            )));
        }
        if x.shape()[1] != self.in_features() {
            return Err(AttentionError::Config(format!(
                "input features {} do not match the bank's expected {}",
                x.shape()[1],
                self.in_features()
            )));
        }
        let g = self.num_heads();
        let mut outs = Vec::with_capacity(g);
        let mut weights = Vec::with_capacity(g);
        for i in 0..g {
            let head_in = match self.combine {
                CombineMode::StackRows | CombineMode::ConcatFeatures => x.clone(),
                CombineMode::SplitSubspaces => {
                    x.slice_axis(1, i * self.head_dim(), self.head_dim())?
                }
            };
            let (o, w) = match &self.heads {
                Heads::Plain(hs) => hs[i].forward(&head_in, self.norm_axis)?,
                Heads::Mixture(hs) => hs[i].forward(&head_in, self.norm_axis)?,
            };
            outs.push(o);
            weights.push(w);
        }
        let axis = match self.combine {
            CombineMode::StackRows => 0,
            CombineMode::ConcatFeatures | CombineMode::SplitSubspaces => 1,
        };
        Ok((concat(&outs, axis)?, concat(&weights, axis)?))
    }
}

fn head_dim_for(num_heads: usize, dim: usize, combine: CombineMode) -> Result<usize> {
    if num_heads == 0 || dim == 0 {
        return Err(AttentionError::Config(
            "head count and dimension must be positive".into(),
        ));
    }
    match combine {
        CombineMode::StackRows | CombineMode::ConcatFeatures => Ok(dim),
        CombineMode::SplitSubspaces => {
            if dim % num_heads != 0 {
                Err(AttentionError::Config(format!(
                    "dimension {dim} is not divisible by {num_heads} heads for subspace splitting"
                )))
            } else {
                Ok(dim / num_heads)
            }
        }
    }
}

/// Multi-head forward as a free operation.
pub fn multi_head_gaam(x: &DenseTensor, bank: &MultiGaam) -> Result<(DenseTensor, AttentionMap)> {
    bank.forward(x)
}
