//! Closed-form learnable-parameter counts for every attention mechanism in
//! this crate, independent of any instantiated weights.

use crate::dot::GqaConfig;

/// Mechanism descriptor for parameter accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mechanism {
    /// Per-head offset and width vectors over `dim` features.
    Gaam { heads: usize, dim: usize },
    /// Per-head banks of `num_gaussians` offset and scale vectors.
    MixtureGaam {
        heads: usize,
        num_gaussians: usize,
        dim: usize,
    },
    /// Residual stack of single-head mixture layers.
    GaussianBlock {
        layers: usize,
        num_gaussians: usize,
        dim: usize,
    },
    /// Standard multi-head attention with four square projections.
    Mha { model_dim: usize },
    /// Grouped-query attention.
    Gqa {
        query_heads: usize,
        kv_heads: usize,
        head_dim: usize,
        model_dim: usize,
    },
    /// Gaussian stage followed by grouped-query attention.
    Gqgaam {
        gaam_heads: usize,
        query_heads: usize,
        kv_heads: usize,
        head_dim: usize,
        model_dim: usize,
    },
    /// Zero-center gate with an optional learnable variance.
    Gct { learn_sigma: bool },
}

impl Mechanism {
    /// Number of learnable scalars the mechanism holds.
    pub fn param_count(&self) -> u64 {
        match *self {
            Mechanism::Gaam { heads, dim } => 2 * heads as u64 * dim as u64,
            Mechanism::MixtureGaam {
                heads,
                num_gaussians,
                dim,
            } => 2 * heads as u64 * num_gaussians as u64 * dim as u64,
            Mechanism::GaussianBlock {
                layers,
                num_gaussians,
                dim,
            } => 2 * layers as u64 * num_gaussians as u64 * dim as u64,
            Mechanism::Mha { model_dim } => 4 * model_dim as u64 * model_dim as u64,
            Mechanism::Gqa {
                query_heads,
                kv_heads,
                head_dim,
                model_dim,
            } => GqaConfig {
                query_heads,
                kv_heads,
                head_dim,
                model_dim,
            }
            .param_count(),
            Mechanism::Gqgaam {
                gaam_heads,
                query_heads,
                kv_heads,
                head_dim,
                model_dim,
            } => {
                Mechanism::Gqa {
                    query_heads,
                    kv_heads,
                    head_dim,
                    model_dim,
                }
                .param_count()
                    + Mechanism::Gaam {
                        heads: gaam_heads,
                        dim: model_dim,
                    }
                    .param_count()
            }
            Mechanism::Gct { learn_sigma } => learn_sigma as u64,
        }
    }

    /// Short display name.
    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::Gaam { .. } => "gaam",
            Mechanism::MixtureGaam { .. } => "mixture-gaam",
            Mechanism::GaussianBlock { .. } => "gaussian-block",
            Mechanism::Mha { .. } => "mha",
            Mechanism::Gqa { .. } => "gqa",
            Mechanism::Gqgaam { .. } => "gqgaam",
            Mechanism::Gct { .. } => "gct",
        }
    }
}
