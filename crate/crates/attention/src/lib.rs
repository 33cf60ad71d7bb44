//! Attention mechanisms over dense feature matrices.
//!
//! The Gaussian family gates features element-wise: a single adaptive head
//! ([`GaamHead`]), multi-head banks with three combine modes ([`MultiGaam`]),
//! mixture-of-Gaussians heads ([`MixtureGaamHead`]), and residual stacks
//! ([`GaussianBlock`]). Dot-product baselines mix tokens instead:
//! multi-head attention ([`MhaWeights`]) and grouped-query attention
//! ([`GqaWeights`]). [`Gqgaam`] chains a Gaussian stage into grouped-query
//! attention, and [`GctGate`] is a fixed-center Gaussian gate baseline.
//! [`Mechanism`] gives closed-form parameter counts for all of them.

mod block;
mod dot;
mod error;
mod gaam;
mod gct;
mod gqgaam;
mod map;
mod mixture;
mod multi;
mod params;

pub use block::{gaussian_block_forward, GaussianBlock};
pub use dot::{gqa_forward, mha_forward, GqaConfig, GqaWeights, MhaWeights};
pub use error::{AttentionError, Result};
pub use gaam::{
    adjusted_mean, gaam_forward, gaam_weights, normalize_features, sample_moments, GaamHead,
    EPS_NORM, EPS_VAR, FEATURE_AXIS, XI_GUARD, XI_MIN,
};
pub use gct::{gct_weights, GctGate};
pub use gqgaam::Gqgaam;
pub use map::AttentionMap;
pub use mixture::{MixtureGaamHead, MIX_EPS};
pub use multi::{multi_head_gaam, CombineMode, MultiGaam};
pub use params::Mechanism;
