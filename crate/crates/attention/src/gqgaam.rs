//! Composition of a Gaussian feature-weighting stage with grouped-query
//! attention: the Gaussian stage reweights features, the dot-product stage
//! mixes tokens.

use crate::error::{AttentionError, Result};
use crate::map::AttentionMap;
use crate::multi::MultiGaam;
use crate::dot::{GqaConfig, GqaWeights};
use tensor_core::{DenseTensor, RngState};

pub struct Gqgaam {
    gaam: MultiGaam,
    gqa: GqaWeights,
}

impl Gqgaam {
    pub fn new(gaam: MultiGaam, gqa_cfg: GqaConfig, rng: &mut RngState) -> Result<Self> {
        let gqa = GqaWeights::new(gqa_cfg, rng)?;
        Self::compose(gaam, gqa)
    }

    pub fn compose(gaam: MultiGaam, gqa: GqaWeights) -> Result<Self> {
        if gaam.out_features() != gqa.config().model_dim {
            return Err(AttentionError::Config(format!(
                "gaussian stage emits {} features but the attention stage expects {}",
                gaam.out_features(),
                gqa.config().model_dim
            )));
        }
        Ok(Self { gaam, gqa })
    }

    pub fn gaam(&self) -> &MultiGaam {
        &self.gaam
    }

    pub fn gqa(&self) -> &GqaWeights {
        &self.gqa
    }

    pub fn param_count(&self) -> u64 {
        self.gaam.param_count() + self.gqa.param_count()
    }

    pub fn params(&self) -> Vec<(String, DenseTensor)> {
        let mut out: Vec<(String, DenseTensor)> = self
            .gaam
            .params()
            .into_iter()
            .map(|(name, t)| (format!("gaam.{name}"), t))
            .collect();
        out.extend(
            self.gqa
                .params()
                .into_iter()
                .map(|(name, t)| (format!("gqa.{name}"), t)),
        );
        out
    }

    /// Runs the Gaussian stage, keeps its feature map for attribution, then
    /// applies grouped-query attention to the reweighted sequence. Returns
    /// the output, the Gaussian feature map, and the detached token
    /// attention probabilities.
    pub fn forward(&self, x: &DenseTensor) -> Result<(DenseTensor, AttentionMap, DenseTensor)> {
        let (gated, map) = self.gaam.forward(x)?;
        let (out, attn) = self.gqa.forward(&gated)?;
        Ok((out, map, attn))
    }
}
