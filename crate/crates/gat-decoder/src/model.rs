//! The decoder model: pooled layer embeddings flow through an attention
//! module, a two-layer rectified convolution stack, global average
//! pooling, and an affine classifier.

use crate::conv::{global_average_pool, ConvLayer, ConvStack, KERNEL};
use crate::embed::EmbeddingStack;
use crate::error::{DecoderError, Result};
use attention::{
    AttentionMap, CombineMode, GaamHead, GaussianBlock, GctGate, GqaConfig, GqaWeights, Gqgaam,
    MhaWeights, MixtureGaamHead, MultiGaam,
};
use tensor_core::{concat, xavier_init, DenseTensor, ParamStore, RngState};

/// Heads used by the multi-head Gaussian variant and the baseline
/// multi-head attention.
pub const WIDE_HEADS: usize = 8;
/// Query/key-value head split of the grouped-query stage.
pub const GQ_QUERY_HEADS: usize = 4;
pub const GQ_KV_HEADS: usize = 2;
/// Components per mixture head.
pub const MIXTURE_COMPONENTS: usize = 3;
/// Layers in the residual Gaussian block variant.
pub const BLOCK_LAYERS: usize = 2;

/// Which attention module sits between pooling and convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionKind {
    Mha,
    /// Eight full-width Gaussian heads, outputs stacked vertically.
    GaamV1,
    /// A single Gaussian head.
    GaamV2,
    /// Eight stacked Gaussian heads feeding grouped-query attention.
    Gqgaam,
    /// One mixture head with three components.
    Mixture,
    /// Two residual subspace-split mixture layers.
    GaussianBlock,
    /// Zero-center Gaussian gate with a learnable variance.
    Gct,
}

impl AttentionKind {
    pub const ALL: [AttentionKind; 7] = [
        AttentionKind::Mha,
        AttentionKind::GaamV1,
        AttentionKind::GaamV2,
        AttentionKind::Gqgaam,
        AttentionKind::Mixture,
        AttentionKind::GaussianBlock,
        AttentionKind::Gct,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AttentionKind::Mha => "mha",
            AttentionKind::GaamV1 => "gaam_v1",
            AttentionKind::GaamV2 => "gaam_v2",
            AttentionKind::Gqgaam => "gqgaam",
            AttentionKind::Mixture => "mixture",
            AttentionKind::GaussianBlock => "gaussian_block",
            AttentionKind::Gct => "gct",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                DecoderError::Config(format!(
                    "unknown attention kind {s:?}; expected one of {}",
                    Self::ALL.map(|k| k.name()).join(", ")
                ))
            })
    }

    pub fn index(&self) -> u32 {
        Self::ALL.iter().position(|k| k == self).unwrap() as u32
    }

    pub fn from_index(i: u32) -> Result<Self> {
        Self::ALL
            .get(i as usize)
            .copied()
            .ok_or_else(|| DecoderError::Format(format!("unknown attention kind index {i}")))
    }
}

/// Architecture of one decoder instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoderConfig {
    pub attention: AttentionKind,
    /// Encoder layers per input stack.
    pub num_layers: usize,
    /// Embedding width.
    pub dim: usize,
    pub num_classes: usize,
    /// Channel plan of the two convolution layers.
    pub conv_channels: (usize, usize),
}

impl DecoderConfig {
    pub fn new(attention: AttentionKind, num_layers: usize, dim: usize, num_classes: usize) -> Self {
        Self {
            attention,
            num_layers,
            dim,
            num_classes,
            conv_channels: (8, 16),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.dim == 0 {
            return Err(DecoderError::Config(
                "layer count and dimension must be positive".into(),
            ));
        }
        if self.num_classes < 2 {
            return Err(DecoderError::Config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.conv_channels.0 == 0 || self.conv_channels.1 == 0 {
            return Err(DecoderError::Config(
                "conv channel plan must be positive".into(),
            ));
        }
        match self.attention {
            AttentionKind::Mha if self.dim % WIDE_HEADS != 0 => Err(DecoderError::Config(format!(
                "dimension {} is not divisible by the {WIDE_HEADS} attention heads",
                self.dim
            ))),
            AttentionKind::Gqgaam if self.dim % GQ_QUERY_HEADS != 0 => {
                Err(DecoderError::Config(format!(
                    "dimension {} is not divisible by the {GQ_QUERY_HEADS} query heads",
                    self.dim
                )))
            }
            _ => Ok(()),
        }
    }

    fn gqa_config(&self) -> GqaConfig {
        GqaConfig {
            query_heads: GQ_QUERY_HEADS,
            kv_heads: GQ_KV_HEADS,
            head_dim: self.dim / GQ_QUERY_HEADS,
            model_dim: self.dim,
        }
    }

    /// Canonical parameter names and shapes, in registration order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.dim;
        let (c1, c2) = self.conv_channels;
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        match self.attention {
            AttentionKind::Mha => {
                for name in ["wq", "wk", "wv", "wo"] {
                    out.push((format!("attn.{name}"), vec![d, d]));
                }
            }
            AttentionKind::GaamV1 => {
                for h in 0..WIDE_HEADS {
                    out.push((format!("attn.h{h}.delta"), vec![d]));
                    out.push((format!("attn.h{h}.xi"), vec![d]));
                }
            }
            AttentionKind::GaamV2 => {
                out.push(("attn.h0.delta".into(), vec![d]));
                out.push(("attn.h0.xi".into(), vec![d]));
            }
            AttentionKind::Gqgaam => {
                for h in 0..WIDE_HEADS {
                    out.push((format!("attn.gaam.h{h}.delta"), vec![d]));
                    out.push((format!("attn.gaam.h{h}.xi"), vec![d]));
                }
                let cfg = self.gqa_config();
                let qw = cfg.query_heads * cfg.head_dim;
                let kvw = cfg.kv_heads * cfg.head_dim;
                out.push(("attn.gqa.wq".into(), vec![d, qw]));
                out.push(("attn.gqa.wk".into(), vec![d, kvw]));
                out.push(("attn.gqa.wv".into(), vec![d, kvw]));
                out.push(("attn.gqa.wo".into(), vec![qw, d]));
            }
            AttentionKind::Mixture => {
                out.push(("attn.h0.mean_offsets".into(), vec![MIXTURE_COMPONENTS, d]));
                out.push(("attn.h0.scales".into(), vec![MIXTURE_COMPONENTS, d]));
            }
            AttentionKind::GaussianBlock => {
                for l in 0..BLOCK_LAYERS {
                    out.push((
                        format!("attn.l{l}.h0.mean_offsets"),
                        vec![MIXTURE_COMPONENTS, d],
                    ));
                    out.push((format!("attn.l{l}.h0.scales"), vec![MIXTURE_COMPONENTS, d]));
                }
            }
            AttentionKind::Gct => {
                out.push(("attn.sigma2".into(), vec![]));
            }
        }
        out.push(("conv1.weight".into(), vec![c1, KERNEL * KERNEL]));
        out.push(("conv1.bias".into(), vec![c1, 1]));
        out.push(("conv2.weight".into(), vec![c2, c1 * KERNEL * KERNEL]));
        out.push(("conv2.bias".into(), vec![c2, 1]));
        out.push(("classifier.weight".into(), vec![c2, self.num_classes]));
        out.push(("classifier.bias".into(), vec![1, self.num_classes]));
        out
    }
}

enum Module {
    Mha(MhaWeights),
    Gaam(MultiGaam),
    Gqgaam(Gqgaam),
    Block(GaussianBlock),
    Gct(GctGate),
}

impl Module {
    fn forward(&self, x: &DenseTensor, num_layers: usize) -> Result<(DenseTensor, AttentionMap)> {
        match self {
            Module::Mha(m) => {
                let (out, probs) = m.forward(x)?;
                let map = AttentionMap::from_tensor(&probs, num_layers, "mha")?;
                Ok((out, map))
            }
            Module::Gaam(bank) => Ok(bank.forward(x)?),
            Module::Gqgaam(g) => {
                let (out, map, _) = g.forward(x)?;
                Ok((out, map))
            }
            Module::Block(b) => {
                let (out, map) = b.forward(x)?;
                let map = map.ok_or_else(|| {
                    DecoderError::Config("gaussian block has no layers".into())
                })?;
                Ok((out, map))
            }
            Module::Gct(g) => {
                let (out, w) = g.forward(x)?;
                let map = AttentionMap::from_tensor(&w, num_layers, "gct")?;
                Ok((out, map))
            }
        }
    }

    fn param_count(&self) -> u64 {
        match self {
            Module::Mha(m) => m.param_count(),
            Module::Gaam(b) => b.param_count(),
            Module::Gqgaam(g) => g.param_count(),
            Module::Block(b) => b.param_count(),
            Module::Gct(g) => g.param_count(),
        }
    }
}

/// A fully assembled decoder plus its parameter store. Every learnable
/// tensor is shared between the module structure and the store, so
/// optimizer steps are visible to the next forward pass.
pub struct GatDecoder {
    config: DecoderConfig,
    module: Module,
    conv: ConvStack,
    cls_weight: DenseTensor,
    cls_bias: DenseTensor,
    store: ParamStore,
}

impl GatDecoder {
    /// Fresh decoder: Gaussian offsets start at zero with width two,
    /// projection and conv weights are Xavier draws, biases zero.
    pub fn new(config: &DecoderConfig, rng: &mut RngState) -> Result<Self> {
        config.validate()?;
        let mut params = Vec::new();
        for (name, shape) in config.param_layout() {
            let tensor = fresh_param(&name, &shape, rng)?;
            params.push((name, tensor));
        }
        Self::from_named_params(config, params)
    }

    /// Assemble from explicit tensors in canonical layout order (see
    /// [`DecoderConfig::param_layout`]). Used by checkpoint loading and by
    /// gradient checks that rebuild the model around probe values.
    pub fn from_named_params(
        config: &DecoderConfig,
        params: Vec<(String, DenseTensor)>,
    ) -> Result<Self> {
        config.validate()?;
        let layout = config.param_layout();
        if params.len() != layout.len() {
            return Err(DecoderError::Config(format!(
                "expected {} parameters, got {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, shape), (got_name, got)) in layout.iter().zip(&params) {
            if name != got_name {
                return Err(DecoderError::Config(format!(
                    "parameter order mismatch: expected {name}, got {got_name}"
                )));
            }
            if got.shape() != shape.as_slice() {
                return Err(DecoderError::Config(format!(
                    "parameter {name} must have shape {shape:?}, got {:?}",
                    got.shape()
                )));
            }
        }

        let mut store = ParamStore::new();
        for (name, tensor) in &params {
            store.register(name, tensor.clone())?;
        }
        let grab = |name: &str| -> DenseTensor {
            store.get(name).expect("validated layout").clone()
        };

        let module = match config.attention {
            AttentionKind::Mha => Module::Mha(MhaWeights::from_params(
                grab("attn.wq"),
                grab("attn.wk"),
                grab("attn.wv"),
                grab("attn.wo"),
                WIDE_HEADS,
            )?),
            AttentionKind::GaamV1 => {
                let heads = (0..WIDE_HEADS)
                    .map(|h| {
                        GaamHead::from_params(
                            grab(&format!("attn.h{h}.delta")),
                            grab(&format!("attn.h{h}.xi")),
                        )
                    })
                    .collect::<attention::Result<Vec<_>>>()?;
                Module::Gaam(MultiGaam::from_plain_heads(
                    heads,
                    CombineMode::StackRows,
                    1,
                )?)
            }
            AttentionKind::GaamV2 => {
                let head = GaamHead::from_params(grab("attn.h0.delta"), grab("attn.h0.xi"))?;
                Module::Gaam(MultiGaam::from_plain_heads(
                    vec![head],
                    CombineMode::StackRows,
                    1,
                )?)
            }
            AttentionKind::Gqgaam => {
                let heads = (0..WIDE_HEADS)
                    .map(|h| {
                        GaamHead::from_params(
                            grab(&format!("attn.gaam.h{h}.delta")),
                            grab(&format!("attn.gaam.h{h}.xi")),
                        )
                    })
                    .collect::<attention::Result<Vec<_>>>()?;
                let gaam = MultiGaam::from_plain_heads(heads, CombineMode::StackRows, 1)?;
                let gqa = GqaWeights::from_params(
                    config.gqa_config(),
                    grab("attn.gqa.wq"),
                    grab("attn.gqa.wk"),
                    grab("attn.gqa.wv"),
                    grab("attn.gqa.wo"),
                )?;
                Module::Gqgaam(Gqgaam::compose(gaam, gqa)?)
            }
            AttentionKind::Mixture => {
                let head = MixtureGaamHead::from_params(
                    grab("attn.h0.mean_offsets"),
                    grab("attn.h0.scales"),
                )?;
                Module::Gaam(MultiGaam::from_mixture_heads(
                    vec![head],
                    CombineMode::StackRows,
                    1,
                )?)
            }
            AttentionKind::GaussianBlock => {
                let layers = (0..BLOCK_LAYERS)
                    .map(|l| {
                        let head = MixtureGaamHead::from_params(
                            grab(&format!("attn.l{l}.h0.mean_offsets")),
                            grab(&format!("attn.l{l}.h0.scales")),
                        )?;
                        MultiGaam::from_mixture_heads(
                            vec![head],
                            CombineMode::SplitSubspaces,
                            1,
                        )
                    })
                    .collect::<attention::Result<Vec<_>>>()?;
                Module::Block(GaussianBlock::new(layers)?)
            }
            AttentionKind::Gct => Module::Gct(GctGate::from_params(grab("attn.sigma2"))?),
        };

        let conv = ConvStack::from_layers(
            ConvLayer::from_params(
                grab("conv1.weight"),
                grab("conv1.bias"),
                1,
                config.conv_channels.0,
            )?,
            ConvLayer::from_params(
                grab("conv2.weight"),
                grab("conv2.bias"),
                config.conv_channels.0,
                config.conv_channels.1,
            )?,
        )?;

        Ok(Self {
            config: *config,
            module,
            conv,
            cls_weight: grab("classifier.weight"),
            cls_bias: grab("classifier.bias"),
            store,
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Learnable scalars in the attention module alone.
    pub fn attention_param_count(&self) -> u64 {
        self.module.param_count()
    }

    /// Learnable scalars in the whole decoder.
    pub fn param_count(&self) -> u64 {
        self.store.num_values() as u64
    }

    /// Copy of every parameter's values, in registration order.
    pub fn snapshot(&self) -> Vec<(String, Vec<f64>)> {
        self.store
            .iter()
            .map(|(name, t)| (name.to_string(), t.to_vec()))
            .collect()
    }

    /// Write a snapshot back into the live parameters.
    pub fn restore(&self, snapshot: &[(String, Vec<f64>)]) -> Result<()> {
        for (name, values) in snapshot {
            let tensor = self.store.get(name).ok_or_else(|| {
                DecoderError::Config(format!("snapshot names unknown parameter {name}"))
            })?;
            tensor.set_data(values.clone())?;
        }
        Ok(())
    }

    /// Logits and the attention map for one pooled `[num_layers, dim]`
    /// context matrix.
    pub fn forward_pooled(&self, pooled: &DenseTensor) -> Result<(DenseTensor, AttentionMap)> {
        if pooled.shape() != [self.config.num_layers, self.config.dim] {
            return Err(DecoderError::Data(format!(
                "pooled input must be [{}, {}], got {:?}",
                self.config.num_layers,
                self.config.dim,
                pooled.shape()
            )));
        }
        let (feat, map) = self.module.forward(pooled, self.config.num_layers)?;
        let rows = feat.shape()[0];
        let cols = feat.shape()[1];
        let image = feat.reshape(&[1, rows * cols])?;
        let conv_out = self.conv.forward(&image, rows, cols)?;
        let pooled_feat = global_average_pool(&conv_out)?;
        let logits = pooled_feat.matmul(&self.cls_weight)?.add(&self.cls_bias)?;
        Ok((logits, map))
    }

    /// Logits and map for one embedding stack; the map remembers the
    /// stack's source id.
    pub fn forward_stack(&self, stack: &EmbeddingStack) -> Result<(DenseTensor, AttentionMap)> {
        if stack.num_layers() != self.config.num_layers || stack.dim() != self.config.dim {
            return Err(DecoderError::Data(format!(
                "stack is {}x{}x{} but the model expects {} layers of width {}",
                stack.num_layers(),
                stack.time_steps(),
                stack.dim(),
                self.config.num_layers,
                self.config.dim
            )));
        }
        let pooled = stack.mean_pool_time()?;
        let (logits, mut map) = self.forward_pooled(&pooled)?;
        map.source = stack.source;
        Ok((logits, map))
    }

    /// Stacked logits `[batch, classes]` plus per-sample maps.
    pub fn forward_batch(
        &self,
        stacks: &[&EmbeddingStack],
    ) -> Result<(DenseTensor, Vec<AttentionMap>)> {
        if stacks.is_empty() {
            return Err(DecoderError::Data("empty batch".into()));
        }
        let mut rows = Vec::with_capacity(stacks.len());
        let mut maps = Vec::with_capacity(stacks.len());
        for stack in stacks {
            let (logits, map) = self.forward_stack(stack)?;
            rows.push(logits);
            maps.push(map);
        }
        Ok((concat(&rows, 0)?, maps))
    }
}

fn fresh_param(name: &str, shape: &[usize], rng: &mut RngState) -> Result<DenseTensor> {
    let n: usize = shape.iter().product();
    let leaf = name.rsplit('.').next().unwrap_or(name);
    let tensor = match leaf {
        "xi" => DenseTensor::parameter(vec![2.0; n], shape)?,
        "delta" | "mean_offsets" | "bias" => DenseTensor::parameter(vec![0.0; n], shape)?,
        "scales" | "sigma2" => DenseTensor::parameter(vec![1.0; n], shape)?,
        _ => xavier_init(shape, rng)?,
    };
    Ok(tensor)
}
