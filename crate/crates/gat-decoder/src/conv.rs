//! Convolutional feature distillation: 3x3 kernels, stride 1, padding 1,
//! so spatial extents are preserved at every layer.

use crate::error::{DecoderError, Result};
use tensor_core::{im2col, xavier_init, Conv2dGeom, DenseTensor, RngState};

pub const KERNEL: usize = 3;

/// One 2-D convolution layer holding its weight as the unfolded matrix
/// `[out_channels, in_channels * 9]` plus a per-channel bias column.
pub struct ConvLayer {
    weight: DenseTensor,
    bias: DenseTensor,
    in_channels: usize,
    out_channels: usize,
}

impl ConvLayer {
    pub fn new(in_channels: usize, out_channels: usize, rng: &mut RngState) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(DecoderError::Config(
                "conv channel counts must be positive".into(),
            ));
        }
        let weight = xavier_init(&[out_channels, in_channels * KERNEL * KERNEL], rng)?;
        let bias = DenseTensor::parameter(vec![0.0; out_channels], &[out_channels, 1])?;
        Ok(Self {
            weight,
            bias,
            in_channels,
            out_channels,
        })
    }

    pub fn from_params(
        weight: DenseTensor,
        bias: DenseTensor,
        in_channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        if weight.shape() != [out_channels, in_channels * KERNEL * KERNEL] {
            return Err(DecoderError::Config(format!(
                "conv weight must be [{out_channels}, {}], got {:?}",
                in_channels * KERNEL * KERNEL,
                weight.shape()
            )));
        }
        if bias.shape() != [out_channels, 1] {
            return Err(DecoderError::Config(format!(
                "conv bias must be [{out_channels}, 1], got {:?}",
                bias.shape()
            )));
        }
        Ok(Self {
            weight,
            bias,
            in_channels,
            out_channels,
        })
    }

    pub fn weight(&self) -> &DenseTensor {
        &self.weight
    }

    pub fn bias(&self) -> &DenseTensor {
        &self.bias
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    /// Convolve a `[in_channels, height * width]` tensor; the output keeps
    /// the spatial extent: `[out_channels, height * width]`.
    pub fn forward(&self, x: &DenseTensor, height: usize, width: usize) -> Result<DenseTensor> {
        let geom = Conv2dGeom {
            in_channels: self.in_channels,
            height,
            width,
            kernel: KERNEL,
            stride: 1,
            padding: 1,
        };
        let col = im2col(x, geom)?;
        Ok(self.weight.matmul(&col)?.add(&self.bias)?)
    }
}

/// Two rectified convolution layers over a one-channel context map.
pub struct ConvStack {
    first: ConvLayer,
    second: ConvLayer,
}

impl ConvStack {
    pub fn new(channels: (usize, usize), rng: &mut RngState) -> Result<Self> {
        Ok(Self {
            first: ConvLayer::new(1, channels.0, rng)?,
            second: ConvLayer::new(channels.0, channels.1, rng)?,
        })
    }

    pub fn from_layers(first: ConvLayer, second: ConvLayer) -> Result<Self> {
        if first.out_channels != second.in_channels {
            return Err(DecoderError::Config(format!(
                "conv stack channel mismatch: {} feeds {}",
                first.out_channels, second.in_channels
            )));
        }
        if first.in_channels != 1 {
            return Err(DecoderError::Config(
                "conv stack expects a one-channel input map".into(),
            ));
        }
        Ok(Self { first, second })
    }

    pub fn layers(&self) -> (&ConvLayer, &ConvLayer) {
        (&self.first, &self.second)
    }

    pub fn out_channels(&self) -> usize {
        self.second.out_channels
    }

    /// Input `[1, height * width]`, output `[out_channels, height * width]`
    /// with rectification after each layer.
    pub fn forward(&self, x: &DenseTensor, height: usize, width: usize) -> Result<DenseTensor> {
        let a = self.first.forward(x, height, width)?.relu()?;
        Ok(self.second.forward(&a, height, width)?.relu()?)
    }
}

/// Mean over the spatial axis: `[channels, cells]` to `[1, channels]`.
pub fn global_average_pool(features: &DenseTensor) -> Result<DenseTensor> {
    if features.rank() != 2 {
        return Err(DecoderError::Config(format!(
            "pooling expects rank 2, got shape {:?}",
            features.shape()
        )));
    }
    Ok(features.mean_axis(1, true)?.transpose()?)
}
