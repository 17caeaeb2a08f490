//! Small parameterised building blocks shared by the encoder, decoder and
//! upsampling head.

use crate::error::Result;
use crate::params::{ParamStore, EMBED_INIT_STD};
use crate::rng::Rng;
use crate::tensor::{Tensor, DEFAULT_LAYER_NORM_EPS};

/// `y = x W + b` over the last axis; `W` is `[in, out]`.
#[derive(Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, output: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            weight: store.truncated_normal(format!("{prefix}.weight"), &[input, output], EMBED_INIT_STD, rng)?,
            bias: store.constant(format!("{prefix}.bias"), &[output], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.weight)?.add(&self.bias)
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[1]
    }
}

#[derive(Clone)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub bias: Tensor,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, prefix: &str, width: usize) -> Result<Self> {
        Ok(Self {
            gain: store.constant(format!("{prefix}.gain"), &[width], 1.0)?,
            bias: store.constant(format!("{prefix}.bias"), &[width], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.layer_norm(&self.gain, &self.bias, DEFAULT_LAYER_NORM_EPS)
    }
}

/// Square-kernel convolution with fan-in uniform weights and zero bias.
#[derive(Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub pad: usize,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        output: usize,
        kernel: usize,
        pad: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Self {
            weight: store.uniform_fan_in(
                format!("{prefix}.weight"),
                &[output, input, kernel, kernel],
                input * kernel * kernel,
                rng,
            )?,
            bias: store.constant(format!("{prefix}.bias"), &[output], 0.0)?,
            pad,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.conv2d(&self.weight, Some(&self.bias), 1, self.pad)
    }
}
