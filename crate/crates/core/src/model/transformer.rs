//! Pre-norm transformer blocks over `[N, D]` token matrices.

use crate::error::Result;
use crate::layers::{LayerNorm, Linear};
use crate::params::ParamStore;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone)]
pub struct Attention {
    qkv: Linear,
    proj: Linear,
    heads: usize,
}

impl Attention {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            qkv: Linear::new(store, &format!("{prefix}.qkv"), dim, 3 * dim, rng)?,
            proj: Linear::new(store, &format!("{prefix}.proj"), dim, dim, rng)?,
            heads,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, d) = (x.shape()[0], x.shape()[1]);
        let dh = d / self.heads;
        let qkv = self.qkv.forward(x)?;
        // [N, D] -> [heads, N, dh]
        let split = |i: usize| -> Result<Tensor> {
            qkv.narrow(1, i * d, d)?.reshape(&[n, self.heads, dh])?.permute(&[1, 0, 2])
        };
        let (q, k, v) = (split(0)?, split(1)?, split(2)?);
        let scores = q.matmul(&k.t()?)?.scale(1.0 / (dh as f64).sqrt());
        let out = scores.softmax(2)?.matmul(&v)?;
        self.proj.forward(&out.permute(&[1, 0, 2])?.reshape(&[n, d])?)
    }
}

#[derive(Clone)]
pub struct Mlp {
    fc1: Linear,
    fc2: Linear,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(store, &format!("{prefix}.fc1"), dim, hidden, rng)?,
            fc2: Linear::new(store, &format!("{prefix}.fc2"), hidden, dim, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&self.fc1.forward(x)?.gelu())
    }
}

#[derive(Clone)]
pub struct Block {
    norm1: LayerNorm,
    attn: Attention,
    norm2: LayerNorm,
    mlp: Mlp,
}

impl Block {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        heads: usize,
        mlp_ratio: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::new(store, &format!("{prefix}.norm1"), dim)?,
            attn: Attention::new(store, &format!("{prefix}.attn"), dim, heads, rng)?,
            norm2: LayerNorm::new(store, &format!("{prefix}.norm2"), dim)?,
            mlp: Mlp::new(store, &format!("{prefix}.mlp"), dim, dim * mlp_ratio, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = x.add(&self.attn.forward(&self.norm1.forward(x)?)?)?;
        x.add(&self.mlp.forward(&self.norm2.forward(&x)?)?)
    }
}

/// A stack of blocks followed by a final norm.
#[derive(Clone)]
pub struct Transformer {
    blocks: Vec<Block>,
    norm: LayerNorm,
}

impl Transformer {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        depth: usize,
        heads: usize,
        mlp_ratio: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let blocks = (0..depth)
            .map(|i| Block::new(store, &format!("{prefix}.blocks.{i}"), dim, heads, mlp_ratio, rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            blocks,
            norm: LayerNorm::new(store, &format!("{prefix}.norm"), dim)?,
        })
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut x = x.clone();
        for b in &self.blocks {
            x = b.forward(&x)?;
        }
        self.norm.forward(&x)
    }
}
