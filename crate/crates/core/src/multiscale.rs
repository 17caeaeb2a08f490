//! Upsampling head that reconstructs the input at 2× and 4× from the base
//! reconstruction, plus the combined multi-scale loss.

use serde::{Deserialize, Serialize};

use crate::data::ScalePyramid;
use crate::error::{Error, Result};
use crate::layers::{Conv2d, LayerNorm};
use crate::params::ParamStore;
use crate::rng::{stream, Rng, Stream};
use crate::tensor::{Tensor, DEFAULT_LEAKY_SLOPE};

/// Per-scale loss weights `(α1, α2, α3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LossWeights(pub [f64; 3]);

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights([1.0, 1.0, 1.0])
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|a| !a.is_finite() || *a < 0.0) || self.0[0] <= 0.0 {
            return Err(Error::Config(format!(
                "loss weights {:?} must be nonnegative with alpha1 > 0",
                self.0
            )));
        }
        Ok(())
    }
}

fn batched(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 3 {
        return Err(Error::shape("multiscale", format!("expected [C, H, W], got {s:?}")));
    }
    x.reshape(&[1, s[0], s[1], s[2]])
}

fn unbatched(x: &Tensor) -> Result<Tensor> {
    x.reshape(&x.shape()[1..])
}

/// Transpose conv ×2, channel layer norm, leaky ReLU, then a two-conv
/// residual block.
#[derive(Clone)]
pub struct UpsampleBlock {
    pub up_weight: Tensor,
    pub up_bias: Tensor,
    pub norm: LayerNorm,
    pub res1: Conv2d,
    pub res2: Conv2d,
}

impl UpsampleBlock {
    pub fn new(store: &mut ParamStore, prefix: &str, ch: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            up_weight: store.uniform_fan_in(format!("{prefix}.up.weight"), &[ch, ch, 2, 2], ch * 4, rng)?,
            up_bias: store.constant(format!("{prefix}.up.bias"), &[ch], 0.0)?,
            norm: LayerNorm::new(store, &format!("{prefix}.norm"), ch)?,
            res1: Conv2d::new(store, &format!("{prefix}.res1"), ch, ch, 3, 1, rng)?,
            res2: Conv2d::new(store, &format!("{prefix}.res2"), ch, ch, 3, 1, rng)?,
        })
    }

    /// Upsampled, normalized and activated features before the residual.
    pub fn upsample(&self, x: &Tensor) -> Result<Tensor> {
        let up = x.transpose_conv2d(&self.up_weight, Some(&self.up_bias), 2, 2)?;
        let normed = self.norm.forward(&up.permute(&[0, 2, 3, 1])?)?.permute(&[0, 3, 1, 2])?;
        Ok(normed.leaky_relu(DEFAULT_LEAKY_SLOPE))
    }

    /// `[B, ch, H, W]` to `[B, ch, 2H, 2W]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let u = self.upsample(x)?;
        let r = self.res2.forward(&self.res1.forward(&u)?.leaky_relu(DEFAULT_LEAKY_SLOPE))?;
        u.add(&r)
    }
}

#[derive(Clone)]
pub struct MultiscaleHead {
    pub params: ParamStore,
    pub lift: Conv2d,
    pub blocks: Vec<UpsampleBlock>,
    pub project: Vec<Conv2d>,
}

impl MultiscaleHead {
    /// Head for `levels` scales (1 = base only, no upsampling blocks).
    pub fn new(channels: usize, feat_ch: usize, levels: usize, seed: u64) -> Result<Self> {
        if !(1..=3).contains(&levels) {
            return Err(Error::Config(format!("levels must be 1, 2 or 3 (got {levels})")));
        }
        let mut rng = stream(seed, Stream::HeadInit);
        let mut params = ParamStore::new();
        let lift = Conv2d::new(&mut params, "head.lift", channels, feat_ch, 1, 0, &mut rng)?;
        let mut blocks = Vec::new();
        let mut project = Vec::new();
        for i in 0..levels - 1 {
            blocks.push(UpsampleBlock::new(&mut params, &format!("head.block.{i}"), feat_ch, &mut rng)?);
            project.push(Conv2d::new(&mut params, &format!("head.project.{i}"), feat_ch, channels, 1, 0, &mut rng)?);
        }
        Ok(Self {
            params,
            lift,
            blocks,
            project,
        })
    }

    pub fn levels(&self) -> usize {
        self.blocks.len() + 1
    }

    /// `[C, H, W]` to `[feat_ch, H, W]`.
    pub fn lift_to_features(&self, f: &Tensor) -> Result<Tensor> {
        unbatched(&self.lift.forward(&batched(f)?)?)
    }

    /// Projects `[feat_ch, h, w]` features of upsampling stage `stage` to
    /// image space.
    pub fn project_to_image(&self, x: &Tensor, stage: usize) -> Result<Tensor> {
        unbatched(&self.project[stage].forward(&batched(x)?)?)
    }

    /// Images at 2× and (for three levels) 4× the base resolution. Each
    /// block consumes the previous block's features.
    pub fn upscale(&self, f: &Tensor, levels: usize) -> Result<Vec<Tensor>> {
        if levels > self.levels() {
            return Err(Error::Config(format!("head built for {} levels, asked for {levels}", self.levels())));
        }
        let mut x = self.lift.forward(&batched(f)?)?;
        let mut out = Vec::with_capacity(levels.saturating_sub(1));
        for i in 0..levels.saturating_sub(1) {
            x = self.blocks[i].forward(&x)?;
            out.push(unbatched(&self.project[i].forward(&x)?)?);
        }
        Ok(out)
    }
}

pub struct ScaleLosses {
    pub loss: Tensor,
    /// Per-scale losses; absent scales are `None`.
    pub parts: [Option<Tensor>; 3],
    pub f_hat: Option<Tensor>,
    pub f_bar: Option<Tensor>,
}

impl ScaleLosses {
    pub fn part(&self, i: usize) -> Option<f64> {
        self.parts[i].as_ref().map(Tensor::item)
    }
}

/// `Σ αᵢ Lᵢ` over the given parts, optionally divided by the sum of the
/// weights in use.
pub fn combine_losses(parts: &[Tensor], weights: LossWeights, normalize: bool) -> Result<Tensor> {
    let mut total = parts[0].scale(weights.0[0]);
    for (p, &a) in parts.iter().zip(&weights.0).skip(1) {
        total = total.add(&p.scale(a))?;
    }
    if normalize {
        let sum: f64 = weights.0[..parts.len()].iter().sum();
        total = total.scale(1.0 / sum);
    }
    Ok(total)
}

#[derive(Clone, Default)]
pub struct LossOptions {
    /// Divide by the sum of active weights.
    pub normalize: bool,
    /// Per-pixel weights for the base loss, shaped like `F`; `None` means
    /// every pixel counts.
    pub base_weight: Option<Tensor>,
}

fn weighted_mse(f: &Tensor, target: &Tensor, weight: &Tensor) -> Result<Tensor> {
    let total: f64 = weight.data().iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("base loss weight is all zero".into()));
    }
    let diff = f.sub(target)?;
    Ok(diff.mul(&diff)?.mul(weight)?.sum().scale(1.0 / total))
}

/// Base loss is MSE against the pyramid base; upscaled losses are L1.
pub fn multiscale_forward(
    head: &MultiscaleHead,
    f: &Tensor,
    pyramid: &ScalePyramid,
    weights: LossWeights,
    levels: usize,
    normalize: bool,
) -> Result<ScaleLosses> {
    let opts = LossOptions {
        normalize,
        base_weight: None,
    };
    multiscale_forward_with(head, f, pyramid, weights, levels, &opts)
}

pub fn multiscale_forward_with(
    head: &MultiscaleHead,
    f: &Tensor,
    pyramid: &ScalePyramid,
    weights: LossWeights,
    levels: usize,
    opts: &LossOptions,
) -> Result<ScaleLosses> {
    if !(1..=3).contains(&levels) || pyramid.levels() < levels {
        return Err(Error::Config(format!(
            "cannot run {levels} levels on a {}-level pyramid",
            pyramid.levels()
        )));
    }
    let l1 = match &opts.base_weight {
        Some(w) => weighted_mse(f, &pyramid.base, w)?,
        None => f.mse_loss(&pyramid.base)?,
    };
    let ups = head.upscale(f, levels)?;
    let mut parts = vec![l1];
    if let Some(f_hat) = ups.first() {
        parts.push(f_hat.l1_loss(&pyramid.mid)?);
    }
    if let Some(f_bar) = ups.get(1) {
        let top = pyramid.top.as_ref().ok_or_else(|| Error::Config("pyramid has no top level".into()))?;
        parts.push(f_bar.l1_loss(top)?);
    }
    let loss = combine_losses(&parts, weights, opts.normalize)?;
    let mut it = parts.into_iter();
    let mut ups = ups.into_iter();
    Ok(ScaleLosses {
        loss,
        parts: [it.next(), it.next(), it.next()],
        f_hat: ups.next(),
        f_bar: ups.next(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_sum_of_forced_values() {
        let parts = [Tensor::scalar(0.5), Tensor::scalar(0.2)];
        let loss = combine_losses(&parts, LossWeights([1.0, 1.0, 0.0]), false).unwrap();
        assert!((loss.item() - 0.7).abs() < 1e-15);
        let mean = combine_losses(&parts, LossWeights([1.0, 3.0, 5.0]), true).unwrap();
        assert!((mean.item() - 1.1 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn weight_validation() {
        assert!(LossWeights([0.0, 1.0, 1.0]).validate().is_err());
        assert!(LossWeights([1.0, -1.0, 1.0]).validate().is_err());
        assert!(LossWeights([1.0, 0.0, 0.0]).validate().is_ok());
    }

    #[test]
    fn block_doubles_extent() {
        let head = MultiscaleHead::new(3, 16, 2, 0).unwrap();
        let x = Tensor::full(&[1, 16, 8, 8], 0.3);
        assert_eq!(head.blocks[0].forward(&x).unwrap().shape(), &[1, 16, 16, 16]);
    }

    #[test]
    fn level_bounds() {
        assert!(MultiscaleHead::new(3, 4, 0, 0).is_err());
        assert!(MultiscaleHead::new(3, 4, 4, 0).is_err());
        assert_eq!(MultiscaleHead::new(3, 4, 3, 0).unwrap().levels(), 3);
    }
}
