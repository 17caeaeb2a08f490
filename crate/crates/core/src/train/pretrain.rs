use rand::seq::SliceRandom;

use super::config::TrainConfig;
use super::optim::AdamW;
use super::schedule::cosine_lr;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::MaskedAutoencoder;
use crate::multiscale::{multiscale_forward_with, LossOptions, MultiscaleHead};
use crate::rng::{stream, stream_at, Rng, Stream};

/// Mean losses over one pre-training epoch. Absent scales read 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLosses {
    pub epoch: usize,
    pub loss: f64,
    pub parts: [f64; 3],
}

impl EpochLosses {
    pub fn log_line(&self) -> String {
        format!(
            "epoch={} split=train loss={} l1={} l2={} l3={}",
            self.epoch, self.loss, self.parts[0], self.parts[1], self.parts[2]
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct PretrainReport {
    pub epochs: Vec<EpochLosses>,
    /// Batch-mean total loss of every optimizer step.
    pub step_losses: Vec<f64>,
}

pub fn steps_per_epoch(samples: usize, batch: usize) -> usize {
    samples.div_ceil(batch)
}

/// Stateful pre-training run, advanced one epoch at a time.
pub struct Pretrainer<'a> {
    model: &'a MaskedAutoencoder,
    head: &'a MultiscaleHead,
    cfg: TrainConfig,
    opt: AdamW,
    order_rng: Rng,
    mask_rng: Rng,
    step: usize,
    epoch: usize,
    pub report: PretrainReport,
}

impl<'a> Pretrainer<'a> {
    pub fn new(model: &'a MaskedAutoencoder, head: &'a MultiscaleHead, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if head.levels() < cfg.levels {
            return Err(Error::Config(format!(
                "head has {} levels, run needs {}",
                head.levels(),
                cfg.levels
            )));
        }
        let side = model.cfg.input_size;
        if cfg.levels == 3 && !side.is_multiple_of(4 * model.cfg.patch_size) {
            return Err(Error::Config(format!(
                "input size {side} must be divisible by 4*patch_size = {} for 3 levels",
                4 * model.cfg.patch_size
            )));
        }
        Ok(Self {
            model,
            head,
            opt: AdamW::new(&[&model.params, &head.params]),
            order_rng: stream(cfg.seed, Stream::Order),
            mask_rng: stream(cfg.seed, Stream::Mask),
            cfg,
            step: 0,
            epoch: 0,
            report: PretrainReport::default(),
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn run_epoch(&mut self, data: &[Sample]) -> Result<EpochLosses> {
        if data.is_empty() {
            return Err(Error::Config("empty pre-training set".into()));
        }
        let cfg = &self.cfg;
        let spe = steps_per_epoch(data.len(), cfg.batch_size);
        let total_steps = spe * cfg.total_epochs;
        let warmup_steps = spe * cfg.warmup_epochs;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.order_rng);

        let mut sums = [0.0; 4];
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            self.opt.zero_grad();
            let inv = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let sample = &data[i];
                let plan = if cfg.fixed_masks {
                    self.model.sample_mask(&mut stream_at(cfg.seed, ((Stream::Mask as u64) << 32) | i as u64))?
                } else {
                    self.model.sample_mask(&mut self.mask_rng)?
                };
                let f = self.model.forward(&sample.pyramid.base, &plan)?;
                let opts = LossOptions {
                    normalize: cfg.normalize_loss,
                    base_weight: if cfg.masked_only_loss {
                        Some(self.model.pixel_mask(&plan)?)
                    } else {
                        None
                    },
                };
                let out = multiscale_forward_with(self.head, &f, &sample.pyramid, cfg.weights, cfg.levels, &opts)?;
                let loss = out.loss.item();
                let parts: Vec<f64> = (0..3).map(|k| out.part(k).unwrap_or(0.0)).collect();
                if !loss.is_finite() {
                    return Err(Error::NonFinite {
                        epoch: self.epoch,
                        batch: batch_idx,
                        parts: format!("loss={loss} l1={} l2={} l3={}", parts[0], parts[1], parts[2]),
                    });
                }
                out.loss.scale(inv).backward()?;
                batch_loss += loss * inv;
                sums[0] += loss;
                for k in 0..3 {
                    sums[k + 1] += parts[k];
                }
            }
            let lr = cosine_lr(self.step, warmup_steps, total_steps, cfg.base_lr, cfg.min_lr);
            self.opt.step(lr, cfg.weight_decay, cfg.betas, cfg.eps)?;
            self.report.step_losses.push(batch_loss);
            self.step += 1;
        }
        let n = data.len() as f64;
        let losses = EpochLosses {
            epoch: self.epoch,
            loss: sums[0] / n,
            parts: [sums[1] / n, sums[2] / n, sums[3] / n],
        };
        self.report.epochs.push(losses);
        self.epoch += 1;
        Ok(losses)
    }
}

/// Runs every epoch of `cfg`, calling `on_epoch` after each.
pub fn pretrain(
    model: &MaskedAutoencoder,
    head: &MultiscaleHead,
    data: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLosses),
) -> Result<PretrainReport> {
    let mut trainer = Pretrainer::new(model, head, cfg.clone())?;
    for _ in 0..cfg.total_epochs {
        let losses = trainer.run_epoch(data)?;
        on_epoch(&losses);
    }
    Ok(trainer.report)
}
