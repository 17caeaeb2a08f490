use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiscale::LossWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weights: LossWeights,
    /// Scale levels trained: 1 (base only), 2 or 3.
    pub levels: usize,
    pub seed: u64,
    /// Divide the weighted loss sum by the sum of active weights.
    pub normalize_loss: bool,
    /// Restrict the base-scale loss to masked patches.
    pub masked_only_loss: bool,
    /// Give every sample one mask for the whole run, keyed by its index.
    /// Removes mask noise when checking that the model can fit a set.
    pub fixed_masks: bool,
}

/// Warmup length used when none is given: 10% of the run.
pub fn default_warmup(total_epochs: usize) -> usize {
    total_epochs / 10
}

impl TrainConfig {
    pub fn pretrain(total_epochs: usize, seed: u64) -> Self {
        Self {
            base_lr: 1e-3,
            min_lr: 0.0,
            warmup_epochs: default_warmup(total_epochs),
            total_epochs,
            batch_size: 16,
            weight_decay: 0.05,
            betas: (0.9, 0.95),
            eps: 1e-8,
            weights: LossWeights::default(),
            levels: 3,
            seed,
            normalize_loss: false,
            masked_only_loss: false,
            fixed_masks: false,
        }
    }

    pub fn finetune(total_epochs: usize, seed: u64) -> Self {
        Self {
            base_lr: 2e-3,
            betas: (0.9, 0.999),
            levels: 1,
            ..Self::pretrain(total_epochs, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.base_lr.is_nan() || self.base_lr <= 0.0 || self.min_lr < 0.0 || self.min_lr > self.base_lr {
            return err(format!("need 0 <= min_lr <= base_lr and base_lr > 0 (got {}, {})", self.min_lr, self.base_lr));
        }
        if self.total_epochs == 0 || self.warmup_epochs >= self.total_epochs {
            return err(format!(
                "warmup_epochs {} must be below total_epochs {}",
                self.warmup_epochs, self.total_epochs
            ));
        }
        if self.batch_size == 0 {
            return err("batch_size must be positive".into());
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return err(format!("betas {:?} outside [0, 1)", self.betas));
        }
        if self.weight_decay < 0.0 || self.eps.is_nan() || self.eps <= 0.0 {
            return err("weight_decay must be >= 0 and eps > 0".into());
        }
        if !(1..=3).contains(&self.levels) {
            return err(format!("levels must be 1, 2 or 3 (got {})", self.levels));
        }
        self.weights.validate()
    }
}
