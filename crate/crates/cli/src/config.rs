//! Flat `key = value` run configuration.

use std::path::Path;

use msmae::data::{default_grouping, rgb_bands, sentinel_retained_bands, BandSpec, ChannelGrouping, SynthConfig};
use msmae::model::{Grouping, ModelConfig, GROUPED_SPLIT, RGB_SPLIT};
use msmae::multiscale::LossWeights;
use msmae::train::{default_warmup, AblationSetup, Task, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandSet {
    /// Ten retained Sentinel-2 bands in three same-GSD groups.
    Sentinel,
    /// Red, green, blue in one group.
    Rgb,
}

/// Every field has a default; a file only lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    pub bands: BandSet,
    /// Model input side; synthetic scenes are rendered at 4x this.
    pub input_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub decoder_dim: usize,
    pub decoder_depth: usize,
    pub decoder_heads: usize,
    pub mask_ratio: f64,
    /// Fractions of the width for (x, y, group) encodings; defaults depend
    /// on `bands`.
    pub enc_split: Option<[f64; 3]>,
    pub feat_ch: usize,

    pub levels: usize,
    pub alpha: [f64; 3],
    pub normalize_loss: bool,
    pub masked_only_loss: bool,
    /// One mask per sample for the whole run instead of a fresh one per step.
    pub fixed_masks: bool,
    pub pretrain_epochs: usize,
    pub pretrain_warmup: Option<usize>,
    pub pretrain_batch: usize,
    pub pretrain_lr: f64,
    pub weight_decay: f64,
    /// Save a checkpoint every this many epochs; 0 keeps only the final one.
    pub save_interval: usize,

    pub task: Task,
    pub finetune_epochs: usize,
    pub finetune_warmup: Option<usize>,
    pub finetune_batch: usize,
    pub finetune_lr: f64,

    pub data_seed: u64,
    pub n_classes: usize,
    pub pretrain_samples: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    /// Validate on the training split instead of a held-out one.
    pub eval_on_train: bool,
    pub base_frequency: f64,
    pub clutter_amplitude: f64,
    pub noise_std: f64,
    pub blur_per_10m: f64,

    pub ablation_seeds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            bands: BandSet::Sentinel,
            input_size: 16,
            patch_size: 4,
            embed_dim: 32,
            depth: 2,
            heads: 2,
            mlp_ratio: 2,
            decoder_dim: 16,
            decoder_depth: 1,
            decoder_heads: 2,
            mask_ratio: 0.75,
            enc_split: None,
            feat_ch: 8,
            levels: 3,
            alpha: [1.0, 1.0, 1.0],
            normalize_loss: false,
            masked_only_loss: false,
            fixed_masks: false,
            pretrain_epochs: 15,
            pretrain_warmup: None,
            pretrain_batch: 8,
            pretrain_lr: 1e-3,
            weight_decay: 0.05,
            save_interval: 0,
            task: Task::SingleLabel,
            finetune_epochs: 30,
            finetune_warmup: None,
            finetune_batch: 8,
            finetune_lr: 5e-4,
            data_seed: 11,
            n_classes: 6,
            pretrain_samples: 256,
            train_samples: 96,
            val_samples: 192,
            eval_on_train: false,
            base_frequency: 3.0,
            clutter_amplitude: 0.6,
            noise_std: 0.02,
            blur_per_10m: 0.5,
            ablation_seeds: 8,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn band_specs(&self) -> Vec<BandSpec> {
        match self.bands {
            BandSet::Sentinel => sentinel_retained_bands(),
            BandSet::Rgb => rgb_bands(),
        }
    }

    pub fn model(&self) -> ModelConfig {
        let (grouping, split) = match self.bands {
            BandSet::Sentinel => (Grouping::from_channel_grouping(&default_grouping()), GROUPED_SPLIT),
            BandSet::Rgb => (Grouping::RgbSingleGroup { channels: 3 }, RGB_SPLIT),
        };
        ModelConfig {
            patch_size: self.patch_size,
            embed_dim: self.embed_dim,
            depth: self.depth,
            heads: self.heads,
            mlp_ratio: self.mlp_ratio,
            decoder_dim: self.decoder_dim,
            decoder_depth: self.decoder_depth,
            decoder_heads: self.decoder_heads,
            mask_ratio: self.mask_ratio,
            grouping,
            input_size: self.input_size,
            enc_split: self.enc_split.unwrap_or(split),
            feat_ch: self.feat_ch,
        }
    }

    /// Channel groups as positions within the rendered band list.
    pub fn channel_grouping(&self) -> ChannelGrouping {
        match self.bands {
            BandSet::Sentinel => default_grouping(),
            BandSet::Rgb => ChannelGrouping::single(3),
        }
    }

    pub fn pretrain_config(&self) -> TrainConfig {
        TrainConfig {
            base_lr: self.pretrain_lr,
            warmup_epochs: self.pretrain_warmup.unwrap_or(default_warmup(self.pretrain_epochs)),
            total_epochs: self.pretrain_epochs,
            batch_size: self.pretrain_batch,
            weight_decay: self.weight_decay,
            weights: LossWeights(self.alpha),
            levels: self.levels,
            seed: self.seed,
            normalize_loss: self.normalize_loss,
            masked_only_loss: self.masked_only_loss,
            fixed_masks: self.fixed_masks,
            ..TrainConfig::pretrain(self.pretrain_epochs, self.seed)
        }
    }

    pub fn finetune_config(&self) -> TrainConfig {
        TrainConfig {
            base_lr: self.finetune_lr,
            warmup_epochs: self.finetune_warmup.unwrap_or(default_warmup(self.finetune_epochs)),
            batch_size: self.finetune_batch,
            weight_decay: self.weight_decay,
            ..TrainConfig::finetune(self.finetune_epochs, self.seed)
        }
    }

    fn synth(&self, seed: u64, count: usize) -> SynthConfig {
        SynthConfig {
            multilabel: self.task == Task::MultiLabel,
            base_frequency: self.base_frequency,
            clutter_amplitude: self.clutter_amplitude,
            noise_std: self.noise_std,
            blur_per_10m: self.blur_per_10m,
            levels: 3,
            ..SynthConfig::new(seed, count, self.band_specs(), 4 * self.input_size, self.n_classes)
        }
    }

    pub fn pretrain_data(&self) -> SynthConfig {
        self.synth(self.data_seed, self.pretrain_samples)
    }

    pub fn train_data(&self) -> SynthConfig {
        self.synth(self.data_seed + 1000, self.train_samples)
    }

    pub fn val_data(&self) -> SynthConfig {
        if self.eval_on_train {
            return self.train_data();
        }
        self.synth(self.data_seed + 2000, self.val_samples)
    }

    pub fn ablation_setup(&self) -> AblationSetup {
        AblationSetup {
            model: self.model(),
            pretrain_data: self.pretrain_data(),
            train_data: self.train_data(),
            val_data: self.val_data(),
            pretrain: self.pretrain_config(),
            finetune: self.finetune_config(),
            task: self.task,
        }
    }

    /// Checks everything a run needs before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let model = self.model();
        model.validate()?;
        self.pretrain_config().validate()?;
        self.finetune_config().validate()?;
        if self.levels == 3 && !self.input_size.is_multiple_of(4 * self.patch_size) {
            return Err(CliError::Config(format!(
                "input_size {} must be divisible by 4*patch_size = {} for levels = 3",
                self.input_size,
                4 * self.patch_size
            )));
        }
        if self.levels == 2 && !self.input_size.is_multiple_of(2 * self.patch_size) {
            return Err(CliError::Config(format!(
                "input_size {} must be divisible by 2*patch_size = {} for levels = 2",
                self.input_size,
                2 * self.patch_size
            )));
        }
        if self.n_classes < 2 || self.pretrain_samples == 0 || self.train_samples == 0 || self.val_samples == 0 {
            return Err(CliError::Config("need n_classes >= 2 and non-empty data splits".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        let rgb = RunConfig {
            bands: BandSet::Rgb,
            ..Default::default()
        };
        rgb.validate().unwrap();
    }

    #[test]
    fn file_overrides_defaults() {
        let cfg = RunConfig::from_toml("seed = 5\nalpha = [1.0, 0.5, 0.0]\nbands = \"rgb\"\n").unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.alpha, [1.0, 0.5, 0.0]);
        assert_eq!(cfg.bands, BandSet::Rgb);
        assert_eq!(cfg.embed_dim, RunConfig::default().embed_dim);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml("embed_dimm = 3\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("embed_dimm"), "{err}");
    }

    #[test]
    fn divisibility_is_checked() {
        let cfg = RunConfig {
            input_size: 24,
            patch_size: 4,
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("divisible"), "{err}");
    }
}
