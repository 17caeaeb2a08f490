use serde::{Deserialize, Serialize};

use crate::data::ChannelGrouping;
use crate::error::{Error, Result};

/// How image channels map to patch-embedding groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// All channels share one embedding; no spectral encoding slice.
    RgbSingleGroup { channels: usize },
    /// Channel-index groups, each with its own embedding and mask.
    Groups { groups: Vec<Vec<usize>> },
}

impl Grouping {
    pub fn from_channel_grouping(g: &ChannelGrouping) -> Self {
        Grouping::Groups {
            groups: g.channel_groups(),
        }
    }

    pub fn channel_groups(&self) -> Vec<Vec<usize>> {
        match self {
            Grouping::RgbSingleGroup { channels } => vec![(0..*channels).collect()],
            Grouping::Groups { groups } => groups.clone(),
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Grouping::RgbSingleGroup { channels } => *channels,
            Grouping::Groups { groups } => groups.iter().map(Vec::len).sum(),
        }
    }

    pub fn n_groups(&self) -> usize {
        match self {
            Grouping::RgbSingleGroup { .. } => 1,
            Grouping::Groups { groups } => groups.len(),
        }
    }

    pub fn spectral(&self) -> bool {
        matches!(self, Grouping::Groups { .. })
    }
}

/// Widths of the x / y / group slices of a positional encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingSplit {
    pub x: usize,
    pub y: usize,
    pub group: usize,
}

impl EncodingSplit {
    pub fn total(&self) -> usize {
        self.x + self.y + self.group
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub decoder_dim: usize,
    pub decoder_depth: usize,
    pub decoder_heads: usize,
    pub mask_ratio: f64,
    pub grouping: Grouping,
    /// Model input side `H = W`.
    pub input_size: usize,
    /// Fractions of the embedding width given to (x, y, group) encodings.
    pub enc_split: [f64; 3],
    /// Feature width of the upsampling head.
    pub feat_ch: usize,
}

pub const GROUPED_SPLIT: [f64; 3] = [0.375, 0.375, 0.25];
pub const RGB_SPLIT: [f64; 3] = [0.5, 0.5, 0.0];

impl ModelConfig {
    /// Three-group multi-spectral configuration over the retained Sentinel-2
    /// bands.
    pub fn grouped(grouping: &ChannelGrouping, input_size: usize, patch_size: usize) -> Self {
        Self {
            patch_size,
            embed_dim: 128,
            depth: 4,
            heads: 4,
            mlp_ratio: 4,
            decoder_dim: 64,
            decoder_depth: 4,
            decoder_heads: 4,
            mask_ratio: 0.75,
            grouping: Grouping::from_channel_grouping(grouping),
            input_size,
            enc_split: GROUPED_SPLIT,
            feat_ch: 64,
        }
    }

    pub fn rgb(input_size: usize, patch_size: usize) -> Self {
        Self {
            grouping: Grouping::RgbSingleGroup { channels: 3 },
            enc_split: RGB_SPLIT,
            ..Self::grouped(&ChannelGrouping::single(3), input_size, patch_size)
        }
    }

    pub fn channels(&self) -> usize {
        self.grouping.channels()
    }

    pub fn grid(&self) -> usize {
        self.input_size / self.patch_size
    }

    pub fn tokens_per_group(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn total_tokens(&self) -> usize {
        self.tokens_per_group() * self.grouping.n_groups()
    }

    /// Splits `dim` by `enc_split`; every part must be even and the parts
    /// must sum to `dim`.
    pub fn split_for(&self, dim: usize) -> Result<EncodingSplit> {
        let [fx, fy, fg] = self.enc_split;
        let x = (fx * dim as f64).round() as usize;
        let y = (fy * dim as f64).round() as usize;
        let group = (fg * dim as f64).round() as usize;
        let split = EncodingSplit { x, y, group };
        if split.total() != dim || !x.is_multiple_of(2) || !y.is_multiple_of(2) || !group.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "enc_split {:?} does not divide width {dim} into even parts",
                self.enc_split
            )));
        }
        if !self.grouping.spectral() && group != 0 {
            return Err(Error::Config("single-group mode takes no group encoding".into()));
        }
        if x == 0 || y == 0 {
            return Err(Error::Config("x and y encodings need nonzero width".into()));
        }
        Ok(split)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || !self.input_size.is_multiple_of(self.patch_size) {
            return err(format!(
                "input_size {} not divisible by patch_size {}",
                self.input_size, self.patch_size
            ));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return err(format!("mask_ratio {} outside (0, 1)", self.mask_ratio));
        }
        if self.heads == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return err(format!("embed_dim {} not divisible by heads {}", self.embed_dim, self.heads));
        }
        if self.decoder_heads == 0 || !self.decoder_dim.is_multiple_of(self.decoder_heads) {
            return err(format!(
                "decoder_dim {} not divisible by decoder_heads {}",
                self.decoder_dim, self.decoder_heads
            ));
        }
        if self.mlp_ratio == 0 || self.feat_ch == 0 {
            return err("mlp_ratio and feat_ch must be positive".into());
        }
        let c = self.channels();
        let mut seen = vec![false; c];
        for g in self.grouping.channel_groups() {
            if g.is_empty() {
                return err("empty channel group".into());
            }
            for ch in g {
                if ch >= c || std::mem::replace(&mut seen[ch], true) {
                    return err(format!("channel groups do not partition 0..{c}"));
                }
            }
        }
        self.split_for(self.embed_dim)?;
        self.split_for(self.decoder_dim)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_grouping;

    #[test]
    fn default_splits() {
        let cfg = ModelConfig::grouped(&default_grouping(), 32, 4);
        cfg.validate().unwrap();
        assert_eq!(cfg.split_for(128).unwrap(), EncodingSplit { x: 48, y: 48, group: 32 });
        assert_eq!(cfg.total_tokens(), 3 * 64);
        let rgb = ModelConfig::rgb(32, 8);
        rgb.validate().unwrap();
        assert_eq!(rgb.split_for(64).unwrap(), EncodingSplit { x: 32, y: 32, group: 0 });
    }

    #[test]
    fn rejects_bad_configs() {
        let base = ModelConfig::grouped(&default_grouping(), 32, 4);
        let mut c = base.clone();
        c.mask_ratio = 1.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.input_size = 30;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.embed_dim = 20;
        c.heads = 4;
        assert!(c.validate().is_err());
        let mut c = base;
        c.enc_split = [0.5, 0.25, 0.25];
        c.embed_dim = 12;
        c.heads = 1;
        assert!(c.validate().is_err());
    }
}
