//! Masked autoencoder over channel-grouped patch tokens.

mod classifier;
mod config;
mod mae;
mod mask;
mod posenc;
mod transformer;

pub use classifier::Classifier;
pub use config::{EncodingSplit, Grouping, ModelConfig, GROUPED_SPLIT, RGB_SPLIT};
pub use mae::{Backbone, Decoder, Encoder, MaskedAutoencoder, PatchEmbed, TokenSequence};
pub use mask::{masked_count, sample_mask, GroupMask, MaskPlan};
pub use posenc::{grid_pos_encoding, sinusoidal_encoding, DEFAULT_OMEGA};
pub use transformer::{Attention, Block, Mlp, Transformer};
