use super::config::ModelConfig;
use super::mask::{sample_mask, MaskPlan};
use super::posenc::grid_pos_encoding;
use super::transformer::Transformer;
use crate::data::{patchify, unpatchify};
use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::params::{ParamStore, EMBED_INIT_STD};
use crate::rng::{stream, Rng, Stream};
use crate::tensor::Tensor;

/// Embedded patches of every group, group-major.
#[derive(Debug, Clone)]
pub struct TokenSequence {
    pub tokens: Tensor,
    pub group_of_token: Vec<usize>,
    /// (row, col) of each token's patch.
    pub position_of_token: Vec<(usize, usize)>,
}

#[derive(Clone)]
pub struct PatchEmbed {
    embeds: Vec<Linear>,
    groups: Vec<Vec<usize>>,
    channels: usize,
    patch: usize,
    grid: usize,
}

impl PatchEmbed {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let groups = cfg.grouping.channel_groups();
        let p2 = cfg.patch_size * cfg.patch_size;
        let embeds = groups
            .iter()
            .enumerate()
            .map(|(g, chans)| Linear::new(store, &format!("patch_embed.{g}"), p2 * chans.len(), cfg.embed_dim, rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            embeds,
            groups,
            channels: cfg.channels(),
            patch: cfg.patch_size,
            grid: cfg.grid(),
        })
    }

    pub fn forward(&self, image: &Tensor) -> Result<TokenSequence> {
        let side = self.grid * self.patch;
        if image.shape() != [self.channels, side, side] {
            return Err(Error::Dimension {
                op: "patch_embed",
                lhs: image.shape().to_vec(),
                rhs: vec![self.channels, side, side],
            });
        }
        let mut parts = Vec::with_capacity(self.groups.len());
        for (chans, embed) in self.groups.iter().zip(&self.embeds) {
            let sub = if chans.len() == self.channels && chans.iter().enumerate().all(|(i, &c)| i == c) {
                image.clone()
            } else {
                image.index_select(chans)?
            };
            parts.push(embed.forward(&patchify(&sub, self.patch)?)?);
        }
        let n = self.grid * self.grid;
        let groups = self.groups.len();
        Ok(TokenSequence {
            tokens: Tensor::concat(&parts, 0)?,
            group_of_token: (0..groups * n).map(|i| i / n).collect(),
            position_of_token: (0..groups * n).map(|i| ((i % n) / self.grid, i % self.grid)).collect(),
        })
    }
}

#[derive(Clone)]
pub struct Encoder {
    body: Transformer,
    pos: Tensor,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let split = cfg.split_for(cfg.embed_dim)?;
        Ok(Self {
            body: Transformer::new(store, "encoder", cfg.embed_dim, cfg.depth, cfg.heads, cfg.mlp_ratio, rng)?,
            pos: grid_pos_encoding(cfg.grid(), cfg.grid(), split, cfg.grouping.n_groups())?,
        })
    }

    /// Fixed encodings for every token slot, `[N_total, D]`.
    pub fn pos(&self) -> &Tensor {
        &self.pos
    }

    /// Runs the blocks and final norm on an arbitrary token matrix.
    pub fn forward_tokens(&self, x: &Tensor) -> Result<Tensor> {
        self.body.forward(x)
    }

    /// Adds encodings to the visible tokens and encodes them, in
    /// visible-index order.
    pub fn encode(&self, tokens: &TokenSequence, plan: &MaskPlan) -> Result<Tensor> {
        if tokens.tokens.shape()[0] != plan.total() {
            return Err(Error::shape(
                "encode",
                format!("{} tokens for a plan over {}", tokens.tokens.shape()[0], plan.total()),
            ));
        }
        let visible = plan.visible_global();
        let x = tokens.tokens.index_select(&visible)?.add(&self.pos.index_select(&visible)?)?;
        self.forward_tokens(&x)
    }
}

#[derive(Clone)]
pub struct Decoder {
    embed: Linear,
    mask_token: Tensor,
    pos: Tensor,
    body: Transformer,
    heads: Vec<Linear>,
    groups: Vec<Vec<usize>>,
    /// Reassembled channel order back to image order; `None` when identity.
    inverse_channels: Option<Vec<usize>>,
    patch: usize,
    side: usize,
}

impl Decoder {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let d = cfg.decoder_dim;
        let split = cfg.split_for(d)?;
        let embed = Linear::new(store, "decoder.embed", cfg.embed_dim, d, rng)?;
        let mask_token = store.truncated_normal("decoder.mask_token", &[1, d], EMBED_INIT_STD, rng)?;
        let body = Transformer::new(store, "decoder", d, cfg.decoder_depth, cfg.decoder_heads, cfg.mlp_ratio, rng)?;
        let groups = cfg.grouping.channel_groups();
        let p2 = cfg.patch_size * cfg.patch_size;
        let heads = groups
            .iter()
            .enumerate()
            .map(|(g, chans)| Linear::new(store, &format!("decoder.head.{g}"), d, p2 * chans.len(), rng))
            .collect::<Result<_>>()?;
        let order: Vec<usize> = groups.iter().flatten().copied().collect();
        let mut inverse = vec![0; order.len()];
        for (pos, &ch) in order.iter().enumerate() {
            inverse[ch] = pos;
        }
        let identity = inverse.iter().enumerate().all(|(i, &c)| i == c);
        Ok(Self {
            embed,
            mask_token,
            pos: grid_pos_encoding(cfg.grid(), cfg.grid(), split, groups.len())?,
            body,
            heads,
            groups,
            inverse_channels: (!identity).then_some(inverse),
            patch: cfg.patch_size,
            side: cfg.input_size,
        })
    }

    pub fn mask_token(&self) -> &Tensor {
        &self.mask_token
    }

    /// Projected visible features scattered back to their slots, masked
    /// slots filled with the shared mask token. Encodings not yet added.
    pub fn assemble(&self, visible: &Tensor, plan: &MaskPlan) -> Result<Tensor> {
        let x = self.embed.forward(visible)?;
        let fill = self.mask_token.index_select(&vec![0; plan.n_masked()])?;
        Tensor::concat(&[x, fill], 0)?.index_select(&plan.restore_order())
    }

    /// Decoded token features `[N_total, decoder_dim]` before the heads.
    pub fn decode_tokens(&self, visible: &Tensor, plan: &MaskPlan) -> Result<Tensor> {
        self.body.forward(&self.assemble(visible, plan)?.add(&self.pos)?)
    }

    pub fn reconstruct(&self, visible: &Tensor, plan: &MaskPlan) -> Result<Tensor> {
        let tokens = self.decode_tokens(visible, plan)?;
        let mut planes = Vec::with_capacity(self.groups.len());
        for (g, (chans, head)) in self.groups.iter().zip(&self.heads).enumerate() {
            let rows = tokens.narrow(0, g * plan.n, plan.n)?;
            planes.push(unpatchify(&head.forward(&rows)?, chans.len(), self.side, self.side, self.patch)?);
        }
        let image = Tensor::concat(&planes, 0)?;
        match &self.inverse_channels {
            Some(inv) => image.index_select(inv),
            None => Ok(image),
        }
    }
}

/// Patch embedding plus encoder; the part shared with the classifier.
#[derive(Clone)]
pub struct Backbone {
    pub patch_embed: PatchEmbed,
    pub encoder: Encoder,
}

impl Backbone {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            patch_embed: PatchEmbed::new(store, cfg, rng)?,
            encoder: Encoder::new(store, cfg, rng)?,
        })
    }
}

pub struct MaskedAutoencoder {
    pub cfg: ModelConfig,
    pub params: ParamStore,
    pub backbone: Backbone,
    pub decoder: Decoder,
}

impl MaskedAutoencoder {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream(seed, Stream::ModelInit);
        let mut params = ParamStore::new();
        let backbone = Backbone::new(&mut params, &cfg, &mut rng)?;
        let decoder = Decoder::new(&mut params, &cfg, &mut rng)?;
        Ok(Self {
            cfg,
            params,
            backbone,
            decoder,
        })
    }

    pub fn sample_mask(&self, rng: &mut Rng) -> Result<MaskPlan> {
        sample_mask(self.cfg.grouping.n_groups(), self.cfg.tokens_per_group(), self.cfg.mask_ratio, rng)
    }

    pub fn patch_embed(&self, image: &Tensor) -> Result<TokenSequence> {
        self.backbone.patch_embed.forward(image)
    }

    pub fn encode(&self, tokens: &TokenSequence, plan: &MaskPlan) -> Result<Tensor> {
        self.backbone.encoder.encode(tokens, plan)
    }

    pub fn decode_reconstruct(&self, visible: &Tensor, plan: &MaskPlan) -> Result<Tensor> {
        self.decoder.reconstruct(visible, plan)
    }

    /// `[C, H, W]` indicator of pixels whose patch is masked in their
    /// channel group.
    pub fn pixel_mask(&self, plan: &MaskPlan) -> Result<Tensor> {
        let (p, grid, side) = (self.cfg.patch_size, self.cfg.grid(), self.cfg.input_size);
        let mut out = vec![0.0; self.cfg.channels() * side * side];
        for (chans, gm) in self.cfg.grouping.channel_groups().iter().zip(&plan.groups) {
            for &idx in &gm.masked {
                let (r, c) = (idx / grid, idx % grid);
                for &ch in chans {
                    for y in r * p..(r + 1) * p {
                        let row = (ch * side + y) * side;
                        out[row + c * p..row + (c + 1) * p].fill(1.0);
                    }
                }
            }
        }
        Tensor::from_vec(out, &[self.cfg.channels(), side, side])
    }

    /// Base-scale reconstruction `F: [C, H, W]` of `image` under `plan`.
    pub fn forward(&self, image: &Tensor, plan: &MaskPlan) -> Result<Tensor> {
        let tokens = self.patch_embed(image)?;
        let visible = self.encode(&tokens, plan)?;
        self.decode_reconstruct(&visible, plan)
    }
}
