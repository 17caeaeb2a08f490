use super::config::ModelConfig;
use super::mae::Backbone;
use crate::error::Result;
use crate::layers::Linear;
use crate::params::{ParamStore, EMBED_INIT_STD};
use crate::rng::{stream, Stream};
use crate::tensor::Tensor;

/// Encoder with a prepended class token and a linear head; every token is
/// visible. Backbone parameter names match [`super::MaskedAutoencoder`] so
/// pre-trained weights load by name.
pub struct Classifier {
    pub cfg: ModelConfig,
    pub params: ParamStore,
    pub backbone: Backbone,
    pub cls_token: Tensor,
    pub head: Linear,
}

impl Classifier {
    pub fn new(cfg: ModelConfig, n_classes: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        let backbone = Backbone::new(&mut params, &cfg, &mut stream(seed, Stream::ModelInit))?;
        let mut rng = stream(seed, Stream::ClassifierInit);
        let cls_token = params.truncated_normal("cls_token", &[1, cfg.embed_dim], EMBED_INIT_STD, &mut rng)?;
        let head = Linear::new(&mut params, "classifier.head", cfg.embed_dim, n_classes, &mut rng)?;
        Ok(Self {
            cfg,
            params,
            backbone,
            cls_token,
            head,
        })
    }

    /// Copies every same-named backbone tensor from `source`; returns the
    /// names loaded. Shape disagreements are a checkpoint mismatch.
    pub fn load_backbone(&self, source: &ParamStore) -> Result<Vec<String>> {
        self.params.load_matching(&source.snapshot())
    }

    pub fn n_classes(&self) -> usize {
        self.head.out_features()
    }

    /// Logits `[1, K]` for one image.
    pub fn forward(&self, image: &Tensor) -> Result<Tensor> {
        let tokens = self.backbone.patch_embed.forward(image)?;
        let x = tokens.tokens.add(self.backbone.encoder.pos())?;
        let x = Tensor::concat(&[self.cls_token.clone(), x], 0)?;
        let out = self.backbone.encoder.forward_tokens(&x)?;
        self.head.forward(&out.narrow(0, 0, 1)?)
    }
}
