//! Multi-scale masked-autoencoder pre-training for multi-band imagery.
//!
//! The crate is organised bottom-up: [`tensor`] provides reverse-mode
//! differentiation, [`data`] produces band-aware synthetic rasters and scale
//! pyramids, [`model`] is the grouped-patch masked autoencoder,
//! [`multiscale`] adds the upsampling reconstruction head and combined loss,
//! and [`train`] holds the optimization loops and metrics.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod multiscale;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use params::ParamStore;
pub use tensor::Tensor;
