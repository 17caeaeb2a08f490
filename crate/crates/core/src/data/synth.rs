//! Procedural multi-band rasters standing in for satellite scenes.
//!
//! Each class renders one pattern family (oriented grating, blob field or
//! smooth checkerboard) at a class-dependent spatial frequency. A
//! class-independent low-frequency field is mixed in as clutter. Every band
//! is blurred with a Gaussian whose width grows with the band's GSD, noised,
//! and min-max normalised to `[0, 1]`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::bands::BandSpec;
use super::resample::{build_scale_pyramid, gaussian_blur_plane, ScalePyramid};
use crate::error::{Error, Result};
use crate::rng::{stream_at, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub count: usize,
    pub bands: Vec<BandSpec>,
    /// Side of the rendered source raster (the top pyramid level).
    pub size: usize,
    pub n_classes: usize,
    pub levels: usize,
    pub multilabel: bool,
    /// Lowest pattern frequency in cycles per image; each further frequency
    /// tier doubles it.
    pub base_frequency: f64,
    pub clutter_amplitude: f64,
    pub noise_std: f64,
    /// Blur sigma in source pixels per 10 m of GSD.
    pub blur_per_10m: f64,
}

impl SynthConfig {
    pub fn new(seed: u64, count: usize, bands: Vec<BandSpec>, size: usize, n_classes: usize) -> Self {
        Self {
            seed,
            count,
            bands,
            size,
            n_classes,
            levels: 3,
            multilabel: false,
            base_frequency: 3.0,
            clutter_amplitude: 0.6,
            noise_std: 0.02,
            blur_per_10m: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImageSample {
    /// `[C, size, size]`, every band in `[0, 1]`.
    pub pixels: Tensor,
    pub label: usize,
    /// Multi-hot class indicators; one-hot for single-label data.
    pub targets: Vec<f64>,
    pub band_meta: Arc<[BandSpec]>,
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub image: ImageSample,
    pub pyramid: ScalePyramid,
}

#[derive(Debug, Clone, Copy)]
enum Family {
    Grating,
    Blobs,
    Checker,
}

struct PatternDraw {
    family: Family,
    frequency: f64,
    angle: f64,
    phase: (f64, f64),
    centres: Vec<(f64, f64)>,
}

impl PatternDraw {
    fn new(class: usize, cfg: &SynthConfig, rng: &mut impl Rng) -> Self {
        let family = match class % 3 {
            0 => Family::Grating,
            1 => Family::Blobs,
            _ => Family::Checker,
        };
        let tier = (class / 3) as i32;
        let frequency = cfg.base_frequency * 2f64.powi(tier) * rng.gen_range(0.9..1.1);
        let count = (2.0 * frequency).round().max(1.0) as usize;
        Self {
            family,
            frequency,
            angle: rng.gen_range(0.0..PI),
            phase: (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)),
            centres: (0..count).map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))).collect(),
        }
    }

    /// Value at normalised coordinates, roughly in `[-1, 1]`.
    fn at(&self, u: f64, v: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let (ru, rv) = (u * c + v * s, -u * s + v * c);
        let f = 2.0 * PI * self.frequency;
        match self.family {
            Family::Grating => (f * ru + self.phase.0).sin(),
            Family::Checker => (f * ru + self.phase.0).sin() * (f * rv + self.phase.1).sin() * 1.5,
            Family::Blobs => {
                let sigma = 0.25 / self.frequency;
                let mass: f64 = self
                    .centres
                    .iter()
                    .map(|&(cu, cv)| {
                        let d2 = (u - cu).powi(2) + (v - cv).powi(2);
                        (-d2 / (2.0 * sigma * sigma)).exp()
                    })
                    .sum();
                2.0 * mass.min(1.0) - 1.0
            }
        }
    }
}

struct Clutter {
    bumps: Vec<(f64, f64, f64)>,
}

impl Clutter {
    fn new(rng: &mut impl Rng) -> Self {
        Self {
            bumps: (0..3)
                .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
        }
    }

    fn at(&self, u: f64, v: f64) -> f64 {
        self.bumps
            .iter()
            .map(|&(cu, cv, a)| a * (-((u - cu).powi(2) + (v - cv).powi(2)) / (2.0 * 0.3 * 0.3)).exp())
            .sum()
    }
}

fn render(index: usize, cfg: &SynthConfig, band_meta: &Arc<[BandSpec]>) -> Result<Sample> {
    let mut rng = stream_at(cfg.seed, ((Stream::Data as u64) << 32) | index as u64);
    let k = cfg.n_classes;
    let mut targets = vec![0.0; k];
    let label = rng.gen_range(0..k);
    targets[label] = 1.0;
    if cfg.multilabel {
        for (c, t) in targets.iter_mut().enumerate() {
            if c != label && rng.gen_bool(0.5) {
                *t = 1.0;
            }
        }
    }
    let patterns: Vec<PatternDraw> = (0..k)
        .filter(|&c| targets[c] > 0.0)
        .map(|c| PatternDraw::new(c, cfg, &mut rng))
        .collect();
    let clutter = Clutter::new(&mut rng);
    let noise = Normal::new(0.0, cfg.noise_std.max(1e-12)).expect("valid std");

    let n = cfg.size;
    let mut base = vec![0.0; n * n];
    let mut clut = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let (u, v) = ((x as f64 + 0.5) / n as f64, (y as f64 + 0.5) / n as f64);
            base[y * n + x] = patterns.iter().map(|p| p.at(u, v)).sum::<f64>() / patterns.len() as f64;
            clut[y * n + x] = clutter.at(u, v);
        }
    }

    let mut pixels = Vec::with_capacity(band_meta.len() * n * n);
    for band in band_meta.iter() {
        let gain = 0.75 + 0.25 * (band.wavelength_nm / 300.0).cos();
        let tilt = 1.0 - 0.5 * (band.wavelength_nm / 400.0).sin();
        let mut plane: Vec<f64> = base
            .iter()
            .zip(&clut)
            .map(|(p, c)| gain * p + cfg.clutter_amplitude * tilt * c)
            .collect();
        gaussian_blur_plane(&mut plane, n, n, cfg.blur_per_10m * band.gsd_m / 10.0);
        if cfg.noise_std > 0.0 {
            plane.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        }
        let lo = plane.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        pixels.extend(plane.iter().map(|v| ((v - lo) / span).clamp(0.0, 1.0)));
    }
    let pixels = Tensor::from_vec(pixels, &[band_meta.len(), n, n])?;
    let pyramid = build_scale_pyramid(&pixels, cfg.levels)?;
    Ok(Sample {
        image: ImageSample {
            pixels,
            label,
            targets,
            band_meta: band_meta.clone(),
        },
        pyramid,
    })
}

/// Deterministic dataset: a pure function of `cfg`. Sample `i` draws from
/// its own random stream, so any prefix of a larger dataset is identical to
/// the smaller dataset.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Vec<Sample>> {
    if cfg.n_classes < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {}", cfg.n_classes)));
    }
    if cfg.bands.is_empty() {
        return Err(Error::Config("no bands".into()));
    }
    let band_meta: Arc<[BandSpec]> = cfg.bands.clone().into();
    (0..cfg.count).map(|i| render(i, cfg, &band_meta)).collect()
}

/// Renders a single sample of the dataset described by `cfg`.
pub fn synth_sample(cfg: &SynthConfig, index: usize) -> Result<Sample> {
    let band_meta: Arc<[BandSpec]> = cfg.bands.clone().into();
    render(index, cfg, &band_meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::bands::{default_grouping, sentinel2_band_table};

    fn sentinel_bands() -> Vec<BandSpec> {
        let table = sentinel2_band_table();
        default_grouping().retained().iter().map(|&i| table[i].clone()).collect()
    }

    #[test]
    fn deterministic_and_normalised() {
        let cfg = SynthConfig::new(7, 6, sentinel_bands(), 32, 4);
        let a = synth_dataset(&cfg).unwrap();
        let b = synth_dataset(&cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let bx: Vec<u64> = x.image.pixels.data().iter().map(|v| v.to_bits()).collect();
            let by: Vec<u64> = y.image.pixels.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bx, by);
            assert_eq!(x.image.label, y.image.label);
            assert!(x.image.pixels.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert_eq!(x.image.pixels.shape(), &[10, 32, 32]);
            assert_eq!(x.pyramid.base.shape(), &[10, 8, 8]);
        }
    }

    #[test]
    fn prefix_stable() {
        let small = synth_dataset(&SynthConfig::new(3, 2, sentinel_bands(), 16, 3)).unwrap();
        let large = synth_sample(&SynthConfig::new(3, 5, sentinel_bands(), 16, 3), 1).unwrap();
        assert_eq!(small[1].image.pixels.to_vec(), large.image.pixels.to_vec());
    }

    #[test]
    fn coarser_bands_are_smoother() {
        let bands = vec![BandSpec::new("fine", 10.0, 500.0), BandSpec::new("coarse", 60.0, 500.0)];
        let mut cfg = SynthConfig::new(11, 8, bands, 32, 6);
        cfg.noise_std = 0.0;
        cfg.clutter_amplitude = 0.0;
        let mut rough = [0.0, 0.0];
        for s in synth_dataset(&cfg).unwrap() {
            let d = s.image.pixels.data();
            for (b, slot) in rough.iter_mut().enumerate() {
                let plane = &d[b * 1024..(b + 1) * 1024];
                *slot += plane.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
            }
        }
        assert!(rough[1] < rough[0], "{rough:?}");
    }

    #[test]
    fn multilabel_targets_include_label() {
        let mut cfg = SynthConfig::new(5, 20, sentinel_bands(), 16, 4);
        cfg.multilabel = true;
        let data = synth_dataset(&cfg).unwrap();
        assert!(data.iter().all(|s| s.image.targets[s.image.label] == 1.0));
        assert!(data.iter().any(|s| s.image.targets.iter().sum::<f64>() > 1.0));
    }

    #[test]
    fn rejects_single_class() {
        assert!(synth_dataset(&SynthConfig::new(1, 1, sentinel_bands(), 16, 1)).is_err());
    }
}
