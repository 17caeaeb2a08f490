//! Bilinear resampling, Gaussian blur, crops and scale pyramids on
//! `[C, H, W]` rasters.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn chw(op: &'static str, img: &Tensor) -> Result<(usize, usize, usize)> {
    match img.shape() {
        &[c, h, w] => Ok((c, h, w)),
        s => Err(Error::shape(op, format!("expected [C, H, W], got {s:?}"))),
    }
}

/// Source taps and weights along one axis, half-pixel centres
/// (align-corners disabled).
fn taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Bilinear resize of every channel.
pub fn resize_bilinear(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = chw("resize_bilinear", img)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::shape("resize_bilinear", "zero output extent"));
    }
    let (ty, tx) = (taps(h, out_h), taps(w, out_w));
    let x = img.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ty {
            for &(x0, x1, fx) in &tx {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::from_vec(out, &[c, out_h, out_w])
}

/// Factor-2 bilinear downsample `[C, 2H, 2W] -> [C, H, W]`.
pub fn bilinear_downsample(img: &Tensor) -> Result<Tensor> {
    let (_, h, w) = chw("bilinear_downsample", img)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(
            "bilinear_downsample",
            format!("odd spatial extent {h}x{w}"),
        ));
    }
    resize_bilinear(img, h / 2, w / 2)
}

/// In-place separable Gaussian blur of one `h x w` plane, clamped edges.
pub fn gaussian_blur_plane(plane: &mut [f64], h: usize, w: usize, sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * plane[y * w + clamp(x as isize + k as isize - radius, w)])
                .sum();
        }
    }
    for y in 0..h {
        for x in 0..w {
            plane[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * tmp[clamp(y as isize + k as isize - radius, h) * w + x])
                .sum();
        }
    }
}

/// Resizes so the shorter side equals `size`, then takes a random
/// `size x size` crop.
pub fn shorter_side_crop(img: &Tensor, size: usize, rng: &mut impl Rng) -> Result<Tensor> {
    let (c, h, w) = chw("shorter_side_crop", img)?;
    let resized = if h.min(w) == size {
        img.clone()
    } else {
        let scale = size as f64 / h.min(w) as f64;
        let nh = ((h as f64 * scale).round() as usize).max(size);
        let nw = ((w as f64 * scale).round() as usize).max(size);
        resize_bilinear(img, nh, nw)?
    };
    let (_, h, w) = chw("shorter_side_crop", &resized)?;
    if h == size && w == size {
        return Ok(resized);
    }
    let top = rng.gen_range(0..=h - size);
    let left = rng.gen_range(0..=w - size);
    let x = resized.data();
    let mut out = Vec::with_capacity(c * size * size);
    for ch in 0..c {
        for y in top..top + size {
            let row = (ch * h + y) * w;
            out.extend_from_slice(&x[row + left..row + left + size]);
        }
    }
    Tensor::from_vec(out, &[c, size, size])
}

/// One sample at up to three resolutions: `base` is the model input
/// `[C, H, W]`, `mid` is `[C, 2H, 2W]` and `top` is `[C, 4H, 4W]`.
#[derive(Debug, Clone)]
pub struct ScalePyramid {
    pub base: Tensor,
    pub mid: Tensor,
    pub top: Option<Tensor>,
}

impl ScalePyramid {
    pub fn levels(&self) -> usize {
        if self.top.is_some() {
            3
        } else {
            2
        }
    }
}

/// For `levels == 3` the source is the top level; for `levels == 2` it is
/// the mid level. Lower levels come from repeated [`bilinear_downsample`].
pub fn build_scale_pyramid(source: &Tensor, levels: usize) -> Result<ScalePyramid> {
    let (_, h, w) = chw("build_scale_pyramid", source)?;
    let factor = match levels {
        2 => 2,
        3 => 4,
        _ => return Err(Error::Config(format!("pyramid levels must be 2 or 3, got {levels}"))),
    };
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::shape(
            "build_scale_pyramid",
            format!("{h}x{w} not divisible by {factor} for {levels} levels"),
        ));
    }
    if levels == 3 {
        let mid = bilinear_downsample(source)?;
        let base = bilinear_downsample(&mid)?;
        Ok(ScalePyramid {
            base,
            mid,
            top: Some(source.clone()),
        })
    } else {
        Ok(ScalePyramid {
            base: bilinear_downsample(source)?,
            mid: source.clone(),
            top: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_at;

    #[test]
    fn downsample_constant() {
        let img = Tensor::full(&[2, 4, 6], 0.37);
        let d = bilinear_downsample(&img).unwrap();
        assert_eq!(d.shape(), &[2, 2, 3]);
        assert!(d.data().iter().all(|&v| (v - 0.37).abs() < 1e-15));
    }

    #[test]
    fn downsample_two_by_two_is_mean() {
        let img = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[1, 2, 2]).unwrap();
        assert_eq!(bilinear_downsample(&img).unwrap().to_vec(), vec![2.5]);
    }

    #[test]
    fn downsample_keeps_ramps_linear() {
        let (h, w) = (8, 12);
        let data = (0..h * w).map(|i| 0.3 * (i / w) as f64 - 0.7 * (i % w) as f64 + 2.0).collect();
        let img = Tensor::from_vec(data, &[1, h, w]).unwrap();
        let d = bilinear_downsample(&img).unwrap();
        let v = d.data();
        // output (i, j) sits at input coordinate (2i + 0.5, 2j + 0.5)
        for i in 0..h / 2 {
            for j in 0..w / 2 {
                let expected = 0.3 * (2.0 * i as f64 + 0.5) - 0.7 * (2.0 * j as f64 + 0.5) + 2.0;
                assert!((v[i * w / 2 + j] - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn downsample_rejects_odd() {
        assert!(bilinear_downsample(&Tensor::zeros(&[1, 3, 4])).is_err());
    }

    #[test]
    fn pyramid_shapes_and_exactness() {
        let data = (0..3 * 128 * 128).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        let src = Tensor::from_vec(data, &[3, 128, 128]).unwrap();
        let p = build_scale_pyramid(&src, 3).unwrap();
        assert_eq!(p.top.as_ref().unwrap().shape(), &[3, 128, 128]);
        assert_eq!(p.mid.shape(), &[3, 64, 64]);
        assert_eq!(p.base.shape(), &[3, 32, 32]);
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p.base), bits(&bilinear_downsample(&p.mid).unwrap()));
        assert_eq!(bits(&p.mid), bits(&bilinear_downsample(p.top.as_ref().unwrap()).unwrap()));

        let two = build_scale_pyramid(&src, 2).unwrap();
        assert_eq!(two.mid.shape(), &[3, 128, 128]);
        assert_eq!(two.base.shape(), &[3, 64, 64]);
        assert!(two.top.is_none());
    }

    #[test]
    fn pyramid_of_constant_is_constant() {
        let p = build_scale_pyramid(&Tensor::full(&[1, 16, 16], 0.5), 3).unwrap();
        for t in [&p.base, &p.mid] {
            assert!(t.data().iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn pyramid_divisibility() {
        assert!(build_scale_pyramid(&Tensor::zeros(&[1, 18, 16]), 3).is_err());
        assert!(build_scale_pyramid(&Tensor::zeros(&[1, 18, 16]), 2).is_ok());
        assert!(build_scale_pyramid(&Tensor::zeros(&[1, 16, 16]), 4).is_err());
    }

    #[test]
    fn blur_preserves_constants_and_mass() {
        let mut plane = vec![2.0; 36];
        gaussian_blur_plane(&mut plane, 6, 6, 1.5);
        assert!(plane.iter().all(|v| (v - 2.0).abs() < 1e-12));
        let mut spike = vec![0.0; 15 * 15];
        spike[7 * 15 + 7] = 1.0;
        gaussian_blur_plane(&mut spike, 15, 15, 1.0);
        assert!((spike.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(spike[7 * 15 + 7] < 0.2);
    }

    #[test]
    fn crop_of_wide_image() {
        let img = Tensor::from_vec((0..2 * 8 * 10).map(f64::from).collect(), &[2, 8, 10]).unwrap();
        let mut rng = stream_at(3, 0);
        let c = shorter_side_crop(&img, 8, &mut rng).unwrap();
        assert_eq!(c.shape(), &[2, 8, 8]);
        let sq = Tensor::zeros(&[1, 8, 8]);
        assert_eq!(shorter_side_crop(&sq, 8, &mut rng).unwrap().shape(), &[1, 8, 8]);
        let up = shorter_side_crop(&sq, 16, &mut rng).unwrap();
        assert_eq!(up.shape(), &[1, 16, 16]);
    }
}
