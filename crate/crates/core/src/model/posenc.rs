//! Fixed sinusoidal position and spectral-group encodings.

use super::config::EncodingSplit;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_OMEGA: f64 = 10_000.0;

/// Component `2i` is `sin(pos / omega^(2i/dim))`, component `2i + 1` is the
/// matching cosine.
pub fn sinusoidal_encoding(pos: usize, dim: usize, omega: f64) -> Result<Vec<f64>> {
    if !dim.is_multiple_of(2) {
        return Err(Error::Config(format!("encoding width {dim} must be even")));
    }
    if omega <= 1.0 {
        return Err(Error::Config(format!("omega {omega} must exceed 1")));
    }
    let mut out = Vec::with_capacity(dim);
    for i in 0..dim / 2 {
        let angle = pos as f64 / omega.powf(2.0 * i as f64 / dim as f64);
        out.push(angle.sin());
        out.push(angle.cos());
    }
    Ok(out)
}

/// `[groups * rows * cols, split.total()]`, group-major then row-major.
/// Each row is `enc_x(col) ++ enc_y(row) ++ enc_group(g)`.
pub fn grid_pos_encoding(rows: usize, cols: usize, split: EncodingSplit, groups: usize) -> Result<Tensor> {
    if split.group == 0 && groups > 1 {
        return Err(Error::Config(format!("{groups} groups need a nonzero group encoding width")));
    }
    let xs: Vec<Vec<f64>> = (0..cols)
        .map(|c| sinusoidal_encoding(c, split.x, DEFAULT_OMEGA))
        .collect::<Result<_>>()?;
    let ys: Vec<Vec<f64>> = (0..rows)
        .map(|r| sinusoidal_encoding(r, split.y, DEFAULT_OMEGA))
        .collect::<Result<_>>()?;
    let gs: Vec<Vec<f64>> = (0..groups)
        .map(|g| sinusoidal_encoding(g, split.group, DEFAULT_OMEGA))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(groups * rows * cols * split.total());
    for g in &gs {
        for y in &ys {
            for x in &xs {
                out.extend_from_slice(x);
                out.extend_from_slice(y);
                out.extend_from_slice(g);
            }
        }
    }
    Tensor::from_vec(out, &[groups * rows * cols, split.total()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_alternates() {
        let v = sinusoidal_encoding(0, 8, DEFAULT_OMEGA).unwrap();
        assert_eq!(v, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn first_component_at_one() {
        let v = sinusoidal_encoding(1, 16, DEFAULT_OMEGA).unwrap();
        assert!((v[0] - 0.841_471).abs() < 1e-6);
        assert!(sinusoidal_encoding(1, 15, DEFAULT_OMEGA).is_err());
        assert!(sinusoidal_encoding(1, 16, 1.0).is_err());
    }

    #[test]
    fn positions_are_distinct() {
        let encs: Vec<Vec<f64>> = (0..196).map(|p| sinusoidal_encoding(p, 32, DEFAULT_OMEGA).unwrap()).collect();
        for i in 0..encs.len() {
            for j in i + 1..encs.len() {
                let gap: f64 = encs[i].iter().zip(&encs[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(gap > 1e-6, "{i} vs {j}");
            }
        }
    }

    #[test]
    fn rgb_layout_is_x_then_y() {
        let split = EncodingSplit { x: 32, y: 32, group: 0 };
        let t = grid_pos_encoding(2, 3, split, 1).unwrap();
        assert_eq!(t.shape(), &[6, 64]);
        let d = t.data();
        // token (row 1, col 2)
        let row = &d[5 * 64..6 * 64];
        assert_eq!(&row[..32], sinusoidal_encoding(2, 32, DEFAULT_OMEGA).unwrap().as_slice());
        assert_eq!(&row[32..], sinusoidal_encoding(1, 32, DEFAULT_OMEGA).unwrap().as_slice());
    }

    #[test]
    fn groups_differ_only_in_group_slice() {
        let split = EncodingSplit { x: 24, y: 24, group: 16 };
        let t = grid_pos_encoding(4, 4, split, 3).unwrap();
        let d = t.data();
        let (a, b) = (&d[5 * 64..6 * 64], &d[(16 + 5) * 64..(17 + 5) * 64]);
        assert_eq!(&a[..48], &b[..48]);
        assert_ne!(&a[48..], &b[48..]);
    }
}
