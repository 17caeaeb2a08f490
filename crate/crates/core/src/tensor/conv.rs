use super::Tensor;
use crate::error::{Error, Result};

/// Output positions `lo..hi` whose input tap `o * stride + offset - pad`
/// lands inside `0..extent`.
fn valid_range(offset: usize, pad: usize, stride: usize, extent: usize, out: usize) -> (usize, usize) {
    let lo = if pad > offset { (pad - offset).div_ceil(stride) } else { 0 };
    let hi = if extent + pad > offset {
        ((extent + pad - offset - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn dims4(op: &'static str, t: &Tensor) -> Result<[usize; 4]> {
    match t.shape() {
        &[a, b, c, d] => Ok([a, b, c, d]),
        s => Err(Error::shape(op, format!("expected rank 4, got {s:?}"))),
    }
}

fn check_bias(op: &'static str, bias: Option<&Tensor>, channels: usize) -> Result<()> {
    match bias {
        Some(b) if b.shape() != [channels] => Err(Error::Dimension {
            op,
            lhs: vec![channels],
            rhs: b.shape().to_vec(),
        }),
        _ => Ok(()),
    }
}

impl Tensor {
    /// 2-D cross-correlation. `self`: `[B, C, H, W]`, `weight`: `[O, C, k, k]`,
    /// `bias`: `[O]`. Output extents `(H + 2 pad - k) / stride + 1` must
    /// divide exactly.
    pub fn conv2d(
        &self,
        weight: &Tensor,
        bias: Option<&Tensor>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor> {
        let [nb, c, h, w] = dims4("conv2d", self)?;
        let [o, wc, k, k2] = dims4("conv2d", weight)?;
        if wc != c || k != k2 {
            return Err(Error::Dimension {
                op: "conv2d",
                lhs: self.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        check_bias("conv2d", bias, o)?;
        if stride == 0 {
            return Err(Error::Config("conv2d stride must be >= 1".into()));
        }
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::shape("conv2d", format!("kernel {k} larger than padded input {h}x{w}")));
        }
        if !(h + 2 * pad - k).is_multiple_of(stride) || !(w + 2 * pad - k).is_multiple_of(stride) {
            return Err(Error::shape(
                "conv2d",
                format!("non-integral output extent for {h}x{w}, k={k}, stride={stride}, pad={pad}"),
            ));
        }
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        let ranges_h: Vec<(usize, usize)> = (0..k).map(|d| valid_range(d, pad, stride, h, ho)).collect();
        let ranges_w: Vec<(usize, usize)> = (0..k).map(|d| valid_range(d, pad, stride, w, wo)).collect();

        let mut out = vec![0.0; nb * o * ho * wo];
        {
            let (x, wt) = (self.data(), weight.data());
            let bias_v = bias.map(|b| b.to_vec());
            for bi in 0..nb {
                for oc in 0..o {
                    let plane = &mut out[(bi * o + oc) * ho * wo..(bi * o + oc + 1) * ho * wo];
                    if let Some(bv) = bias_v.as_ref() {
                        plane.iter_mut().for_each(|v| *v = bv[oc]);
                    }
                    for ic in 0..c {
                        let xp = &x[(bi * c + ic) * h * w..(bi * c + ic + 1) * h * w];
                        for ki in 0..k {
                            let (h_lo, h_hi) = ranges_h[ki];
                            for kj in 0..k {
                                let (w_lo, w_hi) = ranges_w[kj];
                                let wv = wt[((oc * c + ic) * k + ki) * k + kj];
                                for oh in h_lo..h_hi {
                                    let ih = oh * stride + ki - pad;
                                    let row = &xp[ih * w..(ih + 1) * w];
                                    let orow = &mut plane[oh * wo..(oh + 1) * wo];
                                    if stride == 1 {
                                        let src = &row[w_lo + kj - pad..w_hi + kj - pad];
                                        for (o, &v) in orow[w_lo..w_hi].iter_mut().zip(src) {
                                            *o += wv * v;
                                        }
                                    } else {
                                        for ow in w_lo..w_hi {
                                            orow[ow] += wv * row[ow * stride + kj - pad];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }

        let (input, weights) = (self.clone(), weight.clone());
        let has_bias = bias.is_some();
        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Ok(Tensor::from_op(
            out,
            vec![nb, o, ho, wo],
            parents,
            Box::new(move |g| {
                let (x, wt) = (input.data(), weights.data());
                let mut gx = input.requires_grad().then(|| vec![0.0; x.len()]);
                let mut gw = weights.requires_grad().then(|| vec![0.0; wt.len()]);
                for bi in 0..nb {
                    for oc in 0..o {
                        let gp = &g[(bi * o + oc) * ho * wo..(bi * o + oc + 1) * ho * wo];
                        for ic in 0..c {
                            let xoff = (bi * c + ic) * h * w;
                            for (ki, &(h_lo, h_hi)) in ranges_h.iter().enumerate() {
                                for (kj, &(w_lo, w_hi)) in ranges_w.iter().enumerate() {
                                    let widx = ((oc * c + ic) * k + ki) * k + kj;
                                    let wv = wt[widx];
                                    let mut acc = 0.0;
                                    for oh in h_lo..h_hi {
                                        let ih = oh * stride + ki - pad;
                                        let grow = &gp[oh * wo..(oh + 1) * wo];
                                        let base = xoff + ih * w + kj;
                                        if stride == 1 {
                                            let (lo, hi) = (base + w_lo - pad, base + w_hi - pad);
                                            let gsrc = &grow[w_lo..w_hi];
                                            if let Some(gx) = gx.as_mut() {
                                                for (d, &gv) in gx[lo..hi].iter_mut().zip(gsrc) {
                                                    *d += wv * gv;
                                                }
                                            }
                                            if gw.is_some() {
                                                acc += gsrc.iter().zip(&x[lo..hi]).map(|(a, b)| a * b).sum::<f64>();
                                            }
                                            continue;
                                        }
                                        if let Some(gx) = gx.as_mut() {
                                            for ow in w_lo..w_hi {
                                                gx[base + ow * stride - pad] += wv * grow[ow];
                                            }
                                        }
                                        if gw.is_some() {
                                            for ow in w_lo..w_hi {
                                                acc += grow[ow] * x[base + ow * stride - pad];
                                            }
                                        }
                                    }
                                    if let Some(gw) = gw.as_mut() {
                                        gw[widx] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
                let mut grads = vec![gx, gw];
                if has_bias {
                    let mut gb = vec![0.0; o];
                    for bi in 0..nb {
                        for (oc, slot) in gb.iter_mut().enumerate() {
                            *slot += g[(bi * o + oc) * ho * wo..(bi * o + oc + 1) * ho * wo]
                                .iter()
                                .sum::<f64>();
                        }
                    }
                    grads.push(Some(gb));
                }
                grads
            }),
        ))
    }

    /// Transposed convolution doubling spatial extents. `self`: `[B, C, H, W]`,
    /// `weight`: `[C, O, 2, 2]`, `bias`: `[O]`. Only `kernel == stride == 2`
    /// is supported; it is the adjoint of a stride-2 `conv2d` with the same
    /// weight array read as `[O', C', k, k]`.
    pub fn transpose_conv2d(
        &self,
        weight: &Tensor,
        bias: Option<&Tensor>,
        kernel: usize,
        stride: usize,
    ) -> Result<Tensor> {
        if kernel != 2 || stride != 2 {
            return Err(Error::Config(format!(
                "transpose_conv2d supports kernel=2, stride=2 only (got kernel={kernel}, stride={stride})"
            )));
        }
        let [nb, c, h, w] = dims4("transpose_conv2d", self)?;
        let [wc, o, k, k2] = dims4("transpose_conv2d", weight)?;
        if wc != c || k != 2 || k2 != 2 {
            return Err(Error::Dimension {
                op: "transpose_conv2d",
                lhs: self.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        check_bias("transpose_conv2d", bias, o)?;
        let (ho, wo) = (2 * h, 2 * w);
        let mut out = vec![0.0; nb * o * ho * wo];
        {
            let (x, wt) = (self.data(), weight.data());
            let bias_v = bias.map(|b| b.to_vec());
            for bi in 0..nb {
                for oc in 0..o {
                    let plane = &mut out[(bi * o + oc) * ho * wo..(bi * o + oc + 1) * ho * wo];
                    if let Some(bv) = bias_v.as_ref() {
                        plane.iter_mut().for_each(|v| *v = bv[oc]);
                    }
                    for ic in 0..c {
                        let xp = &x[(bi * c + ic) * h * w..(bi * c + ic + 1) * h * w];
                        let wk = &wt[(ic * o + oc) * 4..(ic * o + oc + 1) * 4];
                        for i in 0..h {
                            for di in 0..2 {
                                let orow = &mut plane[(2 * i + di) * wo..(2 * i + di + 1) * wo];
                                let (w0, w1) = (wk[di * 2], wk[di * 2 + 1]);
                                for j in 0..w {
                                    let v = xp[i * w + j];
                                    orow[2 * j] += v * w0;
                                    orow[2 * j + 1] += v * w1;
                                }
                            }
                        }
                    }
                }
            }
        }

        let (input, weights) = (self.clone(), weight.clone());
        let has_bias = bias.is_some();
        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Ok(Tensor::from_op(
            out,
            vec![nb, o, ho, wo],
            parents,
            Box::new(move |g| {
                let (x, wt) = (input.data(), weights.data());
                let mut gx = input.requires_grad().then(|| vec![0.0; x.len()]);
                let mut gw = weights.requires_grad().then(|| vec![0.0; wt.len()]);
                for bi in 0..nb {
                    for oc in 0..o {
                        let gp = &g[(bi * o + oc) * ho * wo..(bi * o + oc + 1) * ho * wo];
                        for ic in 0..c {
                            let xoff = (bi * c + ic) * h * w;
                            let woff = (ic * o + oc) * 4;
                            for i in 0..h {
                                for j in 0..w {
                                    let taps = [
                                        gp[(2 * i) * wo + 2 * j],
                                        gp[(2 * i) * wo + 2 * j + 1],
                                        gp[(2 * i + 1) * wo + 2 * j],
                                        gp[(2 * i + 1) * wo + 2 * j + 1],
                                    ];
                                    if let Some(gx) = gx.as_mut() {
                                        gx[xoff + i * w + j] +=
                                            (0..4).map(|t| taps[t] * wt[woff + t]).sum::<f64>();
                                    }
                                    if let Some(gw) = gw.as_mut() {
                                        let v = x[xoff + i * w + j];
                                        for t in 0..4 {
                                            gw[woff + t] += v * taps[t];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                let mut grads = vec![gx, gw];
                if has_bias {
                    let mut gb = vec![0.0; o];
                    for bi in 0..nb {
                        for (oc, slot) in gb.iter_mut().enumerate() {
                            *slot += g[(bi * o + oc) * ho * wo..(bi * o + oc + 1) * ho * wo]
                                .iter()
                                .sum::<f64>();
                        }
                    }
                    grads.push(Some(gb));
                }
                grads
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_identity() {
        let x = Tensor::from_vec((0..9).map(f64::from).collect(), &[1, 1, 3, 3]).unwrap();
        let w = Tensor::ones(&[1, 1, 1, 1]);
        let y = x.conv2d(&w, None, 1, 0).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn all_ones_three_by_three() {
        let x = Tensor::ones(&[1, 1, 3, 3]);
        let w = Tensor::ones(&[1, 1, 3, 3]);
        let y = x.conv2d(&w, None, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.item(), 9.0);
    }

    #[test]
    fn padded_conv_keeps_extent() {
        let x = Tensor::ones(&[2, 3, 5, 4]);
        let w = Tensor::ones(&[2, 3, 3, 3]);
        let b = Tensor::from_vec(vec![1.0, -1.0], &[2]).unwrap();
        let y = x.conv2d(&w, Some(&b), 1, 1).unwrap();
        assert_eq!(y.shape(), &[2, 2, 5, 4]);
        // corner sees 2x2 taps per channel, centre sees 3x3
        assert_eq!(y.data()[0], 12.0 + 1.0);
        assert_eq!(y.data()[4 + 1], 27.0 + 1.0);
    }

    #[test]
    fn non_integral_extent_rejected() {
        let x = Tensor::ones(&[1, 1, 4, 4]);
        let w = Tensor::ones(&[1, 1, 3, 3]);
        assert!(matches!(x.conv2d(&w, None, 2, 0), Err(Error::Shape { .. })));
    }

    #[test]
    fn transpose_conv_shape_and_tile() {
        let x = Tensor::ones(&[1, 1, 2, 2]);
        let w = Tensor::ones(&[1, 3, 2, 2]);
        assert_eq!(x.transpose_conv2d(&w, None, 2, 2).unwrap().shape(), &[1, 3, 4, 4]);

        let px = Tensor::from_vec(vec![2.0], &[1, 1, 1, 1]).unwrap();
        let k = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        let y = px.transpose_conv2d(&k, None, 2, 2).unwrap();
        assert_eq!(y.to_vec(), vec![2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn transpose_conv_rejects_other_configs() {
        let x = Tensor::ones(&[1, 1, 2, 2]);
        let w = Tensor::ones(&[1, 1, 3, 3]);
        assert!(matches!(x.transpose_conv2d(&w, None, 3, 2), Err(Error::Config(_))));
    }
}
