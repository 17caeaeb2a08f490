use super::Tensor;
use crate::error::{Error, Result};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub const DEFAULT_LAYER_NORM_EPS: f64 = 1e-6;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

impl Tensor {
    /// Max-shifted softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let (outer, extent, inner) = self.split_at_axis(axis)?;
        let mut out = self.to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * extent + k) * inner + i;
                let max = (0..extent).map(|k| out[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for k in 0..extent {
                    let e = (out[at(k)] - max).exp();
                    out[at(k)] = e;
                    total += e;
                }
                for k in 0..extent {
                    out[at(k)] /= total;
                }
            }
        }
        let y = out.clone();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * extent + k) * inner + i;
                        let dot: f64 = (0..extent).map(|k| g[at(k)] * y[at(k)]).sum();
                        for k in 0..extent {
                            gx[at(k)] = y[at(k)] * (g[at(k)] - dot);
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Normalizes each slice along the last axis to zero mean and unit
    /// (biased) variance, then applies `gain` and `bias`.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
        let width = *self.shape().last().expect("rank >= 1");
        for p in [gain, bias] {
            if p.shape() != [width] {
                return Err(Error::Dimension {
                    op: "layer_norm",
                    lhs: self.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        let rows = self.numel() / width;
        let mut xhat = vec![0.0; self.numel()];
        let mut inv_std = vec![0.0; rows];
        {
            let x = self.data();
            for r in 0..rows {
                let row = &x[r * width..(r + 1) * width];
                let mean = row.iter().sum::<f64>() / width as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
                let s = 1.0 / (var + eps).sqrt();
                inv_std[r] = s;
                for (h, v) in xhat[r * width..(r + 1) * width].iter_mut().zip(row) {
                    *h = (v - mean) * s;
                }
            }
        }
        let out: Vec<f64> = {
            let (g, b) = (gain.data(), bias.data());
            xhat.iter()
                .enumerate()
                .map(|(i, h)| h * g[i % width] + b[i % width])
                .collect()
        };
        let gain_c = gain.clone();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), gain.clone(), bias.clone()],
            Box::new(move |g| {
                let gamma = gain_c.data();
                let mut gx = vec![0.0; xhat.len()];
                let mut gg = vec![0.0; width];
                let mut gb = vec![0.0; width];
                for r in 0..rows {
                    let span = r * width..(r + 1) * width;
                    let (gr, hr) = (&g[span.clone()], &xhat[span.clone()]);
                    let mut mean_d = 0.0;
                    let mut mean_dh = 0.0;
                    for j in 0..width {
                        let d = gr[j] * gamma[j];
                        mean_d += d;
                        mean_dh += d * hr[j];
                        gg[j] += gr[j] * hr[j];
                        gb[j] += gr[j];
                    }
                    mean_d /= width as f64;
                    mean_dh /= width as f64;
                    for j in 0..width {
                        let d = gr[j] * gamma[j];
                        gx[r * width + j] = inv_std[r] * (d - mean_d - hr[j] * mean_dh);
                    }
                }
                vec![Some(gx), Some(gg), Some(gb)]
            }),
        ))
    }

    fn unary(&self, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64 + 'static) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|&x| f(x)).collect();
        let input = self.clone();
        Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                let x = input.data();
                vec![Some(g.iter().zip(x.iter()).map(|(g, &x)| g * df(x)).collect())]
            }),
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Tensor {
        self.unary(
            |x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()),
            |x| {
                let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
            },
        )
    }

    /// Leaky ReLU; the derivative at zero takes the positive branch.
    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        self.unary(
            move |x| if x >= 0.0 { x } else { slope * x },
            move |x| if x >= 0.0 { 1.0 } else { slope },
        )
    }

    /// Mean squared error `(1/n) sum (pred - target)^2`.
    pub fn mse_loss(&self, target: &Tensor) -> Result<Tensor> {
        same_shape("mse_loss", self, target)?;
        let n = self.numel() as f64;
        let diff: Vec<f64> = {
            let (p, t) = (self.data(), target.data());
            p.iter().zip(t.iter()).map(|(a, b)| a - b).collect()
        };
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
        Ok(Tensor::from_op(
            vec![loss],
            vec![1],
            vec![self.clone(), target.clone()],
            Box::new(move |g| {
                let gp: Vec<f64> = diff.iter().map(|d| 2.0 * d * g[0] / n).collect();
                let gt = gp.iter().map(|v| -v).collect();
                vec![Some(gp), Some(gt)]
            }),
        ))
    }

    /// Mean absolute error `(1/n) sum |pred - target|`; sign(0) = 0.
    pub fn l1_loss(&self, target: &Tensor) -> Result<Tensor> {
        same_shape("l1_loss", self, target)?;
        let n = self.numel() as f64;
        let diff: Vec<f64> = {
            let (p, t) = (self.data(), target.data());
            p.iter().zip(t.iter()).map(|(a, b)| a - b).collect()
        };
        let loss = diff.iter().map(|d| d.abs()).sum::<f64>() / n;
        Ok(Tensor::from_op(
            vec![loss],
            vec![1],
            vec![self.clone(), target.clone()],
            Box::new(move |g| {
                let sign = |d: f64| {
                    if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                };
                let gp: Vec<f64> = diff.iter().map(|&d| sign(d) * g[0] / n).collect();
                let gt = gp.iter().map(|v| -v).collect();
                vec![Some(gp), Some(gt)]
            }),
        ))
    }

    /// Mean softmax cross-entropy of `[B, K]` logits against class indices.
    pub fn cross_entropy(&self, labels: &[usize]) -> Result<Tensor> {
        let (b, k) = match self.shape() {
            [b, k] => (*b, *k),
            s => return Err(Error::shape("cross_entropy", format!("logits {s:?}"))),
        };
        if labels.len() != b || labels.iter().any(|&l| l >= k) {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} labels for logits [{b}, {k}]", labels.len()),
            ));
        }
        let mut probs = self.to_vec();
        let mut loss = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = &mut probs[r * k..(r + 1) * k];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[label];
            row.iter_mut().for_each(|v| *v = (*v - lse).exp());
        }
        loss /= b as f64;
        let labels = labels.to_vec();
        Ok(Tensor::from_op(
            vec![loss],
            vec![1],
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = probs.clone();
                for (r, &label) in labels.iter().enumerate() {
                    gx[r * k + label] -= 1.0;
                }
                gx.iter_mut().for_each(|v| *v *= g[0] / b as f64);
                vec![Some(gx)]
            }),
        ))
    }

    /// Multi-label soft margin loss: mean over all entries of
    /// `-(y log sigmoid(x) + (1 - y) log sigmoid(-x))`.
    pub fn multilabel_soft_margin(&self, targets: &[f64]) -> Result<Tensor> {
        if self.rank() != 2 || targets.len() != self.numel() {
            return Err(Error::shape(
                "multilabel_soft_margin",
                format!("{} targets for logits {:?}", targets.len(), self.shape()),
            ));
        }
        let n = self.numel() as f64;
        let x = self.to_vec();
        let loss = x
            .iter()
            .zip(targets)
            .map(|(&x, &y)| y * softplus(-x) + (1.0 - y) * softplus(x))
            .sum::<f64>()
            / n;
        let targets = targets.to_vec();
        Ok(Tensor::from_op(
            vec![loss],
            vec![1],
            vec![self.clone()],
            Box::new(move |g| {
                let gx = x
                    .iter()
                    .zip(&targets)
                    .map(|(&x, &y)| (sigmoid(x) - y) * g[0] / n)
                    .collect();
                vec![Some(gx)]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: &[f64]) -> Tensor {
        Tensor::from_vec(data.to_vec(), &[data.len()]).unwrap()
    }

    #[test]
    fn softmax_uniform() {
        let y = t(&[0.0; 4]).softmax(0).unwrap();
        assert_eq!(y.to_vec(), vec![0.25; 4]);
    }

    #[test]
    fn softmax_is_shift_stable() {
        let y = t(&[1000.0, 1000.0]).softmax(0).unwrap();
        assert_eq!(y.to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_closed_form() {
        let y = t(&[0.0, 3f64.ln()]).softmax(0).unwrap().to_vec();
        assert!((y[0] - 0.25).abs() < 1e-12 && (y[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_bad_axis() {
        assert!(matches!(t(&[1.0]).softmax(1), Err(Error::Axis { .. })));
    }

    #[test]
    fn layer_norm_constant_slice_is_zero() {
        let x = Tensor::full(&[2, 3], 4.2);
        let y = x
            .layer_norm(&Tensor::ones(&[3]), &Tensor::zeros(&[3]), DEFAULT_LAYER_NORM_EPS)
            .unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_two_values() {
        let y = t(&[1.0, 3.0])
            .layer_norm(&Tensor::ones(&[2]), &Tensor::zeros(&[2]), DEFAULT_LAYER_NORM_EPS)
            .unwrap()
            .to_vec();
        assert!((y[0] + 1.0).abs() < 1e-3 && (y[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn layer_norm_rejects_wrong_gain() {
        let err = Tensor::zeros(&[2, 3]).layer_norm(&Tensor::ones(&[2]), &Tensor::zeros(&[3]), 1e-6);
        assert!(err.is_err());
    }

    #[test]
    fn activations_at_reference_points() {
        let y = t(&[0.0, -2.0, 3.0]).leaky_relu(0.01).to_vec();
        assert_eq!(y, vec![0.0, -0.02, 3.0]);
        let g = t(&[0.0, 1.0]).gelu().to_vec();
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 0.8412).abs() < 1e-4, "{}", g[1]);
    }

    #[test]
    fn leaky_relu_gradient_at_zero_is_one() {
        let x = Tensor::param(vec![0.0], &[1]).unwrap();
        x.leaky_relu(0.01).sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0]);
    }

    #[test]
    fn losses_by_hand() {
        let p = t(&[0.0, 0.0]);
        let q = t(&[1.0, 3.0]);
        assert_eq!(p.mse_loss(&q).unwrap().item(), 5.0);
        assert_eq!(p.l1_loss(&q).unwrap().item(), 2.0);
        assert_eq!(q.mse_loss(&q).unwrap().item(), 0.0);
        assert_eq!(q.l1_loss(&q).unwrap().item(), 0.0);
        assert!(p.mse_loss(&t(&[1.0])).is_err());
    }

    #[test]
    fn l1_gradient_sign_with_zero_tie() {
        let p = Tensor::param(vec![1.0, -1.0, 2.0], &[3]).unwrap();
        let q = t(&[0.0, 0.0, 2.0]);
        p.l1_loss(&q).unwrap().backward().unwrap();
        assert_eq!(p.grad().unwrap(), vec![1.0 / 3.0, -1.0 / 3.0, 0.0]);
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let x = Tensor::zeros(&[2, 4]);
        let l = x.cross_entropy(&[0, 3]).unwrap().item();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!(x.cross_entropy(&[4, 0]).is_err());
    }

    #[test]
    fn soft_margin_at_zero_logits() {
        let x = Tensor::zeros(&[1, 2]);
        let l = x.multilabel_soft_margin(&[1.0, 0.0]).unwrap().item();
        assert!((l - 2f64.ln()).abs() < 1e-12);
    }
}
