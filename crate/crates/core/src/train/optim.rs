use crate::error::Result;
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWHyper {
    pub lr: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
}

/// One AdamW update on a flat buffer. `step` is 1-based. Decay is applied
/// to the parameter directly, separate from the adaptive step.
pub fn adamw_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], step: u64, h: AdamWHyper) {
    let (b1, b2) = h.betas;
    let c1 = 1.0 - b1.powi(step as i32);
    let c2 = 1.0 - b2.powi(step as i32);
    for i in 0..param.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
        param[i] -= h.lr * h.weight_decay * param[i];
        param[i] -= h.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + h.eps);
    }
}

struct Slot {
    param: Tensor,
    decay: bool,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// AdamW over a fixed parameter list. Matrices and kernels are decayed;
/// biases, norm gains and learned tokens are not.
pub struct AdamW {
    slots: Vec<Slot>,
    step: u64,
}

fn decays(name: &str, t: &Tensor) -> bool {
    t.rank() >= 2 && !name.contains("token")
}

impl AdamW {
    pub fn new(stores: &[&ParamStore]) -> Self {
        let slots = stores
            .iter()
            .flat_map(|s| s.iter())
            .map(|(name, t)| Slot {
                param: t.clone(),
                decay: decays(name, t),
                m: vec![0.0; t.numel()],
                v: vec![0.0; t.numel()],
            })
            .collect();
        Self { slots, step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&self) {
        self.slots.iter().for_each(|s| s.param.zero_grad());
    }

    /// Applies one update from the accumulated gradients.
    pub fn step(&mut self, lr: f64, weight_decay: f64, betas: (f64, f64), eps: f64) -> Result<()> {
        self.step += 1;
        for slot in &mut self.slots {
            let grad = slot.param.grad().unwrap_or_else(|| vec![0.0; slot.param.numel()]);
            let h = AdamWHyper {
                lr,
                weight_decay: if slot.decay { weight_decay } else { 0.0 },
                betas,
                eps,
            };
            adamw_update(&mut slot.param.data_mut(), &grad, &mut slot.m, &mut slot.v, self.step, h);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper(lr: f64, wd: f64) -> AdamWHyper {
        AdamWHyper {
            lr,
            weight_decay: wd,
            betas: (0.9, 0.999),
            eps: 1e-8,
        }
    }

    #[test]
    fn first_step_is_unit_magnitude() {
        let (mut p, mut m, mut v) = ([0.0], [0.0], [0.0]);
        adamw_update(&mut p, &[1.0], &mut m, &mut v, 1, hyper(0.1, 0.0));
        assert!((p[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn zero_grad_no_decay_is_identity() {
        let (mut p, mut m, mut v) = ([0.7, -3.0], [0.0; 2], [0.0; 2]);
        for step in 1..5 {
            adamw_update(&mut p, &[0.0, 0.0], &mut m, &mut v, step, hyper(0.1, 0.0));
        }
        assert_eq!(p, [0.7, -3.0]);
    }

    #[test]
    fn decoupled_decay() {
        let (mut p, mut m, mut v) = ([1.0], [0.0], [0.0]);
        adamw_update(&mut p, &[0.0], &mut m, &mut v, 1, hyper(0.1, 0.1));
        assert!((p[0] - 0.99).abs() < 1e-15);
    }
}
