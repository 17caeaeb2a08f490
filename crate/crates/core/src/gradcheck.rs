//! Central finite-difference gradient checking.
//!
//! Only forward evaluations are used, so the check is independent of the
//! backward closures it verifies.

use crate::error::Result;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central difference of `f` with respect to element `index` of leaf `param`.
pub fn numeric_partial(
    f: &dyn Fn() -> Result<Tensor>,
    param: &Tensor,
    index: usize,
    step: f64,
) -> Result<f64> {
    let original = param.data()[index];
    param.data_mut()[index] = original + step;
    let plus = f()?.item();
    param.data_mut()[index] = original - step;
    let minus = f()?.item();
    param.data_mut()[index] = original;
    Ok((plus - minus) / (2.0 * step))
}

/// Runs backward once and compares every listed `(param, index)` entry with
/// its central difference. Returns the largest relative error.
pub fn max_relative_error(
    f: &dyn Fn() -> Result<Tensor>,
    entries: &[(Tensor, usize)],
    step: f64,
) -> Result<f64> {
    for (p, _) in entries {
        p.zero_grad();
    }
    f()?.backward()?;
    let analytic: Vec<f64> = entries
        .iter()
        .map(|(p, i)| p.grad().expect("tracking leaf")[*i])
        .collect();
    let mut worst = 0.0f64;
    for ((p, i), a) in entries.iter().zip(analytic) {
        let n = numeric_partial(f, p, *i, step)?;
        worst = worst.max(relative_error(a, n));
    }
    Ok(worst)
}

/// Every element of every listed parameter.
pub fn all_entries(params: &[&Tensor]) -> Vec<(Tensor, usize)> {
    params
        .iter()
        .flat_map(|p| (0..p.numel()).map(move |i| ((*p).clone(), i)))
        .collect()
}
