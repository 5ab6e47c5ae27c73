//! Central finite differences: the numerical oracle behind every gradient
//! test and the `gradcheck` command.

pub mod suite;
pub mod wide;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Default step for 64-bit central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Central-difference gradient of a scalar function at `x`.
pub fn finite_diff_gradient<F>(mut f: F, x: &Tensor<f64>, step: f64) -> Result<Tensor<f64>>
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    let mut probe = x.clone();
    let grad = central_differences(x.len(), step, |i, delta| {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + delta;
        let v = f(&probe);
        probe.data_mut()[i] = orig;
        v
    })?;
    Tensor::from_shape(x.shape().clone(), grad)
}

/// Central differences over `len` coordinates, where `eval(i, delta)` returns
/// the function value with coordinate `i` displaced by `delta`. Lets callers
/// perturb parameters that live inside larger structures. The difference is
/// formed in `S`, so a wider scalar gives a less noisy reference.
pub fn central_differences<S, F>(len: usize, step: S, mut eval: F) -> Result<Vec<f64>>
where
    S: Scalar,
    F: FnMut(usize, S) -> S,
{
    let mut grad = Vec::with_capacity(len);
    for i in 0..len {
        let plus = eval(i, step);
        let minus = eval(i, -step);
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "function value at coordinate {i} (f+ = {plus}, f- = {minus})"
            )));
        }
        grad.push(((plus - minus) / (S::of(2.0) * step)).as_f64());
    }
    Ok(grad)
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Largest element-wise relative error between two gradient buffers.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}
