use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Uniform draw in `[−s, s]` with `s = 1/√fan_in`. Values are drawn in `f64`
/// and rounded, so `f32` and `f64` networks built from one seed agree.
pub fn uniform_fan_in<T: Scalar, R: Rng + ?Sized>(extents: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    uniform_scaled(extents, fan_in, 1.0 / 3f64.sqrt(), rng)
}

/// Uniform draw with variance `gain² / fan_in`: `s = gain·√(3/fan_in)`.
pub fn uniform_scaled<T: Scalar, R: Rng + ?Sized>(
    extents: &[usize],
    fan_in: usize,
    gain: f64,
    rng: &mut R,
) -> Tensor<T> {
    let s = gain * (3.0 / fan_in.max(1) as f64).sqrt();
    let n: usize = extents.iter().product();
    let data = (0..n).map(|_| T::of(rng.random_range(-s..=s))).collect();
    Tensor::new(extents, data).expect("positive extents")
}
