use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Max-subtracted softmax.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let m = logits
        .data()
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.data().iter().map(|&z| (z - m).exp()).collect();
    let total = exps.iter().fold(T::zero(), |acc, &e| acc + e);
    Tensor::from_shape(
        logits.shape().clone(),
        exps.into_iter().map(|e| e / total).collect(),
    )
    .expect("same shape")
}

/// Returns `(−log p[label], p)`. The loss is evaluated as
/// `max − z[label] + ln(1 + Σ_{i≠argmax} e^{z_i − max})` so saturated logits
/// keep their tiny loss instead of rounding to a log of one.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<(T, Tensor<T>)> {
    let z = logits.data();
    if z.len() < 2 {
        return Err(Error::InvalidShape(logits.dims().to_vec()));
    }
    if label >= z.len() {
        return Err(Error::OutOfRange {
            what: "class label",
            index: label,
            len: z.len(),
        });
    }
    let (arg, m) = z
        .iter()
        .copied()
        .enumerate()
        .fold((0, T::neg_infinity()), |(bi, bv), (i, v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    let rest: T = z
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .fold(T::zero(), |acc, (_, &v)| acc + (v - m).exp());
    let loss = (m - z[label]) + rest.ln_1p();
    Ok((loss, softmax(logits)))
}

/// `p − onehot(label)`.
pub fn softmax_cross_entropy_backward<T: Scalar>(probs: &Tensor<T>, label: usize) -> Result<Tensor<T>> {
    if label >= probs.len() {
        return Err(Error::OutOfRange {
            what: "class label",
            index: label,
            len: probs.len(),
        });
    }
    let mut g = probs.clone();
    g.data_mut()[label] -= T::one();
    Ok(g)
}
