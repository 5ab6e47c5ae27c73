use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Concatenates two `(H, W, C)` maps along channels, `a` first.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape().rank() != 3 {
        return Err(Error::InvalidShape(a.dims().to_vec()));
    }
    let shape = a.shape().concat(b.shape(), 2)?;
    let (ca, cb) = (a.dims()[2], b.dims()[2]);
    let mut out = Vec::with_capacity(shape.numel());
    for (pa, pb) in a.data().chunks_exact(ca).zip(b.data().chunks_exact(cb)) {
        out.extend_from_slice(pa);
        out.extend_from_slice(pb);
    }
    Tensor::from_shape(shape, out)
}

/// Splits an `(H, W, C_a + C_b)` gradient back into its two parts.
pub fn split_channels<T: Scalar>(grad: &Tensor<T>, channels_a: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let d = grad.dims();
    if d.len() != 3 || channels_a == 0 || channels_a >= d[2] {
        return Err(Error::Geometry(format!(
            "cannot split {} after channel {channels_a}",
            grad.shape()
        )));
    }
    let (h, w, c) = (d[0], d[1], d[2]);
    let cb = c - channels_a;
    let mut a = Vec::with_capacity(h * w * channels_a);
    let mut b = Vec::with_capacity(h * w * cb);
    for px in grad.data().chunks_exact(c) {
        a.extend_from_slice(&px[..channels_a]);
        b.extend_from_slice(&px[channels_a..]);
    }
    Ok((
        Tensor::new(&[h, w, channels_a], a)?,
        Tensor::new(&[h, w, cb], b)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_gradient, max_rel_err};
    use crate::layers::testutil::{random, rng};

    #[test]
    fn shapes_and_slicing() {
        let mut r = rng(10);
        let a = random(&[5, 5, 3], &mut r);
        let b = random(&[5, 5, 3], &mut r);
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.dims(), &[5, 5, 6]);
        let (sa, sb) = split_channels(&c, 3).unwrap();
        assert_eq!(sa, a);
        assert_eq!(sb, b);
    }

    #[test]
    fn spatial_mismatch() {
        let a = Tensor::<f64>::zeros(&[5, 5, 3]);
        let b = Tensor::<f64>::zeros(&[5, 4, 3]);
        assert!(matches!(
            concat_channels(&a, &b),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn split_then_concat_is_bit_exact() {
        let mut r = rng(11);
        let g = random(&[3, 4, 7], &mut r);
        let (a, b) = split_channels(&g, 2).unwrap();
        assert_eq!(concat_channels(&a, &b).unwrap(), g);
    }

    #[test]
    fn gradient_check() {
        let mut r = rng(12);
        let a = random(&[3, 3, 2], &mut r);
        let b = random(&[3, 3, 4], &mut r);
        let w = random(&[3, 3, 6], &mut r);
        let (ga, gb) = split_channels(&w, 2).unwrap();
        let na = finite_diff_gradient(|t| concat_channels(t, &b).unwrap().dot(&w).unwrap(), &a, 1e-5)
            .unwrap();
        let nb = finite_diff_gradient(|t| concat_channels(&a, t).unwrap().dot(&w).unwrap(), &b, 1e-5)
            .unwrap();
        assert!(max_rel_err(ga.data(), na.data()) < 1e-7);
        assert!(max_rel_err(gb.data(), nb.data()) < 1e-7);
    }
}
