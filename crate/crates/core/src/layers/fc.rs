use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{matvec_into, matvec_t_into, outer_add, Tensor};

/// Fully-connected layer: `y = W·x + b` with `W` shaped `(D_out, D_in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FcParams<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct FcGrads<T> {
    /// Same shape as the forward input (not flattened).
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> FcParams<T> {
    pub fn in_dim(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.dims()[0]
    }

    fn check(&self, input: &Tensor<T>) -> Result<()> {
        if self.weights.shape().rank() != 2
            || input.len() != self.in_dim()
            || self.bias.len() != self.out_dim()
        {
            return Err(Error::ShapeMismatch {
                op: "fully_connected",
                lhs: input.shape().clone(),
                rhs: self.weights.shape().clone(),
            });
        }
        Ok(())
    }
}

/// Flattens `input` and applies the affine map.
pub fn fc_forward<T: Scalar>(input: &Tensor<T>, params: &FcParams<T>) -> Result<Tensor<T>> {
    params.check(input)?;
    let mut out = params.bias.data().to_vec();
    matvec_into(
        params.weights.data(),
        params.out_dim(),
        params.in_dim(),
        input.data(),
        &mut out,
    );
    Tensor::vector(out)
}

/// Returns `(Wᵀ·g, g·xᵀ, g)`.
pub fn fc_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &FcParams<T>,
    upstream: &Tensor<T>,
) -> Result<FcGrads<T>> {
    params.check(input)?;
    if upstream.len() != params.out_dim() {
        return Err(Error::ShapeMismatch {
            op: "fully_connected backward",
            lhs: upstream.shape().clone(),
            rhs: params.bias.shape().clone(),
        });
    }
    let mut gx = vec![T::zero(); input.len()];
    matvec_t_into(
        params.weights.data(),
        params.out_dim(),
        params.in_dim(),
        upstream.data(),
        &mut gx,
    );
    let mut gw = Tensor::zeros_like(&params.weights);
    outer_add(gw.data_mut(), upstream.data(), input.data());
    Ok(FcGrads {
        input: Tensor::from_shape(input.shape().clone(), gx)?,
        weights: gw,
        bias: Tensor::from_shape(params.bias.shape().clone(), upstream.data().to_vec())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_gradient, max_rel_err};
    use crate::layers::testutil::{random, rng};

    #[test]
    fn identity_weights_pass_input_through() {
        let x = Tensor::vector(vec![1.0, -2.0, 3.5]).unwrap();
        let p = FcParams {
            weights: Tensor::identity(3),
            bias: Tensor::zeros(&[3]),
        };
        assert_eq!(fc_forward(&x, &p).unwrap(), x);
    }

    #[test]
    fn zero_weights_give_bias() {
        let x = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let b = Tensor::vector(vec![0.25, -4.0, 7.0]).unwrap();
        let p = FcParams {
            weights: Tensor::zeros(&[3, 2]),
            bias: b.clone(),
        };
        assert_eq!(fc_forward(&x, &p).unwrap(), b);
    }

    #[test]
    fn dimension_mismatch() {
        let p = FcParams::<f64> {
            weights: Tensor::zeros(&[3, 2]),
            bias: Tensor::zeros(&[3]),
        };
        assert!(fc_forward(&Tensor::zeros(&[3]), &p).is_err());
    }

    #[test]
    fn gradient_check_8_to_5() {
        let mut r = rng(7);
        let x = random(&[2, 2, 2], &mut r);
        let p = FcParams {
            weights: random(&[5, 8], &mut r),
            bias: random(&[5], &mut r),
        };
        let up = random(&[5], &mut r);
        let g = fc_backward(&x, &p, &up).unwrap();
        assert_eq!(g.input.dims(), x.dims());
        let loss = |x: &Tensor<f64>, p: &FcParams<f64>| fc_forward(x, p).unwrap().dot(&up).unwrap();
        let nx = finite_diff_gradient(|t| loss(t, &p), &x, 1e-5).unwrap();
        assert!(max_rel_err(g.input.data(), nx.data()) < 1e-6);
        let nw = finite_diff_gradient(
            |t| {
                loss(
                    &x,
                    &FcParams {
                        weights: t.clone(),
                        bias: p.bias.clone(),
                    },
                )
            },
            &p.weights,
            1e-5,
        )
        .unwrap();
        assert!(max_rel_err(g.weights.data(), nw.data()) < 1e-6);
        let nb = finite_diff_gradient(
            |t| {
                loss(
                    &x,
                    &FcParams {
                        weights: p.weights.clone(),
                        bias: t.clone(),
                    },
                )
            },
            &p.bias,
            1e-5,
        )
        .unwrap();
        assert!(max_rel_err(g.bias.data(), nb.data()) < 1e-6);
    }
}
