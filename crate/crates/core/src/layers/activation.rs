use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Element-wise non-linearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn eval<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation's output. ReLU's
    /// subgradient at exactly zero is zero.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
        }
    }

    pub fn forward<T: Scalar>(self, input: &Tensor<T>) -> Tensor<T> {
        if self == Activation::Identity {
            return input.clone();
        }
        input.map(|v| self.eval(v))
    }

    /// Upstream gradient times the element-wise derivative, evaluated at the
    /// forward `output`.
    pub fn backward<T: Scalar>(self, output: &Tensor<T>, upstream: &Tensor<T>) -> Tensor<T> {
        assert_eq!(output.shape(), upstream.shape(), "activation backward shape");
        let mut g = upstream.clone();
        if self != Activation::Identity {
            for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
                *gv *= self.derivative_from_output(y);
            }
        }
        g
    }
}
