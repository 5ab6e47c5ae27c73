use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Convolution parameters. Kernels are laid out `(kH, kW, C_in, C_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dParams<T> {
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

/// `⌊(n + 2·pad − k) / stride⌋ + 1`, or an error when the kernel does not fit.
pub fn output_extent(n: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(Error::Geometry("kernel and stride must be positive".into()));
    }
    let padded = n + 2 * padding;
    if kernel > padded {
        return Err(Error::Geometry(format!(
            "kernel {kernel} larger than padded extent {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

impl<T: Scalar> Conv2dParams<T> {
    pub fn kernel_dims(&self) -> (usize, usize, usize, usize) {
        let d = self.kernels.dims();
        (d[0], d[1], d[2], d[3])
    }

    fn geometry(&self, input: &Tensor<T>) -> Result<Geometry> {
        let (kh, kw, cin, cout) = self.kernel_dims();
        let dims = input.dims();
        if dims.len() != 3 || dims[2] != cin {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: input.shape().clone(),
                rhs: self.kernels.shape().clone(),
            });
        }
        if self.bias.len() != cout {
            return Err(Error::ShapeMismatch {
                op: "conv2d bias",
                lhs: self.bias.shape().clone(),
                rhs: self.kernels.shape().clone(),
            });
        }
        Ok(Geometry {
            h: dims[0],
            w: dims[1],
            oh: output_extent(dims[0], kh, self.stride, self.padding)?,
            ow: output_extent(dims[1], kw, self.stride, self.padding)?,
            kh,
            kw,
            cin,
            cout,
        })
    }
}

struct Geometry {
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    kh: usize,
    kw: usize,
    cin: usize,
    cout: usize,
}

impl Geometry {
    /// Input coordinate under output `o`, kernel tap `k`; `None` in the padding.
    #[inline]
    fn source(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let pos = (o * stride + k).checked_sub(pad)?;
        (pos < extent).then_some(pos)
    }
}

/// Cross-correlation (no kernel flip) with zero padding, plus per-channel bias.
pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, params: &Conv2dParams<T>) -> Result<Tensor<T>> {
    let g = params.geometry(input)?;
    let x = input.data();
    let k = params.kernels.data();
    let mut out = vec![T::zero(); g.oh * g.ow * g.cout];
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let cell = &mut out[(oy * g.ow + ox) * g.cout..(oy * g.ow + ox + 1) * g.cout];
            cell.copy_from_slice(params.bias.data());
            for ky in 0..g.kh {
                let Some(iy) = Geometry::source(oy, ky, params.stride, params.padding, g.h) else {
                    continue;
                };
                for kx in 0..g.kw {
                    let Some(ix) = Geometry::source(ox, kx, params.stride, params.padding, g.w)
                    else {
                        continue;
                    };
                    let xin = &x[(iy * g.w + ix) * g.cin..(iy * g.w + ix + 1) * g.cin];
                    let tap = (ky * g.kw + kx) * g.cin * g.cout;
                    for (ci, &xv) in xin.iter().enumerate() {
                        let krow = &k[tap + ci * g.cout..tap + (ci + 1) * g.cout];
                        for (o, &kv) in cell.iter_mut().zip(krow) {
                            *o += xv * kv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[g.oh, g.ow, g.cout], out)
}

/// Gradients of a scalar loss with respect to input, kernels and bias, given
/// the upstream gradient of the forward output.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &Conv2dParams<T>,
    upstream: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let g = params.geometry(input)?;
    if upstream.dims() != [g.oh, g.ow, g.cout] {
        return Err(Error::ShapeMismatch {
            op: "conv2d backward",
            lhs: upstream.shape().clone(),
            rhs: crate::tensor::Shape::new(&[g.oh, g.ow, g.cout])?,
        });
    }
    let x = input.data();
    let k = params.kernels.data();
    let up = upstream.data();
    let mut gx = vec![T::zero(); x.len()];
    let mut gk = vec![T::zero(); k.len()];
    let mut gb = vec![T::zero(); g.cout];
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let gcell = &up[(oy * g.ow + ox) * g.cout..(oy * g.ow + ox + 1) * g.cout];
            for (b, &gv) in gb.iter_mut().zip(gcell) {
                *b += gv;
            }
            for ky in 0..g.kh {
                let Some(iy) = Geometry::source(oy, ky, params.stride, params.padding, g.h) else {
                    continue;
                };
                for kx in 0..g.kw {
                    let Some(ix) = Geometry::source(ox, kx, params.stride, params.padding, g.w)
                    else {
                        continue;
                    };
                    let base = (iy * g.w + ix) * g.cin;
                    let tap = (ky * g.kw + kx) * g.cin * g.cout;
                    for ci in 0..g.cin {
                        let xv = x[base + ci];
                        let row = tap + ci * g.cout;
                        let mut acc = T::zero();
                        for co in 0..g.cout {
                            gk[row + co] += xv * gcell[co];
                            acc += k[row + co] * gcell[co];
                        }
                        gx[base + ci] += acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::from_shape(input.shape().clone(), gx)?,
        kernels: Tensor::from_shape(params.kernels.shape().clone(), gk)?,
        bias: Tensor::from_shape(params.bias.shape().clone(), gb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_gradient, max_rel_err};
    use crate::layers::testutil::{random, rng};

    fn params(k: Tensor<f64>, b: Tensor<f64>, stride: usize, padding: usize) -> Conv2dParams<f64> {
        Conv2dParams {
            kernels: k,
            bias: b,
            stride,
            padding,
        }
    }

    /// Seven nested loops, written independently of the production kernel.
    fn naive(x: &Tensor<f64>, p: &Conv2dParams<f64>) -> Tensor<f64> {
        let (kh, kw, cin, cout) = p.kernel_dims();
        let (h, w) = (x.dims()[0] as isize, x.dims()[1] as isize);
        let oh = (x.dims()[0] + 2 * p.padding - kh) / p.stride + 1;
        let ow = (x.dims()[1] + 2 * p.padding - kw) / p.stride + 1;
        let mut out = Tensor::zeros(&[oh, ow, cout]);
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut s = p.bias.data()[co];
                    for ky in 0..kh {
                        for kx in 0..kw {
                            for ci in 0..cin {
                                let iy = (oy * p.stride + ky) as isize - p.padding as isize;
                                let ix = (ox * p.stride + kx) as isize - p.padding as isize;
                                if iy >= 0 && ix >= 0 && iy < h && ix < w {
                                    s += x.at(&[iy as usize, ix as usize, ci])
                                        * p.kernels.at(&[ky, kx, ci, co]);
                                }
                            }
                        }
                    }
                    *out.at_mut(&[oy, ox, co]) = s;
                }
            }
        }
        out
    }

    #[test]
    fn one_by_one_identity_kernel() {
        let mut r = rng(1);
        let x = random(&[4, 5, 3], &mut r);
        let mut k = Tensor::zeros(&[1, 1, 3, 3]);
        for c in 0..3 {
            *k.at_mut(&[0, 0, c, c]) = 1.0;
        }
        let y = conv2d_forward(&x, &params(k, Tensor::zeros(&[3]), 1, 0)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn output_extent_arithmetic() {
        assert_eq!(output_extent(107, 7, 2, 0).unwrap(), 51);
        assert!(output_extent(3, 5, 1, 0).is_err());
        assert_eq!(output_extent(3, 5, 1, 1).unwrap(), 1);
        let x = Tensor::<f32>::zeros(&[107, 107, 3]);
        let p = Conv2dParams {
            kernels: Tensor::zeros(&[7, 7, 3, 2]),
            bias: Tensor::zeros(&[2]),
            stride: 2,
            padding: 0,
        };
        assert_eq!(conv2d_forward(&x, &p).unwrap().dims(), &[51, 51, 2]);
    }

    #[test]
    fn channel_mismatch_is_error() {
        let x = Tensor::<f64>::zeros(&[4, 4, 2]);
        let p = params(Tensor::zeros(&[3, 3, 3, 1]), Tensor::zeros(&[1]), 1, 0);
        assert!(matches!(
            conv2d_forward(&x, &p),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn matches_naive_reference() {
        let mut r = rng(2);
        for (h, w, cin, cout, k, s, pad) in [
            (8, 8, 3, 4, 3, 1, 0),
            (8, 7, 3, 2, 3, 2, 1),
            (5, 6, 1, 4, 2, 1, 2),
            (8, 8, 2, 3, 5, 3, 1),
        ] {
            let x = random(&[h, w, cin], &mut r);
            let p = params(random(&[k, k, cin, cout], &mut r), random(&[cout], &mut r), s, pad);
            let fast = conv2d_forward(&x, &p).unwrap();
            let slow = naive(&x, &p);
            assert_eq!(fast.dims(), slow.dims());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng(4);
        let x = random(&[6, 6, 2], &mut r);
        let p = params(random(&[3, 3, 2, 2], &mut r), random(&[2], &mut r), 1, 1);
        let weights = random(&[6, 6, 2], &mut r);
        let loss = |x: &Tensor<f64>, p: &Conv2dParams<f64>| {
            conv2d_forward(x, p).unwrap().dot(&weights).unwrap()
        };
        let grads = conv2d_backward(&x, &p, &weights).unwrap();

        let nx = finite_diff_gradient(|t| loss(t, &p), &x, 1e-5).unwrap();
        assert!(max_rel_err(grads.input.data(), nx.data()) < 1e-5);
        let nk = finite_diff_gradient(
            |t| loss(&x, &params(t.clone(), p.bias.clone(), 1, 1)),
            &p.kernels,
            1e-5,
        )
        .unwrap();
        assert!(max_rel_err(grads.kernels.data(), nk.data()) < 1e-5);
        let nb = finite_diff_gradient(
            |t| loss(&x, &params(p.kernels.clone(), t.clone(), 1, 1)),
            &p.bias,
            1e-5,
        )
        .unwrap();
        assert!(max_rel_err(grads.bias.data(), nb.data()) < 1e-5);
    }
}
