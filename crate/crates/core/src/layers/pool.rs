use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Argmax routing recorded by the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolRecord {
    pub input_shape: Shape,
    pub output_shape: Shape,
    pub window: usize,
    pub stride: usize,
    /// Flat input offset of the winning element, one per output element.
    pub argmax: Vec<usize>,
}

/// Channel-wise max over `window × window` cells. Ties go to the first
/// element in row-major window order.
pub fn maxpool_forward<T: Scalar>(
    input: &Tensor<T>,
    window: usize,
    stride: usize,
) -> Result<(Tensor<T>, PoolRecord)> {
    let dims = input.dims();
    if dims.len() != 3 {
        return Err(Error::InvalidShape(dims.to_vec()));
    }
    let (h, w, c) = (dims[0], dims[1], dims[2]);
    if window == 0 || stride == 0 || window > h || window > w {
        return Err(Error::Geometry(format!(
            "pool window {window} (stride {stride}) does not fit input {}",
            input.shape()
        )));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let x = input.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut argmax = Vec::with_capacity(oh * ow * c);
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = (oy * stride * w + ox * stride) * c + ch;
                for dy in 0..window {
                    for dx in 0..window {
                        let off = ((oy * stride + dy) * w + ox * stride + dx) * c + ch;
                        if x[off] > x[best] {
                            best = off;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    let output = Tensor::new(&[oh, ow, c], out)?;
    let record = PoolRecord {
        input_shape: input.shape().clone(),
        output_shape: output.shape().clone(),
        window,
        stride,
        argmax,
    };
    Ok((output, record))
}

/// Routes each upstream cell to its recorded argmax; zeros elsewhere.
pub fn maxpool_backward<T: Scalar>(record: &PoolRecord, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if upstream.shape() != &record.output_shape {
        return Err(Error::ShapeMismatch {
            op: "maxpool backward",
            lhs: upstream.shape().clone(),
            rhs: record.output_shape.clone(),
        });
    }
    let mut grad = vec![T::zero(); record.input_shape.numel()];
    for (&src, &g) in record.argmax.iter().zip(upstream.data()) {
        grad[src] += g;
    }
    Tensor::from_shape(record.input_shape.clone(), grad)
}
