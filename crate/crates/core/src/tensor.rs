//! Dense row-major tensors and the handful of linear-algebra primitives the
//! layers need. There is no broadcasting: every binary operation demands
//! explicitly agreeing shapes.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ordered list of positive extents.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(extents: &[usize]) -> Result<Self> {
        if extents.is_empty() || extents.iter().any(|&e| e == 0) {
            return Err(Error::InvalidShape(extents.to_vec()));
        }
        Ok(Shape(extents.to_vec()))
    }

    pub fn extents(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for axis in (0..self.0.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * self.0[axis + 1];
        }
        strides
    }

    /// Shape obtained by concatenating `other` along `axis`. All other axes
    /// must agree.
    pub fn concat(&self, other: &Shape, axis: usize) -> Result<Shape> {
        let compatible = self.rank() == other.rank()
            && axis < self.rank()
            && self
                .0
                .iter()
                .zip(&other.0)
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !compatible {
            return Err(Error::ShapeMismatch {
                op: "concat",
                lhs: self.clone(),
                rhs: other.clone(),
            });
        }
        let mut out = self.0.clone();
        out[axis] += other.0[axis];
        Ok(Shape(out))
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// Dense N-dimensional array with an explicit shape.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn new(extents: &[usize], data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(extents)?;
        if shape.numel() != data.len() {
            return Err(Error::InvalidShape(extents.to_vec()));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_shape(shape: Shape, data: Vec<T>) -> Result<Self> {
        if shape.numel() != data.len() {
            return Err(Error::InvalidShape(shape.0));
        }
        Ok(Tensor { shape, data })
    }

    pub fn vector(data: Vec<T>) -> Result<Self> {
        let n = data.len();
        Self::new(&[n], data)
    }

    /// Panics on a zero extent; use [`Tensor::new`] for fallible construction.
    pub fn zeros(extents: &[usize]) -> Self {
        Self::filled(extents, T::zero())
    }

    pub fn filled(extents: &[usize], value: T) -> Self {
        let shape = Shape::new(extents).expect("extents must be positive");
        let n = shape.numel();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn zeros_like(other: &Tensor<T>) -> Self {
        Tensor {
            shape: other.shape.clone(),
            data: vec![T::zero(); other.data.len()],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        &self.shape.0
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.rank());
        let mut off = 0;
        for (&i, &e) in index.iter().zip(&self.shape.0) {
            debug_assert!(i < e);
            off = off * e + i;
        }
        off
    }

    pub fn at(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn at_mut(&mut self, index: &[usize]) -> &mut T {
        let off = self.offset(index);
        &mut self.data[off]
    }

    pub fn reshape(&self, extents: &[usize]) -> Result<Self> {
        let shape = Shape::new(extents)?;
        if shape.numel() != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape,
            });
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn flatten(&self) -> Self {
        Tensor {
            shape: Shape(vec![self.data.len()]),
            data: self.data.clone(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn dot(&self, other: &Tensor<T>) -> Result<T> {
        self.check_same("dot", other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn norm_sq(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v * v)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same(&self, op: &'static str, other: &Tensor<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Self> {
        self.check_same("add", other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Self> {
        self.check_same("sub", other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        self.check_same("add_assign", other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    pub fn hadamard(&self, other: &Tensor<T>) -> Result<Self> {
        self.check_same("hadamard", other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a * b)
                .collect(),
        })
    }

    /// Matrix (rows, cols) times vector (cols).
    pub fn matvec(&self, v: &Tensor<T>) -> Result<Self> {
        let mismatch = || Error::ShapeMismatch {
            op: "matvec",
            lhs: self.shape.clone(),
            rhs: v.shape.clone(),
        };
        if self.shape.rank() != 2 || v.shape.rank() != 1 {
            return Err(mismatch());
        }
        let (rows, cols) = (self.shape.0[0], self.shape.0[1]);
        if cols != v.data.len() {
            return Err(mismatch());
        }
        let mut out = vec![T::zero(); rows];
        matvec_into(&self.data, rows, cols, &v.data, &mut out);
        Tensor::new(&[rows], out)
    }

    /// (m, k) times (k, n).
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Self> {
        if self.shape.rank() != 2 || other.shape.rank() != 2 || self.shape.0[1] != other.shape.0[0]
        {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let (m, k, n) = (self.shape.0[0], self.shape.0[1], other.shape.0[1]);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                let rhs = &other.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(rhs) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(&[m, n], out)
    }

    pub fn transpose(&self) -> Result<Self> {
        if self.shape.rank() != 2 {
            return Err(Error::InvalidShape(self.shape.0.clone()));
        }
        let (r, c) = (self.shape.0[0], self.shape.0[1]);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(&[c, r], out)
    }
}

/// `out += m · v` for a row-major (rows, cols) matrix slice.
#[inline]
pub(crate) fn matvec_into<T: Scalar>(m: &[T], rows: usize, cols: usize, v: &[T], out: &mut [T]) {
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        let row = &m[r * cols..(r + 1) * cols];
        let mut acc = T::zero();
        for (&a, &b) in row.iter().zip(v) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// `out += mᵀ · v` for a row-major (rows, cols) matrix slice.
#[inline]
pub(crate) fn matvec_t_into<T: Scalar>(m: &[T], rows: usize, cols: usize, v: &[T], out: &mut [T]) {
    for (r, &g) in v.iter().enumerate().take(rows) {
        if g == T::zero() {
            continue;
        }
        let row = &m[r * cols..(r + 1) * cols];
        for (o, &a) in out.iter_mut().zip(row) {
            *o += a * g;
        }
    }
}

/// `m += a · bᵀ` (outer-product accumulation).
#[inline]
pub(crate) fn outer_add<T: Scalar>(m: &mut [T], a: &[T], b: &[T]) {
    let cols = b.len();
    for (r, &x) in a.iter().enumerate() {
        if x == T::zero() {
            continue;
        }
        let row = &mut m[r * cols..(r + 1) * cols];
        for (o, &y) in row.iter_mut().zip(b) {
            *o += x * y;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(extents: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = extents.iter().product();
        Tensor::new(extents, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_extent_rejected() {
        assert!(Shape::new(&[3, 0]).is_err());
        assert!(Shape::new(&[]).is_err());
        assert!(Tensor::<f64>::new(&[2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn row_major_offsets() {
        let t = Tensor::<f64>::new(&[2, 3, 4], (0..24).map(f64::from).collect()).unwrap();
        assert_eq!(t.shape().strides(), vec![12, 4, 1]);
        assert_eq!(t.at(&[1, 2, 3]), 23.0);
        assert_eq!(t.at(&[1, 0, 2]), 14.0);
    }

    #[test]
    fn identity_matvec() {
        let v = Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(Tensor::<f64>::identity(3).matvec(&v).unwrap(), v);
    }

    #[test]
    fn hadamard_with_zeros_annihilates() {
        let v = Tensor::vector(vec![1.5, -2.0, 3.0]).unwrap();
        let z = Tensor::zeros_like(&v);
        assert_eq!(v.hadamard(&z).unwrap(), z);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&[3, 4], &mut rng);
        let b = random(&[4, 2], &mut rng);
        let c = a.matmul(&b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += a.at(&[i, k]) * b.at(&[k, j]);
                }
                assert!((c.at(&[i, j]) - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mismatch_errors_name_kind_and_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let v = Tensor::<f64>::zeros(&[2]);
        let msg = a.matvec(&v).unwrap_err().to_string();
        assert!(msg.contains("matvec") && msg.contains("(2, 3)") && msg.contains("(2)"));
        let msg = a.hadamard(&Tensor::zeros(&[3, 2])).unwrap_err().to_string();
        assert!(msg.contains("hadamard") && msg.contains("(3, 2)"));
    }

    #[test]
    fn primitives_are_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random(&[5, 5], &mut rng);
        let b = random(&[5, 5], &mut rng);
        let a0 = a.clone();
        let r1 = a.matmul(&b).unwrap();
        let r2 = a.matmul(&b).unwrap();
        assert_eq!(a, a0);
        assert_eq!(
            r1.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            r2.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn concat_shape_rules() {
        let a = Shape::new(&[5, 5, 3]).unwrap();
        let b = Shape::new(&[5, 5, 4]).unwrap();
        assert_eq!(a.concat(&b, 2).unwrap().extents(), &[5, 5, 7]);
        assert!(a.concat(&Shape::new(&[4, 5, 3]).unwrap(), 2).is_err());
    }
}
