//! Dense rank-0/1/2 containers of f64 used by the tape and the solvers.

use crate::error::{Error, Result};
use std::fmt;

/// Shape of a [`Tensor`]: scalar, vector or matrix. Nothing higher-rank is
/// ever needed; the largest object in either model is the origin-destination
/// convenience matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix { rows: usize, cols: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Scalar => write!(f, "scalar"),
            Shape::Vector(n) => write!(f, "vector[{n}]"),
            Shape::Matrix { rows, cols } => write!(f, "matrix[{rows}x{cols}]"),
        }
    }
}

/// Row-major dense array of f64 with one of the three supported ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn scalar(x: f64) -> Self {
        Tensor {
            shape: Shape::Scalar,
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: Shape::Vector(data.len()),
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Tensor {
            shape: Shape::Matrix { rows, cols },
            data,
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Self::zeros(other.shape)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single entry of a scalar tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.shape, Shape::Scalar);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Elementwise combination of two same-shape tensors.
    pub fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        debug_assert_eq!(self.shape, other.shape, "zip shape");
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape, "add_assign shape");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|x| x * c)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Matrix-vector product. Shapes must already be validated by the caller.
    pub fn matvec(&self, v: &Tensor) -> Tensor {
        let Shape::Matrix { rows, cols } = self.shape else {
            panic!("matvec on non-matrix");
        };
        debug_assert_eq!(v.shape, Shape::Vector(cols));
        let mut out = vec![0.0; rows];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * cols..(r + 1) * cols];
            *o = row.iter().zip(&v.data).map(|(&m, &x)| m * x).sum();
        }
        Tensor::vector(out)
    }

    /// Transpose-matrix-vector product `selfᵀ · v` without materializing the
    /// transpose.
    pub fn matvec_t(&self, v: &Tensor) -> Tensor {
        let Shape::Matrix { rows, cols } = self.shape else {
            panic!("matvec_t on non-matrix");
        };
        debug_assert_eq!(v.shape, Shape::Vector(rows));
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            let vr = v.data[r];
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.data[r * cols + c] * vr;
            }
        }
        Tensor::vector(out)
    }

    pub fn transpose(&self) -> Tensor {
        let Shape::Matrix { rows, cols } = self.shape else {
            panic!("transpose on non-matrix");
        };
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = self.data[r * cols + c];
            }
        }
        Tensor::matrix(cols, rows, out)
    }

    /// Outer product of two vectors: `a ⊗ b` with shape `len(a) × len(b)`.
    pub fn outer(a: &Tensor, b: &Tensor) -> Tensor {
        let (Shape::Vector(n), Shape::Vector(m)) = (a.shape, b.shape) else {
            panic!("outer on non-vectors");
        };
        let mut out = Vec::with_capacity(n * m);
        for &x in &a.data {
            for &y in &b.data {
                out.push(x * y);
            }
        }
        Tensor::matrix(n, m, out)
    }

    /// Elementwise power with a scalar exponent; errors on non-positive base
    /// entries so the derivative w.r.t. the exponent stays defined.
    pub fn powf_checked(&self, a: f64) -> Result<Tensor> {
        if let Some(index) = self.data.iter().position(|&x| x <= 0.0) {
            return Err(Error::NonPositiveBase {
                value: self.data[index],
                index,
            });
        }
        Ok(self.map(|x| x.powf(a)))
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
