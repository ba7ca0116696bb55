//! Shape-tagged dense array of 64-bit reals, row-major.
//!
//! This is the universal value carrier for batches, activations, parameters
//! and gradients. Everything at desk scale is rank 1 or 2, so the matrix
//! helpers below only cover those cases.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting shape/length mismatches and non-finite
    /// entries. No NaN or Inf is ever admitted into an operation.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&s| s == 0) {
            return Err(Error::Shape(format!("zero-sized dimension in {shape:?}")));
        }
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} implies {numel} entries, got {}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Input("non-finite entry in tensor data".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Number of rows when interpreted as a matrix (rank-1 tensors count as
    /// a single row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn assert_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Input(format!("non-finite value in {what}")))
        }
    }

    /// `self (m×n) · other (n×p)`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, n) = (self.rows(), self.cols());
        let (n2, p) = (other.rows(), other.cols());
        if n != n2 {
            return Err(Error::Shape(format!(
                "matmul {m}x{n} by {n2}x{p}: inner dimensions differ"
            )));
        }
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            let lhs = self.row(i);
            for (kk, &l) in lhs.iter().enumerate() {
                if l == 0.0 {
                    continue;
                }
                let rhs = other.row(kk);
                let dst = &mut out[i * p..(i + 1) * p];
                for (d, &r) in dst.iter_mut().zip(rhs.iter()) {
                    *d += l * r;
                }
            }
        }
        Tensor::matrix(m, p, out)
    }

    /// `selfᵀ (n×m) · other (m×p)` without materializing the transpose.
    pub fn transpose_matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, n) = (self.rows(), self.cols());
        let (m2, p) = (other.rows(), other.cols());
        if m != m2 {
            return Err(Error::Shape(format!(
                "transpose_matmul {n}x{m} by {m2}x{p}: inner dimensions differ"
            )));
        }
        let mut out = vec![0.0; n * p];
        for r in 0..m {
            let lhs = self.row(r);
            let rhs = other.row(r);
            for (i, &l) in lhs.iter().enumerate() {
                if l == 0.0 {
                    continue;
                }
                let dst = &mut out[i * p..(i + 1) * p];
                for (d, &v) in dst.iter_mut().zip(rhs.iter()) {
                    *d += l * v;
                }
            }
        }
        Tensor::matrix(n, p, out)
    }

    /// `self (m×n) · otherᵀ (p×n)`.
    pub fn matmul_transpose(&self, other: &Tensor) -> Result<Tensor> {
        let (m, n) = (self.rows(), self.cols());
        let (p, n2) = (other.rows(), other.cols());
        if n != n2 {
            return Err(Error::Shape(format!(
                "matmul_transpose {m}x{n} by {n2}x{p}: inner dimensions differ"
            )));
        }
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            let lhs = self.row(i);
            for j in 0..p {
                let rhs = other.row(j);
                out[i * p + j] = lhs.iter().zip(rhs.iter()).map(|(a, b)| a * b).sum();
            }
        }
        Tensor::matrix(m, p, out)
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let (m, n) = (self.rows(), self.cols());
        let mut sums = vec![0.0; n];
        for i in 0..m {
            for (s, &v) in sums.iter_mut().zip(self.row(i)) {
                *s += v;
            }
        }
        sums
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
