//! Dense row-major `f64` matrix used for activations, parameters and gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values cannot fill a {rows}x{cols} tensor",
                data.len()
            )));
        }
        Ok(Tensor2 { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} values, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor2 {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor2::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        self.data.iter_mut().for_each(|v| *v = f(*v));
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Rows selected by index, in the order given.
    pub fn select_rows(&self, indices: &[usize]) -> Tensor2 {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Tensor2 {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Columns `start..end` of every row.
    pub fn col_slice(&self, start: usize, end: usize) -> Tensor2 {
        let width = end - start;
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Tensor2 {
            rows: self.rows,
            cols: width,
            data,
        }
    }

    fn check_same_shape(&self, other: &Tensor2, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor2) -> Result<()> {
        self.check_same_shape(other, "add")?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Element-wise product.
    pub fn hadamard(&self, other: &Tensor2) -> Result<Tensor2> {
        self.check_same_shape(other, "hadamard")?;
        Ok(Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// Adds a `1 x cols` row vector to every row.
    pub fn add_row_broadcast(&mut self, row: &Tensor2) -> Result<()> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "broadcast {:?} onto {:?}",
                row.shape(),
                self.shape()
            )));
        }
        for r in 0..self.rows {
            self.row_mut(r)
                .iter_mut()
                .zip(&row.data)
                .for_each(|(a, b)| *a += b);
        }
        Ok(())
    }

    /// Column sums as a `1 x cols` tensor.
    pub fn sum_rows(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(1, self.cols);
        for r in 0..self.rows {
            out.data
                .iter_mut()
                .zip(self.row(r))
                .for_each(|(a, b)| *a += b);
        }
        out
    }

    /// `self · rhs`
    pub fn matmul(&self, rhs: &Tensor2) -> Result<Tensor2> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "matmul {:?} x {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let mut out = Tensor2::zeros(self.rows, rhs.cols);
        gemm(
            (self.rows, self.cols, rhs.cols),
            &self.data,
            (self.cols as isize, 1),
            &rhs.data,
            (rhs.cols as isize, 1),
            &mut out.data,
            0.0,
        );
        Ok(out)
    }

    /// `selfᵀ · rhs`
    pub fn t_matmul(&self, rhs: &Tensor2) -> Result<Tensor2> {
        if self.rows != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "t_matmul {:?}ᵀ x {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let mut out = Tensor2::zeros(self.cols, rhs.cols);
        gemm(
            (self.cols, self.rows, rhs.cols),
            &self.data,
            (1, self.cols as isize),
            &rhs.data,
            (rhs.cols as isize, 1),
            &mut out.data,
            0.0,
        );
        Ok(out)
    }

    /// `self · rhsᵀ`
    pub fn matmul_t(&self, rhs: &Tensor2) -> Result<Tensor2> {
        if self.cols != rhs.cols {
            return Err(Error::DimensionMismatch(format!(
                "matmul_t {:?} x {:?}ᵀ",
                self.shape(),
                rhs.shape()
            )));
        }
        let mut out = Tensor2::zeros(self.rows, rhs.rows);
        gemm(
            (self.rows, self.cols, rhs.rows),
            &self.data,
            (self.cols as isize, 1),
            &rhs.data,
            (1, rhs.cols as isize),
            &mut out.data,
            0.0,
        );
        Ok(out)
    }

    /// `self += a · b`
    pub fn add_matmul(&mut self, a: &Tensor2, b: &Tensor2) -> Result<()> {
        if a.cols != b.rows || self.rows != a.rows || self.cols != b.cols {
            return Err(Error::DimensionMismatch(format!(
                "add_matmul {:?} += {:?} x {:?}",
                self.shape(),
                a.shape(),
                b.shape()
            )));
        }
        gemm(
            (a.rows, a.cols, b.cols),
            &a.data,
            (a.cols as isize, 1),
            &b.data,
            (b.cols as isize, 1),
            &mut self.data,
            1.0,
        );
        Ok(())
    }
}

/// `c = a·b + beta·c` for an `m x k` by `k x n` product with explicit strides.
fn gemm(
    (m, k, n): (usize, usize, usize),
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: callers guarantee a has m*k, b has k*n and c has m*n elements
    // laid out according to the given strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
