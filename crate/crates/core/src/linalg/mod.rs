//! Dense building blocks: column-major matrices, vector kernels,
//! Gram–Schmidt QR, symmetric eigensolvers and power-method norms.

mod eig;
mod operator;

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use eig::{symmetric_eig, tridiag_eig, Spectrum, TridiagonalMatrix, TRIDIAG_MAX_ITER};
pub use operator::{operator_norm, DiagonalOperator, FnOperator, LinearOperator};

/// Relative threshold below which a Gram–Schmidt residual counts as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Column-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: alloc::vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i + i * n] = 1.0;
        }
        m
    }

    /// Empty matrix with `rows` rows and room for `cols` columns.
    pub fn with_column_capacity(rows: usize, cols: usize) -> Self {
        Self { rows, cols: 0, data: Vec::with_capacity(rows * cols) }
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Error::check_len(rows * cols, data.len())?;
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite matrix entry at offset {pos}")));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices. Panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, &x) in row.iter().enumerate() {
                m.set(i, j, x);
            }
        }
        m
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::with_column_capacity(rows, columns.len());
        for c in columns {
            m.push_column(c)?;
        }
        Ok(m)
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i + i * n] = v;
        }
        m
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i + j * self.rows]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i + j * self.rows] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, so guard the degenerate shape.
        let rows = self.rows.max(1);
        self.data.chunks_exact(rows).take(if self.rows == 0 { 0 } else { self.cols })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn push_column(&mut self, column: &[f64]) -> Result<()> {
        Error::check_len(self.rows, column.len())?;
        self.data.extend_from_slice(column);
        self.cols += 1;
        Ok(())
    }

    /// Appends a zeroed column and returns it for in-place filling.
    pub fn push_zero_column(&mut self) -> &mut [f64] {
        let start = self.data.len();
        self.data.resize(start + self.rows, 0.0);
        self.cols += 1;
        &mut self.data[start..]
    }

    pub fn truncate_cols(&mut self, cols: usize) {
        if cols < self.cols {
            self.cols = cols;
            self.data.truncate(cols * self.rows);
        }
    }

    /// Keeps the leading `cols` columns.
    pub fn leading_columns(&self, cols: usize) -> Self {
        let cols = cols.min(self.cols);
        Self { rows: self.rows, cols, data: self.data[..cols * self.rows].to_vec() }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t.data[j + i * self.cols] = self.data[i + j * self.rows];
            }
        }
        t
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hcat(&self, other: &Self) -> Result<Self> {
        Error::check_len(self.rows, other.rows)?;
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Self { rows: self.rows, cols: self.cols + other.cols, data })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        Error::check_len(self.cols, other.rows)?;
        let mut out = Self::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let oc = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for l in 0..self.cols {
                let b = other.data[l + j * other.rows];
                if b != 0.0 {
                    axpy(b, &self.data[l * self.rows..(l + 1) * self.rows], oc);
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        Error::check_len(self.rows, other.rows)?;
        let mut out = Self::zeros(self.cols, other.cols);
        for j in 0..other.cols {
            let b = other.col(j);
            for i in 0..self.cols {
                out.data[i + j * self.cols] = dot(self.col(i), b);
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.cols, x.len())?;
        let mut y = alloc::vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    /// `y = self · x`; lengths must already agree.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                axpy(xj, self.col(j), y);
            }
        }
    }

    /// `selfᵀ · x`.
    pub fn t_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.rows, x.len())?;
        Ok(self.columns().map(|c| dot(c, x)).collect())
    }

    pub fn scale_columns(&mut self, factors: &[f64]) {
        for (j, &f) in factors.iter().enumerate().take(self.cols) {
            scale(self.col_mut(j), f);
        }
    }

    /// Largest absolute entry of `selfᵀ·self − I`.
    pub fn orthogonality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.cols {
            for j in 0..=i {
                let g = dot(self.col(i), self.col(j));
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max(libm::fabs(g - target));
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(libm::fabs(*x)))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `y += alpha · x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn scale(x: &mut [f64], alpha: f64) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// Pairwise (cascade) summation; error grows as O(log n) instead of O(n).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 128;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

fn pairwise_sum_sq(xs: &[f64]) -> f64 {
    const BLOCK: usize = 128;
    if xs.len() <= BLOCK {
        xs.iter().map(|x| x * x).sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum_sq(&xs[..mid]) + pairwise_sum_sq(&xs[mid..])
    }
}

/// Sum of squared entries.
pub fn frobenius_norm_sq(a: &DenseMatrix) -> f64 {
    pairwise_sum_sq(a.data())
}

pub fn frobenius_norm(a: &DenseMatrix) -> f64 {
    libm::sqrt(frobenius_norm_sq(a))
}

/// Thin QR by modified Gram–Schmidt with a second orthogonalization pass.
///
/// Returns `(Q, R)` with `Q` column-orthonormal and `R` upper triangular with
/// a non-negative diagonal. Consumes `a` and orthogonalizes it in place, so
/// the only extra storage is the `k x k` factor `R`.
pub fn qr_orthonormalize(mut a: DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let (m, k) = (a.rows, a.cols);
    let mut r = DenseMatrix::zeros(k, k);
    for j in 0..k {
        let (done, rest) = a.data.split_at_mut(j * m);
        let col = &mut rest[..m];
        let input_norm = norm2(col);
        for _pass in 0..2 {
            for i in 0..j {
                let qi = &done[i * m..(i + 1) * m];
                let c = dot(qi, col);
                axpy(-c, qi, col);
                r.data[i + j * k] += c;
            }
        }
        let nrm = norm2(col);
        if !(nrm > RANK_TOL * input_norm) || nrm == 0.0 {
            return Err(Error::RankDeficient(j));
        }
        scale(col, 1.0 / nrm);
        r.data[j + j * k] = nrm;
    }
    Ok((a, r))
}

/// Reorthogonalizes `w` against the columns of `basis` (two MGS passes).
pub fn mgs2_against(basis: &DenseMatrix, w: &mut [f64]) {
    for _pass in 0..2 {
        for q in basis.columns() {
            let c = dot(q, w);
            axpy(-c, q, w);
        }
    }
}
