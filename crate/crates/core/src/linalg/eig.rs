//! Symmetric eigensolvers: implicit QL on tridiagonal matrices, and
//! Householder tridiagonalization for small dense symmetric matrices.

use alloc::vec::Vec;

use super::DenseMatrix;
use crate::error::{Error, Result};

/// Iteration cap per eigenvalue for the implicit QL sweep.
pub const TRIDIAG_MAX_ITER: usize = 100_000;

/// Symmetric tridiagonal matrix stored as its diagonal and single off-diagonal.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TridiagonalMatrix {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

impl TridiagonalMatrix {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::EmptyInput("tridiagonal matrix"));
        }
        Error::check_len(diag.len() - 1, offdiag.len())?;
        if diag.iter().chain(&offdiag).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite tridiagonal entry".into()));
        }
        Ok(Self { diag, offdiag })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.dim();
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, self.diag[i]);
        }
        for (i, &b) in self.offdiag.iter().enumerate() {
            m.set(i, i + 1, b);
            m.set(i + 1, i, b);
        }
        m
    }

    /// Leading principal `k x k` block.
    pub fn leading(&self, k: usize) -> Self {
        let k = k.clamp(1, self.dim());
        Self { diag: self.diag[..k].to_vec(), offdiag: self.offdiag[..k - 1].to_vec() }
    }

    pub fn max_abs(&self) -> f64 {
        self.diag.iter().chain(&self.offdiag).fold(0.0f64, |m, x| m.max(libm::fabs(*x)))
    }
}

/// Eigenvalues in descending order with aligned unit eigenvectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Keeps the leading `n` pairs.
    pub fn truncate(&mut self, n: usize) {
        self.eigenvalues.truncate(n);
        self.eigenvectors.truncate_cols(n);
    }
}

/// Row-major scratch matrix used by the EISPACK-style kernels below.
struct Square {
    n: usize,
    a: Vec<f64>,
}

impl Square {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }
    #[inline]
    fn put(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }
}

/// Eigen-decomposition of a symmetric tridiagonal matrix.
pub fn tridiag_eig(t: &TridiagonalMatrix) -> Result<Spectrum> {
    let n = t.dim();
    if n == 0 {
        return Err(Error::EmptyInput("tridiagonal matrix"));
    }
    let mut d = t.diag.clone();
    let mut e = t.offdiag.clone();
    e.push(0.0);
    let mut z = Square { n, a: alloc::vec![0.0; n * n] };
    for i in 0..n {
        z.put(i, i, 1.0);
    }
    ql_implicit(&mut d, &mut e, &mut z)?;
    Ok(sorted_spectrum(d, &z))
}

/// Eigen-decomposition of a dense symmetric matrix (Householder reduction to
/// tridiagonal form followed by implicit QL). Only the lower triangle is read.
pub fn symmetric_eig(a: &DenseMatrix) -> Result<Spectrum> {
    let n = a.rows();
    Error::check_len(n, a.cols())?;
    if n == 0 {
        return Err(Error::EmptyInput("symmetric matrix"));
    }
    let mut v = Square { n, a: alloc::vec![0.0; n * n] };
    for i in 0..n {
        for j in 0..=i {
            let x = a.get(i, j);
            v.put(i, j, x);
            v.put(j, i, x);
        }
    }
    let mut d = alloc::vec![0.0; n];
    let mut e = alloc::vec![0.0; n];
    householder_tridiagonalize(&mut v, &mut d, &mut e);
    // Shift sub-diagonal so e[i] couples i and i+1.
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    ql_implicit(&mut d, &mut e, &mut v)?;
    Ok(sorted_spectrum(d, &v))
}

fn sorted_spectrum(d: Vec<f64>, z: &Square) -> Spectrum {
    let n = z.n;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
    let mut vecs = DenseMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let out = vecs.col_mut(col);
        for (row, o) in out.iter_mut().enumerate() {
            *o = z.at(row, src);
        }
    }
    Spectrum { eigenvalues: order.iter().map(|&i| d[i]).collect(), eigenvectors: vecs }
}

/// Implicit QL with Wilkinson-style shifts (tql2). `e[i]` couples `i` and
/// `i + 1`, `e[n-1] = 0`. Rotations are accumulated into the columns of `z`.
fn ql_implicit(d: &mut [f64], e: &mut [f64], z: &mut Square) -> Result<()> {
    let n = d.len();
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(libm::fabs(d[l]) + libm::fabs(e[l]));
        let mut m = l;
        while m < n - 1 && libm::fabs(e[m]) > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > TRIDIAG_MAX_ITER {
                    return Err(Error::ConvergenceFailure(l));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = libm::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = libm::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let h = z.at(k, i + 1);
                        let zi = z.at(k, i);
                        z.put(k, i + 1, s * zi + c * h);
                        z.put(k, i, c * zi - s * h);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if !p.is_finite() || !d[l].is_finite() {
                    return Err(Error::ConvergenceFailure(l));
                }
                if libm::fabs(e[l]) <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Householder reduction of a symmetric matrix to tridiagonal form (tred2).
/// On exit `v` holds the accumulated orthogonal transform, `d` the diagonal
/// and `e[1..]` the sub-diagonal.
fn householder_tridiagonalize(v: &mut Square, d: &mut [f64], e: &mut [f64]) {
    let n = v.n;
    for j in 0..n {
        d[j] = v.at(n - 1, j);
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += libm::fabs(*dk);
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v.at(i - 1, j);
                v.put(i, j, 0.0);
                v.put(j, i, 0.0);
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = libm::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v.put(j, i, f);
                g = e[j] + v.at(j, j) * f;
                for k in j + 1..i {
                    g += v.at(k, j) * d[k];
                    e[k] += v.at(k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let val = v.at(k, j) - (f * e[k] + g * d[k]);
                    v.put(k, j, val);
                }
                d[j] = v.at(i - 1, j);
                v.put(i, j, 0.0);
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        let vii = v.at(i, i);
        v.put(n - 1, i, vii);
        v.put(i, i, 1.0);
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v.at(k, i + 1) / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v.at(k, i + 1) * v.at(k, j);
                }
                for k in 0..=i {
                    let val = v.at(k, j) - g * d[k];
                    v.put(k, j, val);
                }
            }
        }
        for k in 0..=i {
            v.put(k, i + 1, 0.0);
        }
    }
    for j in 0..n {
        d[j] = v.at(n - 1, j);
        v.put(n - 1, j, 0.0);
    }
    v.put(n - 1, n - 1, 1.0);
    e[0] = 0.0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{axpy, norm2};
    use crate::rng;
    use crate::testutil::jacobi_eigenvalues;
    use proptest::prelude::*;

    fn residual(t: &DenseMatrix, lambda: f64, w: &[f64]) -> f64 {
        let mut tw = t.matvec(w).unwrap();
        axpy(-lambda, w, &mut tw);
        norm2(&tw)
    }

    #[test]
    fn one_by_one() {
        let t = TridiagonalMatrix::new(alloc::vec![5.0], alloc::vec![]).unwrap();
        let s = tridiag_eig(&t).unwrap();
        assert_eq!(s.eigenvalues, alloc::vec![5.0]);
        assert_eq!(s.eigenvectors.col(0), &[1.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let t = TridiagonalMatrix::new(alloc::vec![2.0, 2.0], alloc::vec![1.0]).unwrap();
        let s = tridiag_eig(&t).unwrap();
        assert!((s.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((s.eigenvalues[1] - 1.0).abs() < 1e-14);
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let v0 = s.eigenvectors.col(0);
        let v1 = s.eigenvectors.col(1);
        assert!((v0[0].abs() - h).abs() < 1e-14 && (v0[0] - v0[1]).abs() < 1e-14);
        assert!((v1[0].abs() - h).abs() < 1e-14 && (v1[0] + v1[1]).abs() < 1e-14);
    }

    #[test]
    fn random_tridiagonal_matches_jacobi() {
        let mut g = rng::stream(5, 0);
        let mut diag = alloc::vec![0.0; 30];
        let mut off = alloc::vec![0.0; 29];
        rng::fill_gaussian(&mut g, &mut diag);
        rng::fill_gaussian(&mut g, &mut off);
        let t = TridiagonalMatrix::new(diag, off).unwrap();
        let s = tridiag_eig(&t).unwrap();
        let oracle = jacobi_eigenvalues(&t.to_dense());
        for (a, b) in s.eigenvalues.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        let dense = t.to_dense();
        for (j, &l) in s.eigenvalues.iter().enumerate() {
            assert!(residual(&dense, l, s.eigenvectors.col(j)) <= 1e-10 * l.abs().max(1.0));
            assert!((norm2(s.eigenvectors.col(j)) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dense_symmetric_matches_jacobi() {
        let mut g = rng::stream(6, 0);
        let n = 25;
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let x = rng::gaussian(&mut g);
                a.set(i, j, x);
                a.set(j, i, x);
            }
        }
        let s = symmetric_eig(&a).unwrap();
        let oracle = jacobi_eigenvalues(&a);
        for (x, y) in s.eigenvalues.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-10);
        }
        for (j, &l) in s.eigenvalues.iter().enumerate() {
            assert!(residual(&a, l, s.eigenvectors.col(j)) < 1e-10 * l.abs().max(1.0));
        }
        assert!(s.eigenvectors.orthogonality_defect() < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(TridiagonalMatrix::new(alloc::vec![], alloc::vec![]).is_err());
        assert!(TridiagonalMatrix::new(alloc::vec![1.0, 2.0], alloc::vec![]).is_err());
    }

    proptest! {
        #[test]
        fn trace_is_preserved(seed in 0u64..500, k in 1usize..40) {
            let mut g = rng::stream(seed, 1);
            let mut diag = alloc::vec![0.0; k];
            let mut off = alloc::vec![0.0; k - 1];
            rng::fill_gaussian(&mut g, &mut diag);
            rng::fill_gaussian(&mut g, &mut off);
            let t = TridiagonalMatrix::new(diag.clone(), off).unwrap();
            let s = tridiag_eig(&t).unwrap();
            let tr: f64 = diag.iter().sum();
            let sum: f64 = s.eigenvalues.iter().sum();
            let maxd = diag.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            prop_assert!((tr - sum).abs() <= 1e-9 * k as f64 * maxd.max(1e-300));
            prop_assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
