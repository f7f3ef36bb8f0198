//! Test-only oracles kept independent of the production solvers.

use alloc::vec::Vec;

use crate::linalg::{DenseMatrix, LinearOperator};

/// Cyclic Jacobi eigenvalues of a symmetric matrix, sorted descending.
pub fn jacobi_eigenvalues(a: &DenseMatrix) -> Vec<f64> {
    jacobi_eigen(a).0
}

/// Cyclic Jacobi eigen-decomposition; returns (descending eigenvalues, vectors).
pub fn jacobi_eigen(a: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = a.rows();
    let mut m = a.clone();
    let mut v = DenseMatrix::identity(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m.get(i, j) * m.get(i, j);
                }
            }
        }
        if off < 1e-30 * (1.0 + crate::linalg::frobenius_norm_sq(&m)) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)));
    let vals = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vecs = DenseMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.col_mut(c).copy_from_slice(v.col(i));
    }
    (vals, vecs)
}

/// Materializes an operator column by column.
pub fn assemble<O: LinearOperator + ?Sized>(op: &O) -> DenseMatrix {
    let p = op.dim();
    let mut out = DenseMatrix::zeros(p, p);
    let mut e = alloc::vec![0.0; p];
    for j in 0..p {
        e[j] = 1.0;
        op.apply(&e, out.col_mut(j));
        e[j] = 0.0;
    }
    out
}

/// Dense symmetric matrix `Q diag(values) Qᵀ` with Haar-random `Q`.
pub fn random_symmetric(p: usize, values: &[f64], seed: u64) -> DenseMatrix {
    let mut g = crate::rng::stream(seed, 99);
    let q = crate::rng::orthonormal(&mut g, p, values.len());
    let mut qd = q.clone();
    qd.scale_columns(values);
    qd.matmul(&q.transpose()).unwrap()
}
