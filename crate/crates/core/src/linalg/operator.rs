use alloc::vec::Vec;

use super::{norm2, scale, DenseMatrix};
use crate::rng;

/// Matrix-free symmetric operator `v ↦ Gv` on `R^dim`.
///
/// Implementations must be deterministic: applying the same operator to the
/// same input twice yields bit-identical output.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// Writes `G x` into `y`. Both slices have length [`dim`](Self::dim).
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = alloc::vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

/// Square dense matrices act by plain matrix-vector product.
impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.rows(), self.cols());
        self.rows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y)
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalOperator(pub Vec<f64>);

impl LinearOperator for DiagonalOperator {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.0) {
            *yi = di * xi;
        }
    }
}

/// Power-method estimate of the largest singular value of a symmetric
/// operator.
///
/// The estimate after each step is `‖G v‖` for the current unit iterate `v`;
/// for symmetric `G` this sequence is non-decreasing and converges to
/// `max |λ|`. Deterministic given `seed`.
pub fn operator_norm<O: LinearOperator + ?Sized>(op: &O, iters: usize, seed: u64) -> f64 {
    let p = op.dim();
    if p == 0 {
        return 0.0;
    }
    let mut g = rng::stream(seed, rng::streams::POWER_START);
    let mut v = rng::unit_vector(&mut g, p);
    let mut w = alloc::vec![0.0; p];
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        op.apply(&v, &mut w);
        let n = norm2(&w);
        if n == 0.0 || !n.is_finite() {
            return if n.is_finite() { estimate } else { n };
        }
        estimate = n;
        scale(&mut w, 1.0 / n);
        core::mem::swap(&mut v, &mut w);
    }
    estimate
}
