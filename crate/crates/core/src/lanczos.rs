//! Lanczos tridiagonalization over a matrix-free symmetric operator.
//!
//! Two regimes are provided:
//!
//! * [`lanczos_low_memory`] runs the plain three-term recurrence and keeps
//!   exactly three length-`p` vectors resident. Each iterate is released
//!   through a callback as soon as it is formed, so callers can compress or
//!   store it however they like.
//! * [`lanczos_hi_memory`] additionally stores the whole basis and
//!   reorthogonalizes every new direction against it (two Gram–Schmidt
//!   passes), trading `k·p` floats for a numerically orthonormal basis.
//!
//! Both share one recurrence; the hi-memory variant only starts correcting
//! once vectors outside the three-term window exist, so the first two
//! iterations of both variants are bit-identical for the same seed.
//!
//! Breakdown (a vanishing off-diagonal coefficient) is a soft stop: the run
//! returns with `k_effective` below the requested `k`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm2, DenseMatrix, LinearOperator, Spectrum, TridiagonalMatrix};
use crate::rng;

pub use crate::linalg::{DiagonalOperator, FnOperator};

/// Breakdown threshold on `β_i`, relative to `‖G v_i‖`.
pub const BREAKDOWN_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct LanczosResult {
    pub tridiagonal: TridiagonalMatrix,
    /// Full `p x k_effective` basis (hi-memory only).
    pub basis: Option<DenseMatrix>,
    pub k_effective: usize,
    pub requested: usize,
    /// 1-based iteration whose off-diagonal coefficient vanished.
    pub breakdown: Option<usize>,
    pub seed: u64,
}

impl LanczosResult {
    /// `max |VᵀGV − T|`, available when the basis is stored.
    pub fn projection_defect<O: LinearOperator + ?Sized>(&self, op: &O) -> Option<f64> {
        let v = self.basis.as_ref()?;
        let mut gv = DenseMatrix::zeros(v.rows(), v.cols());
        for j in 0..v.cols() {
            op.apply(v.col(j), gv.col_mut(j));
        }
        let vtgv = v.t_matmul(&gv).ok()?;
        let t = self.tridiagonal.to_dense();
        Some(vtgv.data().iter().zip(t.data()).fold(0.0f64, |m, (a, b)| m.max(libm::fabs(a - b))))
    }
}

/// Choice of the first Lanczos vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartVector {
    /// Seeded uniform direction on the unit sphere.
    #[default]
    Random,
    /// `G r / ‖G r‖` for the seeded random `r`. The Krylov space then lies
    /// inside `range(G)`, so a rank-`R` operator is spanned after `R` steps.
    Range,
}

trait Observer {
    fn accept(&mut self, v: &[f64]);
    fn reorthogonalize(&mut self, w: &mut [f64]);
}

struct Streaming<F>(F);

impl<F: FnMut(&[f64])> Observer for Streaming<F> {
    fn accept(&mut self, v: &[f64]) {
        (self.0)(v)
    }
    fn reorthogonalize(&mut self, _w: &mut [f64]) {}
}

struct FullBasis(DenseMatrix);

impl Observer for FullBasis {
    fn accept(&mut self, v: &[f64]) {
        self.0.push_zero_column().copy_from_slice(v);
    }
    fn reorthogonalize(&mut self, w: &mut [f64]) {
        // Only once something lies outside the {v_{i-1}, v_i} window.
        if self.0.cols() >= 3 {
            linalg::mgs2_against(&self.0, w);
        }
    }
}

fn recurrence<O: LinearOperator + ?Sized, B: Observer>(
    op: &O,
    k: usize,
    seed: u64,
    start: StartVector,
    observer: &mut B,
) -> Result<(TridiagonalMatrix, Option<usize>)> {
    let p = op.dim();
    if k == 0 {
        return Err(Error::InvalidArgument("Lanczos needs k >= 1".into()));
    }
    if p == 0 {
        return Err(Error::InvalidDimensions("operator dimension is zero".into()));
    }
    let mut g = rng::stream(seed, rng::streams::LANCZOS_START);
    let mut v_prev = alloc::vec![0.0; p];
    let mut v = alloc::vec![0.0; p];
    rng::fill_unit_sphere(&mut g, &mut v);
    let mut w = alloc::vec![0.0; p];
    if start == StartVector::Range {
        op.apply(&v, &mut w);
        let n = norm2(&w);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidArgument("start vector has no component in the operator range".into()));
        }
        for (vj, wj) in v.iter_mut().zip(&w) {
            *vj = wj / n;
        }
    }

    let mut alphas = Vec::with_capacity(k);
    let mut betas = Vec::with_capacity(k.saturating_sub(1));
    let mut beta_prev = 0.0;
    let mut breakdown = None;
    for i in 0..k {
        observer.accept(&v);
        op.apply(&v, &mut w);
        let gv_norm = norm2(&w);
        linalg::axpy(-beta_prev, &v_prev, &mut w);
        let alpha = dot(&v, &w);
        alphas.push(alpha);
        linalg::axpy(-alpha, &v, &mut w);
        if i + 1 == k {
            break;
        }
        observer.reorthogonalize(&mut w);
        let beta = norm2(&w);
        if !(beta > BREAKDOWN_TOL * gv_norm) {
            breakdown = Some(i + 1);
            break;
        }
        betas.push(beta);
        core::mem::swap(&mut v_prev, &mut v);
        for (vj, wj) in v.iter_mut().zip(&w) {
            *vj = wj / beta;
        }
        beta_prev = beta;
    }
    Ok((TridiagonalMatrix::new(alphas, betas)?, breakdown))
}

/// Streaming Lanczos: `emit` receives `v_1, v_2, …` in order, each exactly
/// once, before its recurrence coefficients are computed.
pub fn lanczos_low_memory<O, F>(op: &O, k: usize, seed: u64, emit: F) -> Result<LanczosResult>
where
    O: LinearOperator + ?Sized,
    F: FnMut(&[f64]),
{
    lanczos_low_memory_from(op, k, seed, StartVector::Random, emit)
}

pub fn lanczos_low_memory_from<O, F>(op: &O, k: usize, seed: u64, start: StartVector, emit: F) -> Result<LanczosResult>
where
    O: LinearOperator + ?Sized,
    F: FnMut(&[f64]),
{
    let mut obs = Streaming(emit);
    let (t, breakdown) = recurrence(op, k, seed, start, &mut obs)?;
    Ok(LanczosResult { k_effective: t.dim(), tridiagonal: t, basis: None, requested: k, breakdown, seed })
}

/// Lanczos with full reorthogonalization; stores the `p x k` basis.
pub fn lanczos_hi_memory<O>(op: &O, k: usize, seed: u64) -> Result<LanczosResult>
where
    O: LinearOperator + ?Sized,
{
    lanczos_hi_memory_from(op, k, seed, StartVector::Random)
}

pub fn lanczos_hi_memory_from<O>(op: &O, k: usize, seed: u64, start: StartVector) -> Result<LanczosResult>
where
    O: LinearOperator + ?Sized,
{
    let p = op.dim();
    if k > p {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds dimension {p}")));
    }
    let mut obs = FullBasis(DenseMatrix::with_column_capacity(p, k));
    let (t, breakdown) = recurrence(op, k, seed, start, &mut obs)?;
    Ok(LanczosResult { k_effective: t.dim(), tridiagonal: t, basis: Some(obs.0), requested: k, breakdown, seed })
}

/// Number of pairs kept when retaining the top `fraction` of `k` Ritz pairs.
pub fn retained_count(k: usize, fraction: f64) -> usize {
    let n = libm::ceil(fraction * k as f64 - 1e-9) as usize;
    n.clamp(1, k.max(1))
}

/// Diagonalizes `T` and keeps the top `ceil(top_fraction · k_effective)` pairs.
///
/// With a stored basis the eigenvectors are the Ritz vectors `V W`; without
/// one they are the coefficient vectors `W` in the Lanczos basis (use
/// [`ritz_vectors`] with a separately collected basis).
pub fn extract_eigenpairs(res: &LanczosResult, top_fraction: f64) -> Result<Spectrum> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("top_fraction {top_fraction} not in (0, 1]")));
    }
    let mut spec = linalg::tridiag_eig(&res.tridiagonal)?;
    warn_negative(&spec.eigenvalues);
    spec.truncate(retained_count(res.k_effective, top_fraction));
    if let Some(v) = &res.basis {
        spec.eigenvectors = v.matmul(&spec.eigenvectors)?;
    }
    Ok(spec)
}

/// Ritz vectors `V W` for a basis collected from a streaming run.
pub fn ritz_vectors(basis: &DenseMatrix, coefficients: &Spectrum) -> Result<DenseMatrix> {
    basis.matmul(&coefficients.eigenvectors)
}

fn warn_negative(values: &[f64]) {
    let top = values.first().copied().unwrap_or(0.0);
    if let Some(min) = values.last() {
        if *min < -1e-8 * libm::fabs(top) {
            log::warn!("negative Ritz value {min:e} (largest {top:e}); operator may not be PSD");
        }
    }
}

/// Gram matrix of inner products: entry `(i, j)` is `⟨A[:,i], B[:,j]⟩`.
pub fn basis_overlap_heatmap(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    a.t_matmul(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::axpy;
    use crate::testutil::{jacobi_eigen, random_symmetric};

    fn identity_op(p: usize) -> DiagonalOperator {
        DiagonalOperator(alloc::vec![1.0; p])
    }

    #[test]
    fn identity_breaks_down_after_one_step() {
        let mut emitted = 0;
        let res = lanczos_low_memory(&identity_op(8), 5, 1, |_| emitted += 1).unwrap();
        assert_eq!(res.k_effective, 1);
        assert_eq!(res.breakdown, Some(1));
        assert_eq!(res.tridiagonal.diag.len(), 1);
        assert!((res.tridiagonal.diag[0] - 1.0).abs() < 1e-15);
        assert_eq!(emitted, 1);

        let hi = lanczos_hi_memory(&identity_op(8), 3, 1).unwrap();
        assert_eq!(hi.k_effective, 1);
        assert_eq!(hi.basis.unwrap().cols(), 1);
    }

    #[test]
    fn exact_recovery_at_full_dimension() {
        let op = DiagonalOperator(alloc::vec![4.0, 3.0, 2.0, 1.0]);
        let res = lanczos_low_memory(&op, 4, 3, |_| {}).unwrap();
        let spec = linalg::tridiag_eig(&res.tridiagonal).unwrap();
        for (l, want) in spec.eigenvalues.iter().zip([4.0, 3.0, 2.0, 1.0]) {
            assert!((l - want).abs() < 1e-8);
        }
        let all = extract_eigenpairs(&lanczos_hi_memory(&op, 4, 3).unwrap(), 1.0).unwrap();
        assert_eq!(all.len(), 4);
    }

    #[test]
    fn top_ritz_value_on_geometric_spectrum() {
        let values: Vec<f64> = (1..=100).map(|i| libm::pow(2.0, -(i as f64))).collect();
        let g = random_symmetric(100, &values, 4);
        let res = lanczos_low_memory(&g, 20, 5, |_| {}).unwrap();
        let spec = linalg::tridiag_eig(&res.tridiagonal).unwrap();
        let (oracle, _) = jacobi_eigen(&g);
        assert!((spec.eigenvalues[0] - oracle[0]).abs() < 1e-10);
    }

    #[test]
    fn hi_memory_two_steps_on_diagonal() {
        let op = DiagonalOperator(alloc::vec![4.0, 3.0, 2.0, 1.0]);
        let res = lanczos_hi_memory(&op, 2, 8).unwrap();
        let spec = extract_eigenpairs(&res, 1.0).unwrap();
        assert!(spec.eigenvalues[0] <= 4.0 + 1e-12 && spec.eigenvalues[0] > 3.0);
        // Ritz pairs are exact Rayleigh–Ritz pairs of span(V): residual is
        // orthogonal to V and equals β_k |w_k|.
        for j in 0..spec.len() {
            let x = spec.eigenvectors.col(j);
            let mut r = op.apply_vec(x);
            axpy(-spec.eigenvalues[j], x, &mut r);
            let v = res.basis.as_ref().unwrap();
            for c in v.columns() {
                assert!(dot(c, &r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hi_memory_basis_is_orthonormal_and_projects() {
        let values: Vec<f64> = (0..120).map(|i| libm::pow(0.9, i as f64)).collect();
        let g = random_symmetric(120, &values, 10);
        let res = lanczos_hi_memory(&g, 40, 2).unwrap();
        let v = res.basis.as_ref().unwrap();
        assert!(v.orthogonality_defect() <= 1e-8);
        let defect = res.projection_defect(&g).unwrap();
        assert!(defect <= 1e-6 * res.tridiagonal.max_abs());
    }

    #[test]
    fn first_two_iterations_agree_bitwise() {
        let values: Vec<f64> = (0..50).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let g = random_symmetric(50, &values, 12);
        let mut lm_vectors = Vec::new();
        let lm = lanczos_low_memory(&g, 10, 77, |v| lm_vectors.push(v.to_vec())).unwrap();
        let hm = lanczos_hi_memory(&g, 10, 77).unwrap();
        assert_eq!(lm.tridiagonal.diag[..2], hm.tridiagonal.diag[..2]);
        assert_eq!(lm.tridiagonal.offdiag[..2], hm.tridiagonal.offdiag[..2]);
        let basis = hm.basis.unwrap();
        for i in 0..3 {
            assert_eq!(lm_vectors[i].as_slice(), basis.col(i));
        }
    }

    #[test]
    fn emit_order_matches_tridiagonal_positions() {
        let values: Vec<f64> = (0..30).map(|i| 1.0 + i as f64).collect();
        let g = random_symmetric(30, &values, 13);
        let mut vs = Vec::new();
        let res = lanczos_low_memory(&g, 6, 3, |v| vs.push(v.to_vec())).unwrap();
        assert_eq!(vs.len(), 6);
        for (i, v) in vs.iter().enumerate() {
            let gv = g.apply_vec(v);
            assert!((dot(v, &gv) - res.tridiagonal.diag[i]).abs() < 1e-10);
        }
        for i in 0..5 {
            let gv = g.apply_vec(&vs[i]);
            assert!((dot(&vs[i + 1], &gv) - res.tridiagonal.offdiag[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn ritz_values_interlace_psd_spectrum() {
        let values: Vec<f64> = (0..80).map(|i| libm::pow(0.85, i as f64)).collect();
        let g = random_symmetric(80, &values, 14);
        for seed in 0..5 {
            let res = lanczos_low_memory(&g, 30, seed, |_| {}).unwrap();
            let spec = linalg::tridiag_eig(&res.tridiagonal).unwrap();
            let lo = values[79] - 1e-8;
            let hi = values[0] + 1e-8;
            assert!(spec.eigenvalues.iter().all(|&l| l >= lo && l <= hi));
        }
    }

    #[test]
    fn retained_count_examples() {
        assert_eq!(retained_count(40, 0.9), 36);
        assert_eq!(retained_count(4, 1.0), 4);
        assert_eq!(retained_count(10, 0.05), 1);
    }

    #[test]
    fn heatmap_examples() {
        let mut g = rng::stream(3, 0);
        let a = rng::orthonormal(&mut g, 20, 4);
        let h = basis_overlap_heatmap(&a, &a).unwrap();
        assert!((0..4).all(|i| (0..4).all(|j| (h.get(i, j) - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10)));
        let mut rev = DenseMatrix::with_column_capacity(20, 4);
        for j in (0..4).rev() {
            rev.push_column(a.col(j)).unwrap();
        }
        let h = basis_overlap_heatmap(&a, &rev).unwrap();
        for i in 0..4 {
            assert!((h.get(i, 3 - i) - 1.0).abs() < 1e-10);
        }
        assert!(basis_overlap_heatmap(&a, &DenseMatrix::zeros(19, 4)).is_err());
    }

    #[test]
    fn rejects_bad_arguments() {
        let op = identity_op(3);
        assert!(lanczos_low_memory(&op, 0, 1, |_| {}).is_err());
        assert!(lanczos_hi_memory(&op, 4, 1).is_err());
        let res = lanczos_hi_memory(&op, 1, 1).unwrap();
        assert!(extract_eigenpairs(&res, 0.0).is_err());
        assert!(extract_eigenpairs(&res, 1.5).is_err());
    }
    #[test]
    fn range_start_spans_low_rank_operator() {
        let mut d = alloc::vec![0.0; 50];
        for (i, x) in d.iter_mut().take(6).enumerate() {
            *x = libm::pow(0.5, i as f64);
        }
        let op = DiagonalOperator(d);
        let res = lanczos_hi_memory_from(&op, 6, 4, StartVector::Range).unwrap();
        let v = res.basis.as_ref().unwrap();
        let tail: f64 = v.columns().map(|c| c[6..].iter().map(|x| x * x).sum::<f64>()).sum();
        assert!(tail < 1e-20, "{tail}");
        let random = lanczos_hi_memory(&op, 6, 4).unwrap();
        let tail: f64 = random.basis.unwrap().columns().map(|c| c[6..].iter().map(|x| x * x).sum::<f64>()).sum();
        assert!(tail > 1e-3);
        assert!(lanczos_hi_memory_from(&DiagonalOperator(alloc::vec![0.0; 4]), 2, 1, StartVector::Range).is_err());
    }
}
