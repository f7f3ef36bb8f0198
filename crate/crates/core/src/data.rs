//! Datasets and synthetic generators.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, dot, DenseMatrix, LinearOperator};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    None,
    Classes(Vec<usize>),
    /// `t x n`, one regression target per column.
    Values(DenseMatrix),
}

/// Inputs stored as the columns of a `d x n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    inputs: DenseMatrix,
    targets: Targets,
    pub seed: u64,
}

impl Dataset {
    pub fn new(name: impl Into<String>, inputs: DenseMatrix, targets: Targets, seed: u64) -> Result<Self> {
        let n = inputs.cols();
        match &targets {
            Targets::None => {}
            Targets::Classes(c) => Error::check_len(n, c.len())?,
            Targets::Values(v) => Error::check_len(n, v.cols())?,
        }
        Ok(Self { name: name.into(), inputs, targets, seed })
    }

    pub fn len(&self) -> usize {
        self.inputs.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.rows()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        self.inputs.col(i)
    }

    pub fn inputs(&self) -> &DenseMatrix {
        &self.inputs
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn class(&self, i: usize) -> Option<usize> {
        match &self.targets {
            Targets::Classes(c) => Some(c[i]),
            _ => None,
        }
    }

    /// Rows selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize], name: impl Into<String>) -> Result<Self> {
        let mut inputs = DenseMatrix::with_column_capacity(self.dim(), indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!("index {i} out of range")));
            }
            inputs.push_column(self.input(i))?;
        }
        let targets = match &self.targets {
            Targets::None => Targets::None,
            Targets::Classes(c) => Targets::Classes(indices.iter().map(|&i| c[i]).collect()),
            Targets::Values(v) => {
                let mut out = DenseMatrix::with_column_capacity(v.rows(), indices.len());
                for &i in indices {
                    out.push_column(v.col(i))?;
                }
                Targets::Values(out)
            }
        };
        Self::new(name, inputs, targets, self.seed)
    }

    /// Seeded subsample of `m` distinct points (all points when `m >= n`).
    /// Returns the subset and the sorted indices used.
    pub fn subsample(&self, m: usize, seed: u64) -> Result<(Self, Vec<usize>)> {
        let n = self.len();
        if m >= n {
            return Ok((self.clone(), (0..n).collect()));
        }
        let mut g = rng::stream(seed, rng::streams::SUBSAMPLE);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in 0..m {
            let j = g.random_range(i as u64..n as u64) as usize;
            perm.swap(i, j);
        }
        perm.truncate(m);
        perm.sort_unstable();
        let name = format!("{}[sub{m}]", self.name);
        Ok((self.select(&perm, name)?, perm))
    }
}

/// Artificial Fisher matrix `M = Σ λ_i v_i v_iᵀ` with orthonormal `v_i`,
/// applied without materializing `M`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticFisher {
    v: DenseMatrix,
    lambdas: Vec<f64>,
    pub seed: u64,
}

impl SyntheticFisher {
    /// `λ_i = decay^(i-1)`; `v` is the QR factor of a `p x rank` Gaussian draw.
    pub fn new(p: usize, rank: usize, decay: f64, seed: u64) -> Result<Self> {
        if rank == 0 || rank > p {
            return Err(Error::InvalidDimensions(format!("rank {rank} must lie in 1..={p}")));
        }
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::InvalidArgument(format!("decay {decay} must lie in (0, 1)")));
        }
        let mut g = rng::stream(seed, rng::streams::DATA);
        let v = rng::orthonormal(&mut g, p, rank);
        let lambdas = (0..rank).map(|i| libm::pow(decay, i as f64)).collect();
        Ok(Self { v, lambdas, seed })
    }

    pub fn p(&self) -> usize {
        self.v.rows()
    }

    pub fn rank(&self) -> usize {
        self.v.cols()
    }

    pub fn basis(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// `‖Vᵀx‖₂`, the exact projection norm onto the range of `M`.
    pub fn projection_norm(&self, x: &[f64]) -> f64 {
        libm::sqrt(
            self.v
                .columns()
                .map(|c| {
                    let d = dot(c, x);
                    d * d
                })
                .sum(),
        )
    }

    /// Dense `p x p` assembly (tests and small instances only).
    pub fn to_dense(&self) -> DenseMatrix {
        let mut scaled = self.v.clone();
        scaled.scale_columns(&self.lambdas);
        scaled.matmul(&self.v.transpose()).expect("shapes agree")
    }
}

impl LinearOperator for SyntheticFisher {
    fn dim(&self) -> usize {
        self.p()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (c, &l) in self.v.columns().zip(&self.lambdas) {
            linalg::axpy(l * dot(c, x), c, y);
        }
    }
}

/// Random unit vectors whose component inside `span(V)` and whose
/// orthogonal component both have norm `1/√2`, each in a uniformly random
/// direction.
pub fn synthetic_test_jacobians(sf: &SyntheticFisher, m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one test vector".into()));
    }
    let (p, r) = (sf.p(), sf.rank());
    if r == p {
        return Err(Error::InvalidDimensions("span(V) has no orthogonal complement".into()));
    }
    let half = core::f64::consts::FRAC_1_SQRT_2;
    let mut g = rng::stream(seed, rng::streams::EXPERIMENT);
    let mut out = Vec::with_capacity(m);
    let mut coeff = alloc::vec![0.0; r];
    for _ in 0..m {
        rng::fill_unit_sphere(&mut g, &mut coeff);
        let mut inside = sf.v.matvec(&coeff)?;
        let n = linalg::norm2(&inside);
        linalg::scale(&mut inside, half / n);

        let outside = loop {
            let mut w = alloc::vec![0.0; p];
            rng::fill_gaussian(&mut g, &mut w);
            linalg::mgs2_against(&sf.v, &mut w);
            let n = linalg::norm2(&w);
            if n > 1e-8 {
                linalg::scale(&mut w, half / n);
                break w;
            }
        };
        out.push(inside.iter().zip(&outside).map(|(a, b)| a + b).collect());
    }
    Ok(out)
}

/// Offset of the two in-distribution class means along the first axis.
pub const TWO_GAUSSIAN_SEPARATION: f64 = 2.5;

/// In-distribution train/test splits and an out-of-distribution test split.
#[derive(Clone, Debug, PartialEq)]
pub struct OodTask {
    pub id_train: Dataset,
    pub id_test: Dataset,
    pub ood_test: Dataset,
}

/// Two-class Gaussian blobs with means `±2.5 e_0` and unit covariance.
/// The OoD split draws from the same mixture and displaces it by `shift`
/// along the last axis, which the class means do not use; `shift = 0`
/// therefore reproduces the ID distribution.
///
/// `n` training points; each test split has `max(n / 4, 5)` points.
pub fn two_gaussian_task(d: usize, n: usize, shift: f64, seed: u64) -> Result<OodTask> {
    if d < 2 || n < 10 {
        return Err(Error::InvalidArgument(format!("need d >= 2 and n >= 10 (got d = {d}, n = {n})")));
    }
    let n_test = (n / 4).max(5);
    let mut g = rng::stream(seed, rng::streams::DATA);
    let mut draw = |count: usize, shift: f64| -> (DenseMatrix, Vec<usize>) {
        let mut x = DenseMatrix::zeros(d, count);
        let mut labels = Vec::with_capacity(count);
        for j in 0..count {
            let class = j % 2;
            let col = x.col_mut(j);
            rng::fill_gaussian(&mut g, col);
            col[0] += if class == 0 { TWO_GAUSSIAN_SEPARATION } else { -TWO_GAUSSIAN_SEPARATION };
            col[d - 1] += shift;
            labels.push(class);
        }
        (x, labels)
    };
    let (xtr, ytr) = draw(n, 0.0);
    let (xte, yte) = draw(n_test, 0.0);
    let (xood, yood) = draw(n_test, shift);
    Ok(OodTask {
        id_train: Dataset::new("two-gaussian/train", xtr, Targets::Classes(ytr), seed)?,
        id_test: Dataset::new("two-gaussian/id-test", xte, Targets::Classes(yte), seed)?,
        ood_test: Dataset::new("two-gaussian/ood-test", xood, Targets::Classes(yood), seed)?,
    })
}

/// Rotates every `side x side` image counter-clockwise about its center by
/// `degrees`, sampling bilinearly with zero fill. A pixel at `(r, c)` moves
/// to `(side-1-c, r)` under a 90° rotation.
pub fn rotate_images(ds: &Dataset, degrees: f64, side: usize) -> Result<Dataset> {
    Error::check_len(side * side, ds.dim())?;
    let name = format!("{}[rot{degrees}]", ds.name);
    if degrees == 0.0 {
        let mut out = ds.clone();
        out.name = name;
        return Ok(out);
    }
    let (sin, cos) = libm::sincos(degrees * (core::f64::consts::PI / 180.0));
    let center = (side as f64 - 1.0) / 2.0;
    let mut inputs = DenseMatrix::zeros(ds.dim(), ds.len());
    for n in 0..ds.len() {
        let src = ds.input(n);
        let dst = inputs.col_mut(n);
        for r in 0..side {
            for c in 0..side {
                let (y1, x1) = (r as f64 - center, c as f64 - center);
                let xs = x1 * cos - y1 * sin + center;
                let ys = x1 * sin + y1 * cos + center;
                dst[r * side + c] = bilinear(src, side, ys, xs);
            }
        }
    }
    Dataset::new(name, inputs, ds.targets.clone(), ds.seed)
}

fn bilinear(img: &[f64], side: usize, y: f64, x: f64) -> f64 {
    let y0 = libm::floor(y);
    let x0 = libm::floor(x);
    let (fy, fx) = (y - y0, x - x0);
    let pixel = |yy: f64, xx: f64| -> f64 {
        if yy < 0.0 || xx < 0.0 || yy >= side as f64 || xx >= side as f64 {
            0.0
        } else {
            img[yy as usize * side + xx as usize]
        }
    };
    let mut acc = 0.0;
    for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
        for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
            let w = wy * wx;
            if w != 0.0 {
                acc += w * pixel(y0 + dy, x0 + dx);
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lanczos;
    use crate::linalg::norm2;
    use crate::testutil::assemble;

    #[test]
    fn fisher_eigenvectors_and_null_space() {
        let sf = SyntheticFisher::new(300, 12, 0.9, 1).unwrap();
        assert!(sf.basis().orthogonality_defect() <= 1e-10);
        let v1 = sf.basis().col(0).to_vec();
        let mv = sf.apply_vec(&v1);
        for (a, b) in mv.iter().zip(&v1) {
            assert!((a - sf.lambdas()[0] * b).abs() < 1e-10);
        }
        let mut x = alloc::vec![0.0; 300];
        rng::fill_gaussian(&mut rng::stream(2, 0), &mut x);
        linalg::mgs2_against(sf.basis(), &mut x);
        assert!(norm2(&sf.apply_vec(&x)) < 1e-10);
    }

    #[test]
    fn fisher_matvec_matches_dense_assembly() {
        let sf = SyntheticFisher::new(120, 30, 0.9, 3).unwrap();
        let dense = sf.to_dense();
        let assembled = assemble(&sf);
        for (a, b) in dense.data().iter().zip(assembled.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn fisher_rejects_bad_parameters() {
        assert!(SyntheticFisher::new(10, 11, 0.9, 0).is_err());
        assert!(SyntheticFisher::new(10, 0, 0.9, 0).is_err());
        assert!(SyntheticFisher::new(10, 3, 1.0, 0).is_err());
    }

    #[test]
    fn test_jacobians_split_evenly() {
        let sf = SyntheticFisher::new(500, 20, 0.9, 4).unwrap();
        let js = synthetic_test_jacobians(&sf, 10, 5).unwrap();
        for j in &js {
            assert!((norm2(j) - 1.0).abs() < 1e-12);
            assert!((sf.projection_norm(j) - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
            let score = norm2(j).powi(2) - sf.projection_norm(j).powi(2);
            assert!((score - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn lanczos_recovers_fisher_spectrum() {
        let sf = SyntheticFisher::new(2000, 40, 0.9, 6).unwrap();
        let res = lanczos::lanczos_hi_memory(&sf, 40, 1).unwrap();
        let spec = lanczos::extract_eigenpairs(&res, 1.0).unwrap();
        for i in 0..10 {
            let rel = (spec.eigenvalues[i] - sf.lambdas()[i]).abs() / sf.lambdas()[i];
            assert!(rel < 1e-8, "{i}: {rel}");
        }
    }

    #[test]
    fn two_gaussian_is_deterministic_and_shaped() {
        let a = two_gaussian_task(8, 100, 6.0, 3).unwrap();
        let b = two_gaussian_task(8, 100, 6.0, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.id_train.len(), 100);
        assert_eq!(a.id_test.len(), 25);
        assert_eq!(a.ood_test.dim(), 8);
        let mean_last: f64 =
            (0..a.ood_test.len()).map(|i| a.ood_test.input(i)[7]).sum::<f64>() / a.ood_test.len() as f64;
        assert!((mean_last - 6.0).abs() < 0.6);
        assert!(two_gaussian_task(1, 100, 0.0, 0).is_err());
        assert!(two_gaussian_task(4, 9, 0.0, 0).is_err());
    }

    #[test]
    fn large_shift_separates_on_last_axis() {
        let t = two_gaussian_task(8, 400, 10.0, 1).unwrap();
        let id_max = (0..t.id_test.len()).map(|i| t.id_test.input(i)[7]).fold(f64::MIN, f64::max);
        let ood_min = (0..t.ood_test.len()).map(|i| t.ood_test.input(i)[7]).fold(f64::MAX, f64::min);
        assert!(id_max < ood_min);
    }

    fn one_hot(side: usize, r: usize, c: usize) -> Dataset {
        let mut x = DenseMatrix::zeros(side * side, 1);
        x.set(r * side + c, 0, 1.0);
        Dataset::new("img", x, Targets::None, 0).unwrap()
    }

    #[test]
    fn zero_rotation_is_identity() {
        let mut x = DenseMatrix::zeros(16, 3);
        rng::fill_gaussian(&mut rng::stream(1, 0), x.data_mut());
        let ds = Dataset::new("img", x, Targets::None, 0).unwrap();
        let r = rotate_images(&ds, 0.0, 4).unwrap();
        assert_eq!(r.inputs(), ds.inputs());
        assert!(rotate_images(&ds, 10.0, 5).is_err());
    }

    #[test]
    fn quarter_turn_moves_pixel() {
        let side = 7;
        let (r, c) = (1, 5);
        let out = rotate_images(&one_hot(side, r, c), 90.0, side).unwrap();
        let target = out.input(0)[(side - 1 - c) * side + r];
        assert!(target > 0.99, "{target}");
        let total: f64 = out.input(0).iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rotations_compose_approximately() {
        let side = 16;
        let mut x = DenseMatrix::zeros(side * side, 4);
        for n in 0..4 {
            for r in 0..side {
                for c in 0..side {
                    let (dy, dx) = (r as f64 - 7.5, c as f64 - 7.5 - n as f64);
                    x.set(r * side + c, n, libm::exp(-(dy * dy + dx * dx) / 18.0));
                }
            }
        }
        let ds = Dataset::new("blobs", x, Targets::None, 0).unwrap();
        let twice = rotate_images(&rotate_images(&ds, 30.0, side).unwrap(), 30.0, side).unwrap();
        let once = rotate_images(&ds, 60.0, side).unwrap();
        let mad: f64 = twice.inputs().data().iter().zip(once.inputs().data()).map(|(a, b)| (a - b).abs()).sum::<f64>()
            / (side * side * 4) as f64;
        assert!(mad <= 0.05, "{mad}");
    }

    #[test]
    fn subsample_is_seeded() {
        let t = two_gaussian_task(3, 50, 0.0, 2).unwrap();
        let (a, ia) = t.id_train.subsample(10, 4).unwrap();
        let (_, ib) = t.id_train.subsample(10, 4).unwrap();
        assert_eq!(ia, ib);
        assert_eq!(a.len(), 10);
        assert_eq!(a.class(0), t.id_train.class(ia[0]));
    }
}
