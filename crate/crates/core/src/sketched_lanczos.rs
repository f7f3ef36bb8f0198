//! Sketched Lanczos: low-memory Lanczos whose iterates are sketched as they
//! are produced, followed by orthonormalization of the sketched basis.
//!
//! Never more than three length-`p` Lanczos vectors (plus one transform
//! scratch buffer) are alive at once; the persistent state is the `s x k`
//! sketched basis `U_S` and the seed-determined sketch.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lanczos::{extract_eigenpairs, lanczos_hi_memory_from, lanczos_low_memory_from, StartVector};
use crate::linalg::{self, dot, DenseMatrix, FnOperator, LinearOperator};
use crate::sketch::SketchOperator;

/// Exactly computed top eigenspace used to deflate the operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Preconditioner {
    /// `p x k0`, column-orthonormal.
    pub basis: DenseMatrix,
    pub eigenvalues: Vec<f64>,
}

impl Preconditioner {
    pub fn k0(&self) -> usize {
        self.basis.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SketchedBasis {
    u_s: DenseMatrix,
    sketch: SketchOperator,
    seed: u64,
    requested: usize,
    breakdown: Option<usize>,
    eigenvalues: Option<Vec<f64>>,
    preconditioner: Option<Preconditioner>,
    concat_defect: Option<f64>,
}

/// Tolerance on `‖U_SᵀU_S − I‖_max` accepted when loading persisted bases.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

impl SketchedBasis {
    /// Reassembles a basis from stored parts, re-validating its invariants.
    pub fn from_parts(
        u_s: DenseMatrix,
        sketch: SketchOperator,
        seed: u64,
        eigenvalues: Option<Vec<f64>>,
        preconditioner: Option<Preconditioner>,
    ) -> Result<Self> {
        Error::check_len(sketch.output_dim(), u_s.rows())?;
        if u_s.orthogonality_defect() > ORTHONORMAL_TOL {
            return Err(Error::InvalidArgument("sketched basis is not column-orthonormal".into()));
        }
        if let Some(pc) = &preconditioner {
            Error::check_len(sketch.p(), pc.basis.rows())?;
            Error::check_len(pc.basis.cols(), pc.eigenvalues.len())?;
            if pc.basis.orthogonality_defect() > ORTHONORMAL_TOL {
                return Err(Error::InvalidArgument("preconditioner basis is not orthonormal".into()));
            }
        }
        Ok(Self {
            requested: u_s.cols(),
            u_s,
            sketch,
            seed,
            breakdown: None,
            eigenvalues,
            preconditioner,
            concat_defect: None,
        })
    }

    /// Restores the run diagnostics of a persisted basis.
    pub fn with_run_info(mut self, requested: usize, breakdown: Option<usize>, concat_defect: Option<f64>) -> Self {
        self.requested = requested;
        self.breakdown = breakdown;
        self.concat_defect = concat_defect;
        self
    }

    /// The `s x k` orthonormal sketched basis.
    pub fn u_s(&self) -> &DenseMatrix {
        &self.u_s
    }

    pub fn sketch(&self) -> &SketchOperator {
        &self.sketch
    }

    pub fn k(&self) -> usize {
        self.u_s.cols()
    }

    pub fn requested(&self) -> usize {
        self.requested
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn breakdown(&self) -> Option<usize> {
        self.breakdown
    }

    pub fn eigenvalues(&self) -> Option<&[f64]> {
        self.eigenvalues.as_deref()
    }

    pub fn preconditioner(&self) -> Option<&Preconditioner> {
        self.preconditioner.as_ref()
    }

    /// Orthogonality defect of `[S U_0 | U_S']` before re-orthonormalization.
    pub fn concat_defect(&self) -> Option<f64> {
        self.concat_defect
    }

    pub fn drop_eigenvalues(mut self) -> Self {
        self.eigenvalues = None;
        self
    }

    /// `‖U_Sᵀ y‖²` for an already sketched vector `y`.
    pub fn projected_norm_sq(&self, sketched: &[f64]) -> f64 {
        self.u_s
            .columns()
            .map(|c| {
                let d = dot(c, sketched);
                d * d
            })
            .sum()
    }

    /// `‖U_Sᵀ (S v)‖₂` for a raw vector `v ∈ R^p`.
    pub fn projected_norm(&self, v: &[f64]) -> Result<f64> {
        let sv = self.sketch.apply(v)?;
        Ok(libm::sqrt(self.projected_norm_sq(&sv)))
    }
}

/// Runs `k` steps of low-memory Lanczos, sketching each iterate on the fly,
/// then orthonormalizes the sketched columns.
///
/// Retains the Ritz values of the tridiagonal matrix; call
/// [`SketchedBasis::drop_eigenvalues`] to discard them.
pub fn sketched_lanczos<O: LinearOperator + ?Sized>(
    op: &O,
    k: usize,
    sketch: SketchOperator,
    seed: u64,
) -> Result<SketchedBasis> {
    sketched_lanczos_from(op, k, sketch, seed, StartVector::Random)
}

pub fn sketched_lanczos_from<O: LinearOperator + ?Sized>(
    op: &O,
    k: usize,
    sketch: SketchOperator,
    seed: u64,
    start: StartVector,
) -> Result<SketchedBasis> {
    Error::check_len(op.dim(), sketch.p())?;
    let mut store = DenseMatrix::with_column_capacity(sketch.output_dim(), k);
    let mut scratch = alloc::vec![0.0; sketch.scratch_len()];
    let res = lanczos_low_memory_from(op, k, seed, start, |v| {
        let col = store.push_zero_column();
        sketch.apply_into(v, &mut scratch, col);
    })?;
    drop(scratch);
    let (u_s, _) = linalg::qr_orthonormalize(store)?;
    let eigenvalues = linalg::tridiag_eig(&res.tridiagonal)?.eigenvalues;
    if res.breakdown.is_some() {
        log::debug!("sketched Lanczos stopped at {} of {k} iterations", res.k_effective);
    }
    Ok(SketchedBasis {
        u_s,
        sketch,
        seed,
        requested: k,
        breakdown: res.breakdown,
        eigenvalues: Some(eigenvalues),
        preconditioner: None,
        concat_defect: None,
    })
}

/// Operator `v ↦ G v − U_0 Λ_0 U_0ᵀ v`.
pub fn deflated<'a, O: LinearOperator + ?Sized>(
    op: &'a O,
    pc: &'a Preconditioner,
) -> FnOperator<impl Fn(&[f64], &mut [f64]) + 'a> {
    FnOperator::new(op.dim(), move |x: &[f64], y: &mut [f64]| {
        op.apply(x, y);
        for (u, &l) in pc.basis.columns().zip(&pc.eigenvalues) {
            linalg::axpy(-l * dot(u, x), u, y);
        }
    })
}

/// Preconditioned variant: `k0` hi-memory iterations give an exact top
/// eigenspace `(U_0, Λ_0)`, the operator is deflated by it, and `k1`
/// sketched iterations run on the remainder. The returned basis spans
/// `[S U_0 | U_S']`, re-orthonormalized.
pub fn preconditioned_sketched_lanczos<O: LinearOperator + ?Sized>(
    op: &O,
    k0: usize,
    k1: usize,
    sketch: SketchOperator,
    seed: u64,
) -> Result<SketchedBasis> {
    preconditioned_sketched_lanczos_from(op, k0, k1, sketch, seed, StartVector::Random)
}

/// Seed of the sketched phase, distinct from the hi-memory phase.
pub fn deflated_phase_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Preconditioned variant with a chosen start for the hi-memory phase; the
/// sketched phase always starts from a random direction.
pub fn preconditioned_sketched_lanczos_from<O: LinearOperator + ?Sized>(
    op: &O,
    k0: usize,
    k1: usize,
    sketch: SketchOperator,
    seed: u64,
    start: StartVector,
) -> Result<SketchedBasis> {
    if k0 == 0 || k1 == 0 {
        return Err(Error::InvalidArgument(format!("k0 = {k0} and k1 = {k1} must both be >= 1")));
    }
    Error::check_len(op.dim(), sketch.p())?;
    let hi = lanczos_hi_memory_from(op, k0, seed, start)?;
    let spec = extract_eigenpairs(&hi, 1.0)?;
    drop(hi);
    let pc = Preconditioner { basis: spec.eigenvectors, eigenvalues: spec.eigenvalues };

    let inner = sketched_lanczos(&deflated(op, &pc), k1, sketch, deflated_phase_seed(seed))?;
    let su0 = inner.sketch.apply_columns(&pc.basis)?;
    let concat = su0.hcat(&inner.u_s)?;
    let defect = concat.orthogonality_defect();
    let (u_s, _) = linalg::qr_orthonormalize(concat)?;

    let mut eigenvalues = pc.eigenvalues.clone();
    eigenvalues.extend_from_slice(inner.eigenvalues.as_deref().unwrap_or(&[]));
    Ok(SketchedBasis {
        u_s,
        sketch: inner.sketch,
        seed,
        requested: k0 + k1,
        breakdown: inner.breakdown,
        eigenvalues: Some(eigenvalues),
        preconditioner: Some(pc),
        concat_defect: Some(defect),
    })
}
