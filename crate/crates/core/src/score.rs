//! Predictive-uncertainty scores built from the query Jacobian `J(x)`.
//!
//! Every score works on `Jᵀ` (`p x t`, obtained with `t` vjps) and has a
//! model-level wrapper. Higher means more uncertain.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, frobenius_norm_sq, DenseMatrix};
use crate::model::MlpModel;
use crate::sketched_lanczos::SketchedBasis;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    Slu,
    LeExact,
    Lla,
    DiagLaplace,
}

impl ScoreMethod {
    pub const ALL: [ScoreMethod; 4] =
        [ScoreMethod::Slu, ScoreMethod::LeExact, ScoreMethod::Lla, ScoreMethod::DiagLaplace];

    pub fn name(self) -> &'static str {
        match self {
            ScoreMethod::Slu => "slu",
            ScoreMethod::LeExact => "le_exact",
            ScoreMethod::Lla => "lla",
            ScoreMethod::DiagLaplace => "diag_laplace",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// A score and whether it was clamped at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreValue {
    pub score: f64,
    /// Value before clamping.
    pub raw: f64,
    pub clamped: bool,
}

impl ScoreValue {
    fn unclamped(score: f64) -> Self {
        Self { score, raw: score, clamped: false }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

fn projected_sq(basis: &DenseMatrix, jt: &DenseMatrix) -> Result<Vec<f64>> {
    Error::check_len(basis.rows(), jt.rows())?;
    Ok(basis
        .columns()
        .map(|u| {
            jt.columns()
                .map(|j| {
                    let d = dot(u, j);
                    d * d
                })
                .sum()
        })
        .collect())
}

/// `‖J‖_F² − ‖U_Sᵀ (S Jᵀ)‖_F²`, clamped at 0.
pub fn slu_score_jt(basis: &SketchedBasis, jt: &DenseMatrix) -> Result<ScoreValue> {
    let sketch = basis.sketch();
    Error::check_len(sketch.p(), jt.rows())?;
    let mut scratch = alloc::vec![0.0; sketch.scratch_len()];
    let mut sj = alloc::vec![0.0; sketch.output_dim()];
    let mut proj = 0.0;
    for col in jt.columns() {
        sketch.apply_into(col, &mut scratch, &mut sj);
        proj += basis.projected_norm_sq(&sj);
    }
    let raw = frobenius_norm_sq(jt) - proj;
    Ok(ScoreValue { score: raw.max(0.0), raw, clamped: raw < 0.0 })
}

/// `‖J‖_F² − ‖J U‖_F²` for column-orthonormal `U`.
pub fn exact_score_jt(basis: &DenseMatrix, jt: &DenseMatrix) -> Result<f64> {
    let proj: f64 = projected_sq(basis, jt)?.iter().sum();
    Ok(frobenius_norm_sq(jt) - proj)
}

/// `Tr(J M Jᵀ)` with `M = (1/α)(I − UUᵀ) + U diag(1/(λᵢ+α)) Uᵀ`.
pub fn lla_score_jt(basis: &DenseMatrix, eigenvalues: &[f64], alpha: f64, jt: &DenseMatrix) -> Result<f64> {
    check_alpha(alpha)?;
    Error::check_len(basis.cols(), eigenvalues.len())?;
    let proj = projected_sq(basis, jt)?;
    let correction: f64 = eigenvalues.iter().zip(&proj).map(|(&l, &q)| l / (alpha * (l + alpha)) * q).sum();
    Ok(frobenius_norm_sq(jt) / alpha - correction)
}

/// `Σⱼ ‖J[:, j]‖² / (G_jj + α)` given the GGN diagonal.
pub fn diag_laplace_score_jt(diagonal: &[f64], alpha: f64, jt: &DenseMatrix) -> Result<f64> {
    check_alpha(alpha)?;
    Error::check_len(diagonal.len(), jt.rows())?;
    let mut total = 0.0;
    for col in jt.columns() {
        total += col.iter().zip(diagonal).map(|(j, g)| j * j / (g + alpha)).sum::<f64>();
    }
    Ok(total)
}

pub fn slu_score(model: &MlpModel, basis: &SketchedBasis, x: &[f64]) -> Result<ScoreValue> {
    slu_score_jt(basis, &model.jacobian_t(x)?)
}

pub fn exact_score(model: &MlpModel, basis: &DenseMatrix, x: &[f64]) -> Result<f64> {
    exact_score_jt(basis, &model.jacobian_t(x)?)
}

pub fn lla_score(model: &MlpModel, basis: &DenseMatrix, eigenvalues: &[f64], alpha: f64, x: &[f64]) -> Result<f64> {
    check_alpha(alpha)?;
    lla_score_jt(basis, eigenvalues, alpha, &model.jacobian_t(x)?)
}

pub fn diag_laplace_score(model: &MlpModel, diagonal: &[f64], alpha: f64, x: &[f64]) -> Result<f64> {
    check_alpha(alpha)?;
    diag_laplace_score_jt(diagonal, alpha, &model.jacobian_t(x)?)
}

/// A method together with the precomputed state it needs.
#[derive(Clone, Debug, PartialEq)]
pub enum ScorePipeline {
    Slu(SketchedBasis),
    LeExact(DenseMatrix),
    Lla { basis: DenseMatrix, eigenvalues: Vec<f64>, alpha: f64 },
    DiagLaplace { diagonal: Vec<f64>, alpha: f64 },
}

impl ScorePipeline {
    pub fn lla(basis: DenseMatrix, eigenvalues: Vec<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Error::check_len(basis.cols(), eigenvalues.len())?;
        if let Some(l) = eigenvalues.iter().find(|&&l| l < 0.0) {
            return Err(Error::InvalidArgument(format!("eigenvalue {l} is negative")));
        }
        Ok(Self::Lla { basis, eigenvalues, alpha })
    }

    pub fn diag_laplace(diagonal: Vec<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self::DiagLaplace { diagonal, alpha })
    }

    pub fn method(&self) -> ScoreMethod {
        match self {
            ScorePipeline::Slu(_) => ScoreMethod::Slu,
            ScorePipeline::LeExact(_) => ScoreMethod::LeExact,
            ScorePipeline::Lla { .. } => ScoreMethod::Lla,
            ScorePipeline::DiagLaplace { .. } => ScoreMethod::DiagLaplace,
        }
    }

    pub fn p(&self) -> usize {
        match self {
            ScorePipeline::Slu(b) => b.sketch().p(),
            ScorePipeline::LeExact(u) | ScorePipeline::Lla { basis: u, .. } => u.rows(),
            ScorePipeline::DiagLaplace { diagonal, .. } => diagonal.len(),
        }
    }

    pub fn score_jt(&self, jt: &DenseMatrix) -> Result<ScoreValue> {
        match self {
            ScorePipeline::Slu(b) => slu_score_jt(b, jt),
            ScorePipeline::LeExact(u) => exact_score_jt(u, jt).map(ScoreValue::unclamped),
            ScorePipeline::Lla { basis, eigenvalues, alpha } => {
                lla_score_jt(basis, eigenvalues, *alpha, jt).map(ScoreValue::unclamped)
            }
            ScorePipeline::DiagLaplace { diagonal, alpha } => {
                diag_laplace_score_jt(diagonal, *alpha, jt).map(ScoreValue::unclamped)
            }
        }
    }

    pub fn score(&self, model: &MlpModel, x: &[f64]) -> Result<ScoreValue> {
        Error::check_len(self.p(), model.num_params())?;
        self.score_jt(&model.jacobian_t(x)?)
    }
}
