//! Run configuration: built-in defaults, overridden by a TOML file, overridden
//! by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use slu_core::eval::Probe;
use slu_core::model::{Activation, LossKind};
use slu_core::score::ScoreMethod;
use slu_core::sketch::Transform;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Where train, precompute and score write their JSON reports.
    pub reports_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub precompute: PrecomputeConfig,
    pub score: ScoreConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            reports_dir: "out/reports".into(),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            precompute: PrecomputeConfig::default(),
            score: ScoreConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    TwoGaussian,
    Idx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Two-gaussian input dimension.
    pub dim: usize,
    /// Two-gaussian training points.
    pub n: usize,
    /// Two-gaussian OoD displacement.
    pub shift: f64,
    pub seed: u64,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub ood_images: Option<PathBuf>,
    pub ood_labels: Option<PathBuf>,
    /// Without `ood_images`, the OoD split is the test split rotated by this
    /// many degrees.
    pub ood_rotate_degrees: Option<f64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::TwoGaussian,
            dim: 8,
            n: 2000,
            shift: 6.0,
            seed: 0,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            ood_images: None,
            ood_labels: None,
            ood_rotate_degrees: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ActivationName {
    #[default]
    Tanh,
    Relu,
}

impl From<ActivationName> for Activation {
    fn from(a: ActivationName) -> Self {
        match a {
            ActivationName::Tanh => Activation::Tanh,
            ActivationName::Relu => Activation::Relu,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum LossName {
    Mse,
    #[default]
    CrossEntropy,
}

impl From<LossName> for LossKind {
    fn from(l: LossName) -> Self {
        match l {
            LossName::Mse => LossKind::Mse,
            LossName::CrossEntropy => LossKind::CrossEntropy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: ActivationName,
    pub loss: LossName,
    pub seed: u64,
    /// Output width; defaults to the number of classes in the training data.
    pub classes: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            activation: ActivationName::Tanh,
            loss: LossName::CrossEntropy,
            seed: 0,
            classes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 0.1,
            batch_size: 32,
            seed: 0,
            checkpoint: "out/model.mlpc".into(),
            log: "out/train_log.csv".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum TransformName {
    #[default]
    Hadamard,
    Fourier,
}

impl From<TransformName> for Transform {
    fn from(t: TransformName) -> Self {
        match t {
            TransformName::Hadamard => Transform::Hadamard,
            TransformName::Fourier => Transform::Fourier,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecomputeConfig {
    /// Hi-memory iterations (`lanczos_hm_iter`); 0 runs plain Sketched Lanczos.
    pub k0: usize,
    /// Sketched low-memory iterations (`lanczos_lm_iter`).
    pub k1: usize,
    /// Sketch size (`sketch_size`).
    pub s: usize,
    pub seed: u64,
    pub sketch_seed: u64,
    pub transform: TransformName,
    /// Build the GGN from this many training points instead of all of them.
    pub ggn_subsample: Option<usize>,
    pub keep_eigenvalues: bool,
    pub checkpoint: PathBuf,
    pub basis: PathBuf,
}

impl Default for PrecomputeConfig {
    fn default() -> Self {
        Self {
            k0: 0,
            k1: 20,
            s: 512,
            seed: 0,
            sketch_seed: 0,
            transform: TransformName::Hadamard,
            ggn_subsample: None,
            keep_eigenvalues: true,
            checkpoint: "out/model.mlpc".into(),
            basis: "out/basis.sklb".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum MethodName {
    #[default]
    Slu,
    LeExact,
    Lla,
    DiagLaplace,
}

impl From<MethodName> for ScoreMethod {
    fn from(m: MethodName) -> Self {
        match m {
            MethodName::Slu => ScoreMethod::Slu,
            MethodName::LeExact => ScoreMethod::LeExact,
            MethodName::Lla => ScoreMethod::Lla,
            MethodName::DiagLaplace => ScoreMethod::DiagLaplace,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub method: MethodName,
    /// Prior precision for `lla` and `diag_laplace`.
    pub alpha: f64,
    /// Score at most this many points per split.
    pub limit: Option<usize>,
    pub checkpoint: PathBuf,
    pub basis: PathBuf,
    pub output: PathBuf,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            method: MethodName::Slu,
            alpha: 1.0,
            limit: None,
            checkpoint: "out/model.mlpc".into(),
            basis: "out/basis.sklb".into(),
            output: "out/scores.csv".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ProbeName {
    #[default]
    Random,
    Aligned,
}

impl From<ProbeName> for Probe {
    fn from(p: ProbeName) -> Self {
        match p {
            ProbeName::Random => Probe::Random,
            ProbeName::Aligned => Probe::Aligned,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaBench {
    pub p: usize,
    pub k: usize,
    pub s: usize,
    pub trials: usize,
    pub seed: u64,
    pub probe: ProbeName,
    pub transform: TransformName,
}

impl Default for LemmaBench {
    fn default() -> Self {
        Self {
            p: 4096,
            k: 16,
            s: 1024,
            trials: 500,
            seed: 0,
            probe: ProbeName::Random,
            transform: TransformName::Hadamard,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationBench {
    pub p: usize,
    pub rank: usize,
    pub decay: f64,
    pub fisher_seed: u64,
    pub k_grid: Vec<usize>,
    pub s_grid: Vec<usize>,
    pub m_queries: usize,
    pub seed: u64,
}

impl Default for AblationBench {
    fn default() -> Self {
        let d = slu_core::eval::AblationConfig::default();
        Self {
            p: 10_000,
            rank: 100,
            decay: 0.9,
            fisher_seed: 0,
            k_grid: d.k_grid,
            s_grid: d.s_grid,
            m_queries: d.m_queries,
            seed: d.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum BenchOperator {
    /// `SyntheticFisher` built from the `p`, `rank` and `decay` fields.
    #[default]
    Synthetic,
    /// GGN of the model in `checkpoint` on the configured training data.
    Ggn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectorBench {
    pub operator: BenchOperator,
    pub p: usize,
    pub rank: usize,
    pub decay: f64,
    pub checkpoint: PathBuf,
    pub k: usize,
    pub top_pc: usize,
    /// Each seed drives both the synthetic operator and Lanczos.
    pub seeds: Vec<u64>,
}

impl Default for ProjectorBench {
    fn default() -> Self {
        Self {
            operator: BenchOperator::Synthetic,
            p: 500,
            rank: 100,
            decay: 0.9,
            checkpoint: "out/model.mlpc".into(),
            k: 40,
            top_pc: 10,
            seeds: vec![0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumBench {
    pub operator: BenchOperator,
    pub p: usize,
    pub rank: usize,
    pub decay: f64,
    pub operator_seed: u64,
    pub checkpoint: PathBuf,
    pub k_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub rel_tol: f64,
}

impl Default for SpectrumBench {
    fn default() -> Self {
        Self {
            operator: BenchOperator::Synthetic,
            p: 500,
            rank: 100,
            decay: 0.9,
            operator_seed: 0,
            checkpoint: "out/model.mlpc".into(),
            k_grid: vec![20, 40],
            seeds: vec![0, 1, 2, 3, 4],
            rel_tol: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub out_dir: PathBuf,
    pub lemma: LemmaBench,
    pub ablation: AblationBench,
    pub projector: ProjectorBench,
    pub spectrum: SpectrumBench,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            out_dir: "out/bench".into(),
            lemma: LemmaBench::default(),
            ablation: AblationBench::default(),
            projector: ProjectorBench::default(),
            spectrum: SpectrumBench::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// A JSON config, or the `config` member of a report written by a
    /// previous run.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        if value.get("command").is_some() {
            value = value["config"].take();
        }
        serde_json::from_value(value).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Defaults overlaid with `path` when given. `.json` files are read as
    /// JSON, anything else as TOML.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let parsed = if p.extension().is_some_and(|e| e == "json") {
                    Self::from_json(&text)
                } else {
                    Self::from_toml(&text)
                };
                parsed.map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }
}

/// Sections a command depends on, as JSON. This is what reports embed and
/// what the output hash covers.
pub fn snapshot<T: Serialize>(sections: &T) -> serde_json::Value {
    serde_json::to_value(sections).expect("config is always representable as JSON")
}

/// First 16 hex digits of the SHA-256 of the compact JSON snapshot.
pub fn config_hash(snapshot: &serde_json::Value) -> String {
    let digest = Sha256::digest(snapshot.to_string().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
