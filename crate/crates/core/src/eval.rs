//! AUROC, lemma verifiers, ablation surfaces, projector agreement, memory
//! accounting and experiment reports.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::data::{synthetic_test_jacobians, SyntheticFisher};
use crate::error::{Error, Result};
use crate::lanczos::{self, StartVector};
use crate::linalg::{self, dot, DenseMatrix, FnOperator, LinearOperator};
use crate::rng;
use crate::sketch::{SketchOperator, Transform};
use crate::sketched_lanczos::sketched_lanczos_from;

/// Assigns average ranks (1-based) with ties sharing the mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 averaged
        let r = (i + j + 2) as f64 / 2.0;
        for &t in &idx[i..=j] {
            ranks[t] = r;
        }
        i = j + 1;
    }
    ranks
}

fn reject_nan(xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| x.is_nan()) {
        Err(Error::InvalidArgument("scores contain NaN".into()))
    } else {
        Ok(())
    }
}

/// Probability that a random OoD score exceeds a random ID score, ties
/// counting one half (Mann–Whitney U by rank sums).
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    if id_scores.is_empty() {
        return Err(Error::EmptyInput("id_scores"));
    }
    if ood_scores.is_empty() {
        return Err(Error::EmptyInput("ood_scores"));
    }
    reject_nan(id_scores)?;
    reject_nan(ood_scores)?;
    let (n_id, n_ood) = (id_scores.len(), ood_scores.len());
    let mut all = Vec::with_capacity(n_id + n_ood);
    all.extend_from_slice(ood_scores);
    all.extend_from_slice(id_scores);
    let ranks = average_ranks(&all);
    let rank_sum: f64 = ranks[..n_ood].iter().sum();
    let u = rank_sum - (n_ood * (n_ood + 1)) as f64 / 2.0;
    Ok(u / (n_id as f64 * n_ood as f64))
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// Returns 0 when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    Error::check_len(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::InvalidArgument("spearman needs at least two points".into()));
    }
    reject_nan(x)?;
    reject_nan(y)?;
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / libm::sqrt(sxx * syy))
}

/// Linearly interpolated quantile of unsorted data, `q ∈ [0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("values"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile {q} outside [0, 1]")));
    }
    reject_nan(values)?;
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = q * (v.len() - 1) as f64;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

pub const REPORT_QUANTILES: [f64; 4] = [0.5, 0.9, 0.95, 0.99];

/// Scalar or list value stored in a report's configuration snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigValue {
    Bool(bool),
    Int(u64),
    Float(f64),
    Text(String),
    List(Vec<ConfigValue>),
}

impl From<bool> for ConfigValue {
    fn from(v: bool) -> Self {
        ConfigValue::Bool(v)
    }
}
impl From<u64> for ConfigValue {
    fn from(v: u64) -> Self {
        ConfigValue::Int(v)
    }
}
impl From<usize> for ConfigValue {
    fn from(v: usize) -> Self {
        ConfigValue::Int(v as u64)
    }
}
impl From<f64> for ConfigValue {
    fn from(v: f64) -> Self {
        ConfigValue::Float(v)
    }
}
impl From<&str> for ConfigValue {
    fn from(v: &str) -> Self {
        ConfigValue::Text(v.into())
    }
}
impl From<String> for ConfigValue {
    fn from(v: String) -> Self {
        ConfigValue::Text(v)
    }
}
impl<T: Into<ConfigValue>> From<Vec<T>> for ConfigValue {
    fn from(v: Vec<T>) -> Self {
        ConfigValue::List(v.into_iter().map(Into::into).collect())
    }
}

/// Labelled matrix of values, e.g. an error surface over a `k x s` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub row_header: String,
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    /// Row-major, `rows.len() x columns.len()`.
    pub values: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(row_header: impl Into<String>, rows: Vec<String>, columns: Vec<String>) -> Self {
        let values = alloc::vec![alloc::vec![f64::NAN; columns.len()]; rows.len()];
        Self { row_header: row_header.into(), rows, columns, values }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r][c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r][c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[c]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.row_header);
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (name, row) in self.rows.iter().zip(&self.values) {
            out.push_str(name);
            for v in row {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config: BTreeMap<String, ConfigValue>,
    pub metrics: BTreeMap<String, f64>,
    pub tables: BTreeMap<String, Table>,
    /// Wall-clock seconds per stage; not part of the reproducible output.
    pub timings: BTreeMap<String, f64>,
    /// Float counts per structure.
    pub memory: BTreeMap<String, u64>,
}

impl ExperimentReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    pub fn with_config(mut self, key: &str, value: impl Into<ConfigValue>) -> Self {
        self.config.insert(key.into(), value.into());
        self
    }

    pub fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    /// Fails on any non-finite metric.
    pub fn validate(&self) -> Result<()> {
        match self.metrics.iter().find(|(_, v)| !v.is_finite()) {
            Some((k, v)) => Err(Error::InvalidArgument(format!("metric {k} is not finite ({v})"))),
            None => Ok(()),
        }
    }

    fn record_quantiles(&mut self, prefix: &str, errors: &[f64]) -> Result<()> {
        for q in REPORT_QUANTILES {
            let key = format!("{prefix}q{:02}", libm::round(q * 100.0) as u32);
            self.metric(key, quantile(errors, q)?);
        }
        self.metric(format!("{prefix}mean"), errors.iter().sum::<f64>() / errors.len() as f64);
        self.metric(format!("{prefix}max"), errors.iter().copied().fold(0.0, f64::max));
        Ok(())
    }
}

/// Preprocessing and per-query float budgets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryAccount {
    pub preprocess: u64,
    pub query: u64,
}

/// `4p + s(k+1) + k0·p` for preprocessing and `p + s(k+1) + k0·p` per query.
pub fn memory_account(p: usize, s: usize, k: usize, k0: usize) -> MemoryAccount {
    let (p, s, k, k0) = (p as u64, s as u64, k as u64, k0 as u64);
    MemoryAccount { preprocess: 4 * p + s * (k + 1) + k0 * p, query: p + s * (k + 1) + k0 * p }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    /// Uniform unit vector.
    #[default]
    Random,
    /// The first basis column.
    Aligned,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaConfig {
    pub p: usize,
    pub k: usize,
    pub s: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub probe: Probe,
    #[serde(default)]
    pub transform: Transform,
}

impl LemmaConfig {
    pub fn new(p: usize, k: usize, s: usize, trials: usize, seed: u64) -> Self {
        Self { p, k, s, trials, seed, probe: Probe::Random, transform: Transform::Hadamard }
    }

    fn validate(&self) -> Result<()> {
        if self.p == 0 || self.k == 0 || self.s == 0 || self.trials == 0 {
            return Err(Error::InvalidArgument(format!("grid values must be positive: {self:?}")));
        }
        if self.k > self.p {
            return Err(Error::InvalidDimensions(format!("k = {} exceeds p = {}", self.k, self.p)));
        }
        Ok(())
    }

    fn report(&self, name: &str) -> ExperimentReport {
        ExperimentReport::new(name)
            .with_config("p", self.p)
            .with_config("k", self.k)
            .with_config("s", self.s)
            .with_config("trials", self.trials)
            .with_config("seed", self.seed)
            .with_config("probe", if self.probe == Probe::Random { "random" } else { "aligned" })
            .with_config("transform", self.transform.id())
            .with_config("prng", rng::PRNG_ID)
    }
}

fn probe_vector<R: rand::Rng>(g: &mut R, basis: &DenseMatrix, probe: Probe) -> Vec<f64> {
    match probe {
        Probe::Random => rng::unit_vector(g, basis.rows()),
        Probe::Aligned => basis.col(0).to_vec(),
    }
}

/// `|‖(SU)ᵀ(Sv)‖ − ‖Uᵀv‖|` per trial, with a fresh Haar `U`, probe `v` and
/// sketch seed every trial.
pub fn lemma1_errors(cfg: &LemmaConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut g = rng::stream(cfg.seed, rng::streams::EXPERIMENT);
    let mut errors = Vec::with_capacity(cfg.trials);
    for _ in 0..cfg.trials {
        let sketch = SketchOperator::with_transform(cfg.p, cfg.s, g.next_u64(), cfg.transform)?;
        let u = rng::orthonormal(&mut g, cfg.p, cfg.k);
        let v = probe_vector(&mut g, &u, cfg.probe);
        let su = sketch.apply_columns(&u)?;
        let sv = sketch.apply(&v)?;
        let sketched = linalg::norm2(&su.t_matvec(&sv)?);
        let exact = linalg::norm2(&u.t_matvec(&v)?);
        errors.push(libm::fabs(sketched - exact));
    }
    Ok(errors)
}

pub fn lemma1_check(cfg: &LemmaConfig) -> Result<ExperimentReport> {
    let errors = lemma1_errors(cfg)?;
    let mut report = cfg.report("lemma1");
    report.record_quantiles("error_", &errors)?;
    report.metric("sqrt_k_over_s", libm::sqrt(cfg.k as f64 / cfg.s as f64));
    Ok(report)
}

/// Per trial: low-memory Lanczos on `op` from a fresh seed, with `U` the
/// post-hoc QR of the Lanczos vectors and `U_S` the QR of their sketches
/// (both from the same run). Records `|‖U_Sᵀ(Sv)‖ − ‖Uᵀv‖|`.
pub fn lemma2_errors<O: LinearOperator + ?Sized>(op: &O, cfg: &LemmaConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    Error::check_len(cfg.p, op.dim())?;
    let mut g = rng::stream(cfg.seed, rng::streams::EXPERIMENT);
    let mut errors = Vec::with_capacity(cfg.trials);
    for _ in 0..cfg.trials {
        let sketch = SketchOperator::with_transform(cfg.p, cfg.s, g.next_u64(), cfg.transform)?;
        let lanczos_seed = g.next_u64();
        let mut v_store = DenseMatrix::with_column_capacity(cfg.p, cfg.k);
        let mut sv_store = DenseMatrix::with_column_capacity(sketch.output_dim(), cfg.k);
        let mut scratch = alloc::vec![0.0; sketch.scratch_len()];
        lanczos::lanczos_low_memory(op, cfg.k, lanczos_seed, |v| {
            v_store.push_zero_column().copy_from_slice(v);
            sketch.apply_into(v, &mut scratch, sv_store.push_zero_column());
        })?;
        let (u, _) = linalg::qr_orthonormalize(v_store)?;
        let (u_s, _) = linalg::qr_orthonormalize(sv_store)?;
        let v = probe_vector(&mut g, &u, cfg.probe);
        let sv = sketch.apply(&v)?;
        let sketched = linalg::norm2(&u_s.t_matvec(&sv)?);
        let exact = linalg::norm2(&u.t_matvec(&v)?);
        errors.push(libm::fabs(sketched - exact));
    }
    Ok(errors)
}

/// Rank of the synthetic operator used by [`lemma2_check`].
pub fn lemma2_rank(p: usize) -> usize {
    p.min(100)
}

pub fn lemma2_check(cfg: &LemmaConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let sf = SyntheticFisher::new(cfg.p, lemma2_rank(cfg.p), 0.9, cfg.seed)?;
    let errors = lemma2_errors(&sf, cfg)?;
    let mut report = cfg.report("lemma2").with_config("operator_rank", sf.rank()).with_config("operator_decay", 0.9);
    report.record_quantiles("error_", &errors)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub k_grid: Vec<usize>,
    /// Finite sketch sizes; the unsketched column is always added.
    pub s_grid: Vec<usize>,
    pub m_queries: usize,
    pub seed: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self { k_grid: alloc::vec![10, 20, 40, 80], s_grid: alloc::vec![256, 512, 1024, 2048], m_queries: 20, seed: 0 }
    }
}

/// Mean score errors over the `k x s` grid on synthetic test Jacobians.
///
/// All runs start streaming Lanczos inside the operator range with the same
/// seed, so every cell in a row sketches the same iterates `v_1..v_k`. For a
/// query `J`:
///
/// * `lowrank_error = |exact_k − exact_R|`, where `exact_k` projects onto
///   the orthonormalized unsketched iterates and `exact_R` onto the true
///   range;
/// * `sketch_error = |slu − exact_k|`;
/// * `error = lowrank_error + sketch_error` (the `inf` column has no
///   sketch error);
/// * `signed_error = slu − exact_R` and `absolute_error = |slu − exact_R|`.
///
/// Tables carry the mean of each quantity; metrics carry the Spearman
/// correlation of `error` along every row and column, and
/// `hi_memory_error_k{k}`, the mean `|exact_k − exact_R|` for a fully
/// reorthogonalized run.
pub fn ablation_surface(sf: &SyntheticFisher, cfg: &AblationConfig) -> Result<ExperimentReport> {
    if cfg.k_grid.is_empty() || cfg.s_grid.is_empty() || cfg.m_queries == 0 {
        return Err(Error::InvalidArgument("ablation grids and query count must be non-empty".into()));
    }
    let p = sf.p();
    let queries = synthetic_test_jacobians(sf, cfg.m_queries, cfg.seed)?;
    let truth: Vec<f64> = queries
        .iter()
        .map(|j| {
            let n = sf.projection_norm(j);
            dot(j, j) - n * n
        })
        .collect();

    let rows: Vec<String> = cfg.k_grid.iter().map(|k| k.to_string()).collect();
    let mut columns: Vec<String> = cfg.s_grid.iter().map(|s| s.to_string()).collect();
    columns.push("inf".into());
    let inf_col = cfg.s_grid.len();
    let mut error = Table::new("k", rows.clone(), columns.clone());
    let mut lowrank = error.clone();
    let mut sketch_err = error.clone();
    let mut signed = error.clone();
    let mut absolute = error.clone();
    let mut hi_errors = Vec::with_capacity(cfg.k_grid.len());
    let m = queries.len() as f64;

    for (r, &k) in cfg.k_grid.iter().enumerate() {
        let mut v = DenseMatrix::with_column_capacity(p, k);
        lanczos::lanczos_low_memory_from(sf, k.min(p), cfg.seed, StartVector::Range, |x| {
            v.push_zero_column().copy_from_slice(x)
        })?;
        let (u, _) = linalg::qr_orthonormalize(v)?;
        let exact_k: Vec<f64> = queries
            .iter()
            .map(|j| {
                dot(j, j) - {
                    let c = u.t_matvec(j).expect("length p");
                    dot(&c, &c)
                }
            })
            .collect();
        drop(u);
        let hi = lanczos::lanczos_hi_memory_from(sf, k.min(p), cfg.seed, StartVector::Range)?;
        let (u, _) = linalg::qr_orthonormalize(hi.basis.expect("hi-memory stores its basis"))?;
        let hi_err = queries
            .iter()
            .zip(&truth)
            .map(|(j, t)| {
                let c = u.t_matvec(j).expect("length p");
                libm::fabs(dot(j, j) - dot(&c, &c) - t)
            })
            .sum::<f64>()
            / m;
        drop(u);
        hi_errors.push((k, hi_err));
        let lr: f64 = exact_k.iter().zip(&truth).map(|(a, b)| libm::fabs(a - b)).sum::<f64>() / m;
        let sg_inf = exact_k.iter().zip(&truth).map(|(a, b)| a - b).sum::<f64>() / m;
        lowrank.set(r, inf_col, lr);
        error.set(r, inf_col, lr);
        sketch_err.set(r, inf_col, 0.0);
        signed.set(r, inf_col, sg_inf);
        absolute.set(r, inf_col, lr);

        for (c, &s) in cfg.s_grid.iter().enumerate() {
            let sketch = SketchOperator::new(p, s, cfg.seed ^ (s as u64).rotate_left(32))?;
            let basis = sketched_lanczos_from(sf, k, sketch, cfg.seed, StartVector::Range)?;
            let (mut se, mut sg, mut ae) = (0.0, 0.0, 0.0);
            for ((j, ek), t) in queries.iter().zip(&exact_k).zip(&truth) {
                let slu = dot(j, j) - libm::pow(basis.projected_norm(j)?, 2.0);
                se += libm::fabs(slu - ek);
                sg += slu - t;
                ae += libm::fabs(slu - t);
            }
            lowrank.set(r, c, lr);
            sketch_err.set(r, c, se / m);
            error.set(r, c, lr + se / m);
            signed.set(r, c, sg / m);
            absolute.set(r, c, ae / m);
        }
    }

    let mut report = ExperimentReport::new("ablation")
        .with_config("p", p)
        .with_config("rank", sf.rank())
        .with_config("fisher_seed", sf.seed)
        .with_config("k_grid", cfg.k_grid.clone())
        .with_config("s_grid", cfg.s_grid.clone())
        .with_config("m_queries", cfg.m_queries)
        .with_config("seed", cfg.seed)
        .with_config("start", "range")
        .with_config("prng", rng::PRNG_ID);
    let s_axis: Vec<f64> = cfg.s_grid.iter().map(|&s| s as f64).chain([f64::INFINITY]).collect();
    let k_axis: Vec<f64> = cfg.k_grid.iter().map(|&k| k as f64).collect();
    if s_axis.len() >= 2 {
        for (r, k) in cfg.k_grid.iter().enumerate() {
            report.metric(format!("spearman_row_k{k}"), spearman(&s_axis, &error.values[r])?);
        }
    }
    if k_axis.len() >= 2 {
        for (c, name) in columns.iter().enumerate() {
            report.metric(format!("spearman_col_s{name}"), spearman(&k_axis, &error.column(c))?);
        }
    }
    for (k, e) in hi_errors {
        report.metric(format!("hi_memory_error_k{k}"), e);
    }
    report.tables.insert("error".into(), error);
    report.tables.insert("lowrank_error".into(), lowrank);
    report.tables.insert("sketch_error".into(), sketch_err);
    report.tables.insert("signed_error".into(), signed);
    report.tables.insert("absolute_error".into(), absolute);
    Ok(report)
}

/// Orthonormal top-`n` left singular vectors of `a` (via its Gram matrix).
fn principal_components(a: &DenseMatrix, n: usize) -> Result<DenseMatrix> {
    let gram = a.t_matmul(a)?;
    let spec = linalg::symmetric_eig(&gram)?;
    let mut out = DenseMatrix::with_column_capacity(a.rows(), n);
    for i in 0..n.min(spec.len()) {
        let z = spec.eigenvectors.col(i);
        let col = a.matvec(z)?;
        out.push_column(&col)?;
    }
    Ok(linalg::qr_orthonormalize(out)?.0)
}

/// Unit-normalized Ritz vectors scaled by their Ritz values.
fn ritz_scaled(basis: &DenseMatrix, t: &linalg::TridiagonalMatrix) -> Result<DenseMatrix> {
    let spec = linalg::tridiag_eig(t)?;
    let mut r = basis.matmul(&spec.eigenvectors)?;
    let factors: Vec<f64> = r
        .columns()
        .zip(&spec.eigenvalues)
        .map(|(c, &l)| {
            let n = linalg::norm2(c);
            if n > 0.0 {
                l / n
            } else {
                0.0
            }
        })
        .collect();
    r.scale_columns(&factors);
    Ok(r)
}

/// Operator norm of `Π_L − Π_H`, the projectors onto the top `top_pc`
/// principal components of the eigenvalue-scaled Ritz vectors from
/// low-memory (`L`) and hi-memory (`H`) Lanczos with the same seed.
pub fn projector_agreement<O: LinearOperator + ?Sized>(op: &O, k: usize, top_pc: usize, seed: u64) -> Result<f64> {
    if top_pc == 0 || top_pc > k {
        return Err(Error::InvalidArgument(format!("top_pc = {top_pc} must lie in 1..={k}")));
    }
    let p = op.dim();
    let mut v_low = DenseMatrix::with_column_capacity(p, k);
    let low = lanczos::lanczos_low_memory(op, k, seed, |v| v_low.push_zero_column().copy_from_slice(v))?;
    let hi = lanczos::lanczos_hi_memory(op, k, seed)?;
    let pl = principal_components(&ritz_scaled(&v_low, &low.tridiagonal)?, top_pc)?;
    let ph = principal_components(&ritz_scaled(hi.basis.as_ref().expect("stored"), &hi.tridiagonal)?, top_pc)?;
    projector_distance(&pl, &ph, seed)
}

/// `‖AAᵀ − BBᵀ‖₂` for column-orthonormal `A`, `B`, by power iteration.
pub fn projector_distance(a: &DenseMatrix, b: &DenseMatrix, seed: u64) -> Result<f64> {
    Error::check_len(a.rows(), b.rows())?;
    let diff = FnOperator::new(a.rows(), |x: &[f64], y: &mut [f64]| {
        y.fill(0.0);
        for c in a.columns() {
            linalg::axpy(dot(c, x), c, y);
        }
        for c in b.columns() {
            linalg::axpy(-dot(c, x), c, y);
        }
    });
    Ok(linalg::operator_norm(&diff, 500, seed))
}

/// Ritz values across Lanczos seeds and iteration counts, from fully
/// reorthogonalized runs (streaming runs add ghost copies of converged
/// values).
///
/// Produces one table per `k` (rows = seeds, columns = Ritz value index,
/// descending) and the metric `agreement_k{k}`: the fraction of leading
/// values whose relative spread across seeds stays within `rel_tol`.
pub fn spectrum_study<O: LinearOperator + ?Sized>(
    op: &O,
    k_grid: &[usize],
    seeds: &[u64],
    rel_tol: f64,
) -> Result<ExperimentReport> {
    if k_grid.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("spectrum study needs seeds and iteration counts".into()));
    }
    let mut report = ExperimentReport::new("spectrum")
        .with_config("k_grid", k_grid.to_vec())
        .with_config("seeds", seeds.to_vec())
        .with_config("rel_tol", rel_tol)
        .with_config("p", op.dim());
    for &k in k_grid {
        let mut table = Table::new(
            "seed",
            seeds.iter().map(|s| s.to_string()).collect(),
            (1..=k).map(|i| format!("lambda_{i}")).collect(),
        );
        for (r, &seed) in seeds.iter().enumerate() {
            let res = lanczos::lanczos_hi_memory(op, k.min(op.dim()), seed)?;
            let values = linalg::tridiag_eig(&res.tridiagonal)?.eigenvalues;
            for (c, v) in values.into_iter().enumerate() {
                table.set(r, c, v);
            }
        }
        let mut agree = 0;
        for c in 0..k {
            let col = table.column(c);
            if col.iter().any(|v| v.is_nan()) {
                break;
            }
            let hi = col.iter().copied().fold(f64::MIN, f64::max);
            let lo = col.iter().copied().fold(f64::MAX, f64::min);
            if hi - lo > rel_tol * libm::fabs(hi) {
                break;
            }
            agree += 1;
        }
        report.metric(format!("agreement_k{k}"), agree as f64 / k as f64);
        report.tables.insert(format!("ritz_values_k{k}"), table);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DiagonalOperator;
    use proptest::prelude::*;
    use rand::RngCore;

    fn brute_auroc(id: &[f64], ood: &[f64]) -> f64 {
        let mut wins = 0.0;
        for o in ood {
            for i in id {
                if o > i {
                    wins += 1.0;
                } else if o == i {
                    wins += 0.5;
                }
            }
        }
        wins / (id.len() * ood.len()) as f64
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.1, 0.2], &[0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.1, 0.2, 0.2], &[0.2, 0.1, 0.2]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.1, 0.3], &[0.2, 0.4]).unwrap(), 0.75);
        assert!(matches!(auroc(&[], &[1.0]), Err(Error::EmptyInput(_))));
        assert!(matches!(auroc(&[1.0], &[]), Err(Error::EmptyInput(_))));
        assert!(auroc(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn auroc_matches_pair_counting() {
        let mut g = rng::stream(1, 0);
        for _ in 0..200 {
            let n = 1 + (g.next_u32() % 30) as usize;
            let m = 1 + (g.next_u32() % 30) as usize;
            let id: Vec<f64> = (0..n).map(|_| (g.next_u32() % 7) as f64).collect();
            let ood: Vec<f64> = (0..m).map(|_| (g.next_u32() % 7) as f64).collect();
            assert_eq!(auroc(&id, &ood).unwrap(), brute_auroc(&id, &ood));
        }
    }

    #[test]
    fn spearman_and_quantiles() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 5.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(spearman(&[1.0, 2.0], &[3.0, 3.0]).unwrap(), 0.0);
        assert!(spearman(&[1.0], &[1.0]).is_err());
        let v = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(quantile(&v, 0.5).unwrap(), 3.0);
        assert_eq!(quantile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&v, 1.0).unwrap(), 5.0);
        assert_eq!(quantile(&v, 0.125).unwrap(), 1.5);
        assert!(quantile(&[], 0.5).is_err());
    }

    #[test]
    fn memory_closed_forms() {
        assert_eq!(memory_account(100, 10, 3, 0), MemoryAccount { preprocess: 440, query: 140 });
        assert_eq!(memory_account(100, 10, 3, 2), MemoryAccount { preprocess: 640, query: 340 });
    }

    #[test]
    fn lemma_full_sampling_is_exact() {
        let mut cfg = LemmaConfig::new(64, 4, 64, 20, 3);
        assert!(lemma1_errors(&cfg).unwrap().iter().all(|&e| e <= 1e-10));
        cfg.transform = Transform::Fourier;
        assert!(lemma1_errors(&cfg).unwrap().iter().all(|&e| e <= 1e-10));
        let sf = SyntheticFisher::new(64, 10, 0.8, 1).unwrap();
        let cfg = LemmaConfig::new(64, 6, 64, 20, 4);
        assert!(lemma2_errors(&sf, &cfg).unwrap().iter().all(|&e| e <= 1e-8));
    }

    #[test]
    fn lemma1_aligned_single_vector() {
        let mut cfg = LemmaConfig::new(1024, 1, 128, 200, 5);
        cfg.probe = Probe::Aligned;
        let errors = lemma1_errors(&cfg).unwrap();
        assert!(quantile(&errors, 0.5).unwrap() <= 3.0 * libm::sqrt(1.0 / 128.0));
        let report = lemma1_check(&cfg).unwrap();
        assert!(report.metrics.contains_key("error_q95"));
        report.validate().unwrap();
    }

    #[test]
    fn lemma1_median_scales_with_inverse_root_s() {
        let median = |s| {
            let mut cfg = LemmaConfig::new(4096, 16, s, 500, 11);
            cfg.probe = Probe::Aligned;
            quantile(&lemma1_errors(&cfg).unwrap(), 0.5).unwrap()
        };
        let ratio = median(256) / median(1024);
        assert!((1.4..=2.6).contains(&ratio), "{ratio}");
    }

    #[test]
    fn lemma2_identity_reduces_to_one_column() {
        let op = DiagonalOperator(alloc::vec![1.0; 256]);
        let mut cfg = LemmaConfig::new(256, 5, 64, 50, 2);
        cfg.probe = Probe::Aligned;
        let e2 = lemma2_errors(&op, &cfg).unwrap();
        // one normalized column: ‖(Su)ᵀ(Su)‖/‖Su‖ = ‖Su‖ against 1
        assert!(quantile(&e2, 0.5).unwrap() <= 3.0 * libm::sqrt(1.0 / 64.0));
    }

    #[test]
    fn lemma_configs_validate() {
        assert!(lemma1_errors(&LemmaConfig::new(10, 11, 4, 1, 0)).is_err());
        assert!(lemma1_errors(&LemmaConfig::new(10, 1, 4, 0, 0)).is_err());
        let op = DiagonalOperator(alloc::vec![1.0; 9]);
        assert!(lemma2_errors(&op, &LemmaConfig::new(10, 1, 4, 1, 0)).is_err());
    }

    #[test]
    fn projector_agreement_small_cases() {
        let mut d: Vec<f64> = (0..60).map(|i| libm::pow(0.5, i as f64)).collect();
        d[..4].copy_from_slice(&[4.0, 3.0, 2.0, 1.0]);
        let op = DiagonalOperator(d);
        assert!(projector_agreement(&op, 10, 4, 1).unwrap() <= 1e-6);
        let u = rng::orthonormal(&mut rng::stream(2, 0), 30, 3);
        assert!(projector_distance(&u, &u, 0).unwrap() <= 1e-10);
        assert!(projector_agreement(&op, 3, 4, 1).is_err());
    }

    #[test]
    fn ablation_small_grid_runs() {
        let sf = SyntheticFisher::new(1000, 20, 0.8, 1).unwrap();
        let cfg =
            AblationConfig { k_grid: alloc::vec![5, 10, 20], s_grid: alloc::vec![64, 256], m_queries: 5, seed: 2 };
        let report = ablation_surface(&sf, &cfg).unwrap();
        let err = &report.tables["error"];
        assert_eq!(err.columns, ["64", "256", "inf"]);
        assert!(err.get(2, 2) <= 1e-6, "{}", err.get(2, 2));
        assert!(err.get(0, 0) > err.get(2, 2));
        report.validate().unwrap();
        let csv = err.to_csv();
        assert!(csv.starts_with("k,64,256,inf\n5,"));
    }

    #[test]
    fn spectrum_study_shapes() {
        let sf = SyntheticFisher::new(300, 30, 0.8, 3).unwrap();
        let report = spectrum_study(&sf, &[10, 20], &[1, 2, 3], 0.05).unwrap();
        assert_eq!(report.tables["ritz_values_k20"].rows.len(), 3);
        assert!(report.metrics["agreement_k20"] >= 0.5);
    }

    proptest! {
        #[test]
        fn auroc_monotone_invariant(xs in proptest::collection::vec(-5.0f64..5.0, 2..40), split in 1usize..39) {
            let split = split.min(xs.len() - 1);
            let (id, ood) = xs.split_at(split);
            let a = auroc(id, ood).unwrap();
            let f = |v: &[f64]| v.iter().map(|x| libm::exp(*x) * 3.0 + 1.0).collect::<Vec<_>>();
            prop_assert_eq!(a, auroc(&f(id), &f(ood)).unwrap());
            prop_assert_eq!(a + auroc(ood, id).unwrap(), 1.0);
        }
    }
}
