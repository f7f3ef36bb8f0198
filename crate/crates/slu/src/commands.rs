//! The four pipeline commands: train, precompute, score and bench.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use serde_json::{json, Value};
use slu_core::data::SyntheticFisher;
use slu_core::eval::{self, AblationConfig, ExperimentReport, LemmaConfig};
use slu_core::linalg::LinearOperator;
use slu_core::model::{ggn_diagonal, train_sgd, GgnOperator, LossKind, MlpModel, SgdConfig};
use slu_core::score::{ScoreMethod, ScorePipeline};
use slu_core::sketched_lanczos::{preconditioned_sketched_lanczos, sketched_lanczos};
use slu_core::SketchOperator;

use crate::config::{BenchOperator, MethodName, RunConfig};
use crate::error::{Error, Result};
use crate::output::{write_file, write_report, ReportFiles};
use crate::{basis_file, checkpoint, data};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum BenchKind {
    Lemma1,
    Lemma2,
    Ablation,
    Projector,
    Spectrum,
}

impl BenchKind {
    pub fn name(self) -> &'static str {
        match self {
            BenchKind::Lemma1 => "lemma1",
            BenchKind::Lemma2 => "lemma2",
            BenchKind::Ablation => "ablation",
            BenchKind::Projector => "projector",
            BenchKind::Spectrum => "spectrum",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Precompute,
    Score,
    Bench(BenchKind),
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Precompute => "precompute",
            Command::Score => "score",
            Command::Bench(b) => b.name(),
        }
    }
}

/// The config sections `cmd` reads, shaped as a partial [`RunConfig`] so a
/// report's embedded config can be loaded back with `--config`.
pub fn snapshot(cfg: &RunConfig, cmd: Command) -> Value {
    match cmd {
        Command::Train => json!({ "data": cfg.data, "model": cfg.model, "train": cfg.train }),
        Command::Precompute => json!({ "data": cfg.data, "model": cfg.model, "precompute": cfg.precompute }),
        Command::Score => json!({ "data": cfg.data, "model": cfg.model, "score": cfg.score }),
        Command::Bench(BenchKind::Lemma1 | BenchKind::Lemma2) => json!({ "bench": { "lemma": cfg.bench.lemma } }),
        Command::Bench(BenchKind::Ablation) => json!({ "bench": { "ablation": cfg.bench.ablation } }),
        Command::Bench(BenchKind::Projector) => match cfg.bench.projector.operator {
            BenchOperator::Synthetic => json!({ "bench": { "projector": cfg.bench.projector } }),
            BenchOperator::Ggn => {
                json!({ "data": cfg.data, "model": cfg.model, "bench": { "projector": cfg.bench.projector } })
            }
        },
        Command::Bench(BenchKind::Spectrum) => match cfg.bench.spectrum.operator {
            BenchOperator::Synthetic => json!({ "bench": { "spectrum": cfg.bench.spectrum } }),
            BenchOperator::Ggn => {
                json!({ "data": cfg.data, "model": cfg.model, "bench": { "spectrum": cfg.bench.spectrum } })
            }
        },
    }
}

struct Stopwatch(Instant);

impl Stopwatch {
    fn start() -> Self {
        Self(Instant::now())
    }

    fn lap(&mut self, report: &mut ExperimentReport, stage: &str) {
        report.timings.insert(stage.into(), self.0.elapsed().as_secs_f64());
        self.0 = Instant::now();
    }
}

/// Files written by a command.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub primary: Vec<PathBuf>,
    pub report: ReportFiles,
}

pub fn run(cfg: &RunConfig, cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Train => train(cfg),
        Command::Precompute => precompute(cfg),
        Command::Score => score(cfg),
        Command::Bench(kind) => bench(cfg, kind),
    }
}

fn check_input_dim(model: &MlpModel, ds: &slu_core::data::Dataset) -> Result<()> {
    if !ds.is_empty() && ds.dim() != model.input_dim() {
        return Err(Error::Config(format!(
            "dataset {} has {} features but the model expects {}",
            ds.name,
            ds.dim(),
            model.input_dim()
        )));
    }
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<Outcome> {
    let mut sw = Stopwatch::start();
    let mut report = ExperimentReport::new("train");
    let train = data::train_split(&cfg.data)?;
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if matches!(train.targets(), slu_core::data::Targets::None) {
        return Err(Error::MissingFlag { flag: "--train-labels", why: "training needs labels" });
    }
    let classes = cfg
        .model
        .classes
        .or_else(|| data::class_count(&train))
        .ok_or_else(|| Error::Config("cannot infer the output width; set model.classes".into()))?;
    let mut dims = vec![train.dim()];
    dims.extend(&cfg.model.hidden);
    dims.push(classes);
    let loss: LossKind = cfg.model.loss.into();
    let init = MlpModel::new(&dims, cfg.model.activation.into(), cfg.model.seed)?;
    sw.lap(&mut report, "setup");

    let sgd = SgdConfig {
        epochs: cfg.train.epochs,
        lr: cfg.train.lr,
        batch_size: cfg.train.batch_size,
        seed: cfg.train.seed,
    };
    let (trained, log) = train_sgd(&init, &train, loss, &sgd)?;
    sw.lap(&mut report, "train");

    let stored = checkpoint::round_to_stored(&trained);
    let ckpt_bytes = checkpoint::encode(&stored);
    write_file(&cfg.train.checkpoint, ckpt_bytes)?;
    let mut csv = String::from("epoch,loss,accuracy\n");
    for e in &log.epochs {
        let acc = e.accuracy.map(|a| format!("{a:.16e}")).unwrap_or_default();
        writeln!(csv, "{},{:.16e},{acc}", e.epoch, e.loss).expect("string write");
    }
    write_file(&cfg.train.log, csv)?;
    sw.lap(&mut report, "write");

    let accuracy = stored.accuracy(&train)?.unwrap_or(f64::NAN);
    log::info!(
        "{} trained for {} epochs: train accuracy {accuracy:.4}",
        slu_core::model::describe(&stored),
        cfg.train.epochs
    );
    report.metric("train_accuracy", accuracy);
    report.metric("num_params", stored.num_params() as f64);
    if let Some(l) = log.final_loss() {
        report.metric("final_loss", l);
    }
    if let Some(id) = data::id_test_split(&cfg.data)? {
        if let Some(a) = stored.accuracy(&id)? {
            report.metric("test_accuracy", a);
        }
    }
    let files = write_report(&cfg.reports_dir, "train", &snapshot(cfg, Command::Train), &report, false)?;
    Ok(Outcome { primary: vec![cfg.train.checkpoint.clone(), cfg.train.log.clone()], report: files })
}

pub fn precompute(cfg: &RunConfig) -> Result<Outcome> {
    let pc = &cfg.precompute;
    if pc.k1 == 0 {
        return Err(Error::Config("precompute.k1 must be at least 1".into()));
    }
    let mut sw = Stopwatch::start();
    let mut report = ExperimentReport::new("precompute");
    let model = checkpoint::read(&pc.checkpoint)?;
    let train = data::train_split(&cfg.data)?;
    check_input_dim(&model, &train)?;
    let p = model.num_params();
    let sketch = SketchOperator::with_transform(p, pc.s, pc.sketch_seed, pc.transform.into())?;
    sw.lap(&mut report, "load");

    let loss: LossKind = cfg.model.loss.into();
    let ggn = match pc.ggn_subsample {
        Some(m) => GgnOperator::subsampled(&model, &train, loss, m, pc.seed)?,
        None => GgnOperator::new(&model, &train, loss)?,
    };
    sw.lap(&mut report, "operator");

    let basis = if pc.k0 == 0 {
        sketched_lanczos(&ggn, pc.k1, sketch, pc.seed)?
    } else {
        preconditioned_sketched_lanczos(&ggn, pc.k0, pc.k1, sketch, pc.seed)?
    };
    let basis = if pc.keep_eigenvalues { basis } else { basis.drop_eigenvalues() };
    sw.lap(&mut report, "lanczos");

    write_file(&pc.basis, basis_file::encode(&basis))?;
    sw.lap(&mut report, "write");

    let mem = eval::memory_account(p, pc.s, pc.k1, pc.k0);
    log::info!("memory budget: preprocess {} floats, query {} floats (p = {p})", mem.preprocess, mem.query);
    report.memory.insert("preprocess_floats".into(), mem.preprocess);
    report.memory.insert("query_floats".into(), mem.query);
    report.memory.insert("basis_floats".into(), (basis.u_s().rows() * basis.k()) as u64);
    report.metric("p", p as f64);
    report.metric("k_effective", basis.k() as f64);
    if let Some(b) = basis.breakdown() {
        report.metric("breakdown_at", b as f64);
    }
    if let Some(d) = basis.concat_defect() {
        report.metric("concat_defect", d);
    }
    let files = write_report(&cfg.reports_dir, "precompute", &snapshot(cfg, Command::Precompute), &report, false)?;
    Ok(Outcome { primary: vec![pc.basis.clone()], report: files })
}

fn pipeline(cfg: &RunConfig, model: &MlpModel) -> Result<ScorePipeline> {
    let sc = &cfg.score;
    let dense = |field: &'static str| -> Result<slu_core::sketched_lanczos::Preconditioner> {
        let basis = basis_file::read(&sc.basis)?;
        basis.preconditioner().cloned().ok_or(Error::MissingField {
            path: sc.basis.clone(),
            field,
            hint: "run precompute with --k0 > 0 to store the hi-memory eigenpairs",
        })
    };
    let pipeline = match sc.method {
        MethodName::Slu => ScorePipeline::Slu(basis_file::read(&sc.basis)?),
        MethodName::LeExact => ScorePipeline::LeExact(dense("dense eigenbasis (u0)")?.basis),
        MethodName::Lla => {
            let pc = dense("dense eigenpairs (u0 and eigenvalues lambda0)")?;
            ScorePipeline::lla(pc.basis, pc.eigenvalues, sc.alpha)?
        }
        MethodName::DiagLaplace => {
            let train = data::train_split(&cfg.data)?;
            check_input_dim(model, &train)?;
            ScorePipeline::diag_laplace(ggn_diagonal(model, &train, cfg.model.loss.into())?, sc.alpha)?
        }
    };
    if pipeline.p() != model.num_params() {
        return Err(Error::Config(format!(
            "{} has p = {} but the checkpoint has {} parameters",
            sc.basis.display(),
            pipeline.p(),
            model.num_params()
        )));
    }
    Ok(pipeline)
}

pub fn score(cfg: &RunConfig) -> Result<Outcome> {
    let sc = &cfg.score;
    let mut sw = Stopwatch::start();
    let mut report = ExperimentReport::new("score");
    let model = checkpoint::read(&sc.checkpoint)?;
    let (id, ood) = data::test_splits(&cfg.data)?;
    let id = data::truncate(id, sc.limit)?;
    let ood = data::truncate(ood, sc.limit)?;
    check_input_dim(&model, &id)?;
    check_input_dim(&model, &ood)?;
    let pipeline = pipeline(cfg, &model)?;
    let method = ScoreMethod::from(sc.method);
    sw.lap(&mut report, "load");

    let mut csv = String::from("dataset_id,point_index,method,score\n");
    let mut scores: [Vec<f64>; 2] = Default::default();
    let mut clamped = 0usize;
    for (split, (name, ds)) in [("id_test", &id), ("ood_test", &ood)].into_iter().enumerate() {
        for i in 0..ds.len() {
            let v = pipeline.score(&model, ds.input(i))?;
            clamped += usize::from(v.clamped);
            writeln!(csv, "{name},{i},{},{:.16e}", method.name(), v.score).expect("string write");
            scores[split].push(v.score);
        }
    }
    sw.lap(&mut report, "score");
    write_file(&sc.output, csv)?;

    report.metric("n_id", id.len() as f64);
    report.metric("n_ood", ood.len() as f64);
    report.metric("clamped", clamped as f64);
    if !scores[0].is_empty() && !scores[1].is_empty() {
        let auroc = eval::auroc(&scores[0], &scores[1])?;
        log::info!("{} AUROC (ID vs OoD): {auroc:.4}", method.name());
        report.metric("auroc", auroc);
    }
    let files = write_report(&cfg.reports_dir, "score", &snapshot(cfg, Command::Score), &report, false)?;
    Ok(Outcome { primary: vec![sc.output.clone()], report: files })
}

fn ggn_operator(cfg: &RunConfig, checkpoint_path: &std::path::Path) -> Result<GgnOperator> {
    let model = checkpoint::read(checkpoint_path)?;
    let train = data::train_split(&cfg.data)?;
    check_input_dim(&model, &train)?;
    Ok(GgnOperator::new(&model, &train, cfg.model.loss.into())?)
}

pub fn bench(cfg: &RunConfig, kind: BenchKind) -> Result<Outcome> {
    let b = &cfg.bench;
    let mut sw = Stopwatch::start();
    let mut report = match kind {
        BenchKind::Lemma1 | BenchKind::Lemma2 => {
            let l = &b.lemma;
            let mut lc = LemmaConfig::new(l.p, l.k, l.s, l.trials, l.seed);
            lc.probe = l.probe.into();
            lc.transform = l.transform.into();
            if kind == BenchKind::Lemma1 {
                eval::lemma1_check(&lc)?
            } else {
                eval::lemma2_check(&lc)?
            }
        }
        BenchKind::Ablation => {
            let a = &b.ablation;
            let sf = SyntheticFisher::new(a.p, a.rank, a.decay, a.fisher_seed)?;
            let ac = AblationConfig {
                k_grid: a.k_grid.clone(),
                s_grid: a.s_grid.clone(),
                m_queries: a.m_queries,
                seed: a.seed,
            };
            eval::ablation_surface(&sf, &ac)?
        }
        BenchKind::Projector => {
            let pj = &b.projector;
            let mut r = ExperimentReport::new("projector")
                .with_config("k", pj.k)
                .with_config("top_pc", pj.top_pc)
                .with_config("seeds", pj.seeds.clone());
            let ggn = match pj.operator {
                BenchOperator::Ggn => Some(ggn_operator(cfg, &pj.checkpoint)?),
                BenchOperator::Synthetic => None,
            };
            for &seed in &pj.seeds {
                let d = match &ggn {
                    Some(op) => eval::projector_agreement(op, pj.k, pj.top_pc, seed)?,
                    None => {
                        let sf = SyntheticFisher::new(pj.p, pj.rank, pj.decay, seed)?;
                        eval::projector_agreement(&sf, pj.k, pj.top_pc, seed)?
                    }
                };
                r.metric(format!("distance_seed{seed}"), d);
            }
            r
        }
        BenchKind::Spectrum => {
            let sp = &b.spectrum;
            let op: Box<dyn LinearOperator> = match sp.operator {
                BenchOperator::Ggn => Box::new(ggn_operator(cfg, &sp.checkpoint)?),
                BenchOperator::Synthetic => Box::new(SyntheticFisher::new(sp.p, sp.rank, sp.decay, sp.operator_seed)?),
            };
            eval::spectrum_study(op.as_ref(), &sp.k_grid, &sp.seeds, sp.rel_tol)?
        }
    };
    sw.lap(&mut report, "run");
    for (k, v) in &report.metrics {
        log::info!("{k} = {v:.4}");
    }
    report.validate()?;
    let files = write_report(&b.out_dir, kind.name(), &snapshot(cfg, Command::Bench(kind)), &report, true)?;
    let mut primary = vec![files.report.clone()];
    primary.extend(files.tables.iter().cloned());
    Ok(Outcome { primary, report: files })
}
