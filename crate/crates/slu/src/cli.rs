//! Command-line interface. Flags override the config file, which overrides
//! the built-in defaults.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, BenchKind, Command, Outcome};
use crate::config::{
    ActivationName, BenchOperator, DataSource, LossName, MethodName, ProbeName, RunConfig, TransformName,
};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "slu", version, about = "Sketched Lanczos uncertainty scores for small MLPs")]
pub struct Cli {
    /// TOML config file, or a JSON report from an earlier run.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Directory for train, precompute and score reports.
    #[arg(long, global = true, value_name = "DIR")]
    pub reports_dir: Option<PathBuf>,
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Train an MLP and write a checkpoint and a per-epoch log.
    Train(TrainArgs),
    /// Build the sketched eigenbasis of the GGN and write a basis file.
    Precompute(PrecomputeArgs),
    /// Score the ID and OoD test splits.
    Score(ScoreArgs),
    /// Run a benchmark and write its report and tables.
    Bench(BenchArgs),
    /// Print the effective configuration as TOML.
    ShowConfig,
}

#[derive(Debug, Default, Args)]
pub struct DataArgs {
    #[arg(long, value_enum)]
    pub source: Option<DataSource>,
    /// Two-gaussian input dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Two-gaussian training points.
    #[arg(long)]
    pub n: Option<usize>,
    /// Two-gaussian OoD displacement.
    #[arg(long)]
    pub shift: Option<f64>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long, value_name = "PATH")]
    pub train_images: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub train_labels: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub test_images: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub test_labels: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub ood_images: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub ood_labels: Option<PathBuf>,
    /// Build the OoD split by rotating the ID test images.
    #[arg(long, value_name = "DEGREES")]
    pub ood_rotate: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct ModelArgs {
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub activation: Option<ActivationName>,
    #[arg(long, value_enum)]
    pub loss: Option<LossName>,
    #[arg(long)]
    pub model_seed: Option<u64>,
    /// Output width; inferred from the labels when unset.
    #[arg(long)]
    pub classes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint to write.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Per-epoch CSV log to write.
    #[arg(long, value_name = "PATH")]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrecomputeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub loss: Option<LossName>,
    /// Hi-memory Lanczos iterations; 0 disables preconditioning.
    #[arg(long, visible_alias = "lanczos-hm-iter")]
    pub k0: Option<usize>,
    /// Sketched low-memory Lanczos iterations.
    #[arg(long, visible_alias = "lanczos-lm-iter")]
    pub k1: Option<usize>,
    /// Sketch size.
    #[arg(short = 's', long = "sketch-size", visible_alias = "s")]
    pub s: Option<usize>,
    /// Lanczos start-vector seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sketch_seed: Option<u64>,
    #[arg(long, value_enum)]
    pub transform: Option<TransformName>,
    /// Use a random subset of this many training points for the GGN.
    #[arg(long, value_name = "M")]
    pub ggn_subsample: Option<usize>,
    /// Do not store Ritz values in the basis file.
    #[arg(long)]
    pub no_eigenvalues: bool,
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Basis file to write.
    #[arg(long, value_name = "PATH")]
    pub basis: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub loss: Option<LossName>,
    #[arg(long, value_enum)]
    pub method: Option<MethodName>,
    /// Prior precision for lla and diag_laplace.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Score at most this many points per split.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub basis: Option<PathBuf>,
    /// Score CSV to write.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(value_enum)]
    pub kind: BenchKind,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub loss: Option<LossName>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(short = 's', long = "sketch-size", visible_alias = "s")]
    pub s: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_enum)]
    pub probe: Option<ProbeName>,
    #[arg(long, value_enum)]
    pub transform: Option<TransformName>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub k_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub s_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub m_queries: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub top_pc: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long, value_enum)]
    pub operator: Option<BenchOperator>,
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_some<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

impl DataArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let d = &mut cfg.data;
        set(&mut d.source, self.source);
        set(&mut d.dim, self.dim);
        set(&mut d.n, self.n);
        set(&mut d.shift, self.shift);
        set(&mut d.seed, self.data_seed);
        set_some(&mut d.train_images, self.train_images);
        set_some(&mut d.train_labels, self.train_labels);
        set_some(&mut d.test_images, self.test_images);
        set_some(&mut d.test_labels, self.test_labels);
        set_some(&mut d.ood_images, self.ood_images);
        set_some(&mut d.ood_labels, self.ood_labels);
        set_some(&mut d.ood_rotate_degrees, self.ood_rotate);
    }
}

impl ModelArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let m = &mut cfg.model;
        set(&mut m.hidden, self.hidden);
        set(&mut m.activation, self.activation);
        set(&mut m.loss, self.loss);
        set(&mut m.seed, self.model_seed);
        set_some(&mut m.classes, self.classes);
    }
}

fn reject(kind: BenchKind, flags: &[(&'static str, bool)]) -> Result<()> {
    match flags.iter().find(|(_, given)| *given) {
        Some((flag, _)) => Err(Error::Config(format!("{flag} does not apply to bench {}", kind.name()))),
        None => Ok(()),
    }
}

impl BenchArgs {
    fn apply(self, cfg: &mut RunConfig) -> Result<BenchKind> {
        let kind = self.kind;
        let b = &mut cfg.bench;
        set(&mut b.out_dir, self.out_dir);
        match kind {
            BenchKind::Lemma1 | BenchKind::Lemma2 => {
                reject(
                    kind,
                    &[
                        ("--rank", self.rank.is_some()),
                        ("--decay", self.decay.is_some()),
                        ("--k-grid", self.k_grid.is_some()),
                        ("--s-grid", self.s_grid.is_some()),
                        ("--m-queries", self.m_queries.is_some()),
                        ("--seeds", self.seeds.is_some()),
                        ("--top-pc", self.top_pc.is_some()),
                        ("--rel-tol", self.rel_tol.is_some()),
                        ("--operator", self.operator.is_some()),
                        ("--checkpoint", self.checkpoint.is_some()),
                    ],
                )?;
                let l = &mut b.lemma;
                set(&mut l.p, self.p);
                set(&mut l.k, self.k);
                set(&mut l.s, self.s);
                set(&mut l.seed, self.seed);
                set(&mut l.trials, self.trials);
                set(&mut l.probe, self.probe);
                set(&mut l.transform, self.transform);
            }
            BenchKind::Ablation => {
                reject(
                    kind,
                    &[
                        ("--k", self.k.is_some()),
                        ("--sketch-size", self.s.is_some()),
                        ("--trials", self.trials.is_some()),
                        ("--probe", self.probe.is_some()),
                        ("--transform", self.transform.is_some()),
                        ("--seeds", self.seeds.is_some()),
                        ("--top-pc", self.top_pc.is_some()),
                        ("--rel-tol", self.rel_tol.is_some()),
                        ("--operator", self.operator.is_some()),
                        ("--checkpoint", self.checkpoint.is_some()),
                    ],
                )?;
                let a = &mut b.ablation;
                set(&mut a.p, self.p);
                set(&mut a.rank, self.rank);
                set(&mut a.decay, self.decay);
                set(&mut a.seed, self.seed);
                set(&mut a.k_grid, self.k_grid);
                set(&mut a.s_grid, self.s_grid);
                set(&mut a.m_queries, self.m_queries);
            }
            BenchKind::Projector => {
                reject(
                    kind,
                    &[
                        ("--sketch-size", self.s.is_some()),
                        ("--seed", self.seed.is_some()),
                        ("--trials", self.trials.is_some()),
                        ("--probe", self.probe.is_some()),
                        ("--transform", self.transform.is_some()),
                        ("--k-grid", self.k_grid.is_some()),
                        ("--s-grid", self.s_grid.is_some()),
                        ("--m-queries", self.m_queries.is_some()),
                        ("--rel-tol", self.rel_tol.is_some()),
                    ],
                )?;
                let pj = &mut b.projector;
                set(&mut pj.operator, self.operator);
                set(&mut pj.p, self.p);
                set(&mut pj.rank, self.rank);
                set(&mut pj.decay, self.decay);
                set(&mut pj.checkpoint, self.checkpoint);
                set(&mut pj.k, self.k);
                set(&mut pj.top_pc, self.top_pc);
                set(&mut pj.seeds, self.seeds);
            }
            BenchKind::Spectrum => {
                reject(
                    kind,
                    &[
                        ("--k", self.k.is_some()),
                        ("--sketch-size", self.s.is_some()),
                        ("--trials", self.trials.is_some()),
                        ("--probe", self.probe.is_some()),
                        ("--transform", self.transform.is_some()),
                        ("--s-grid", self.s_grid.is_some()),
                        ("--m-queries", self.m_queries.is_some()),
                        ("--top-pc", self.top_pc.is_some()),
                    ],
                )?;
                let sp = &mut b.spectrum;
                set(&mut sp.operator, self.operator);
                set(&mut sp.p, self.p);
                set(&mut sp.rank, self.rank);
                set(&mut sp.decay, self.decay);
                set(&mut sp.operator_seed, self.seed);
                set(&mut sp.checkpoint, self.checkpoint);
                set(&mut sp.k_grid, self.k_grid);
                set(&mut sp.seeds, self.seeds);
                set(&mut sp.rel_tol, self.rel_tol);
            }
        }
        self.data.apply(cfg);
        set(&mut cfg.model.loss, self.loss);
        Ok(kind)
    }
}

/// The effective config and the command to run, or `None` for `show-config`.
pub fn resolve(cli: Cli) -> Result<(RunConfig, Option<Command>)> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    set(&mut cfg.reports_dir, cli.reports_dir);
    let cmd = match cli.command {
        CliCommand::Train(a) => {
            a.data.apply(&mut cfg);
            a.model.apply(&mut cfg);
            let t = &mut cfg.train;
            set(&mut t.epochs, a.epochs);
            set(&mut t.lr, a.lr);
            set(&mut t.batch_size, a.batch_size);
            set(&mut t.seed, a.seed);
            set(&mut t.checkpoint, a.checkpoint);
            set(&mut t.log, a.log);
            Some(Command::Train)
        }
        CliCommand::Precompute(a) => {
            a.data.apply(&mut cfg);
            set(&mut cfg.model.loss, a.loss);
            let pc = &mut cfg.precompute;
            set(&mut pc.k0, a.k0);
            set(&mut pc.k1, a.k1);
            set(&mut pc.s, a.s);
            set(&mut pc.seed, a.seed);
            set(&mut pc.sketch_seed, a.sketch_seed);
            set(&mut pc.transform, a.transform);
            set_some(&mut pc.ggn_subsample, a.ggn_subsample);
            if a.no_eigenvalues {
                pc.keep_eigenvalues = false;
            }
            set(&mut pc.checkpoint, a.checkpoint);
            set(&mut pc.basis, a.basis);
            Some(Command::Precompute)
        }
        CliCommand::Score(a) => {
            a.data.apply(&mut cfg);
            set(&mut cfg.model.loss, a.loss);
            let sc = &mut cfg.score;
            set(&mut sc.method, a.method);
            set(&mut sc.alpha, a.alpha);
            set_some(&mut sc.limit, a.limit);
            set(&mut sc.checkpoint, a.checkpoint);
            set(&mut sc.basis, a.basis);
            set(&mut sc.output, a.output);
            Some(Command::Score)
        }
        CliCommand::Bench(a) => Some(Command::Bench(a.apply(&mut cfg)?)),
        CliCommand::ShowConfig => None,
    };
    Ok((cfg, cmd))
}

pub fn run(cli: Cli) -> Result<Option<Outcome>> {
    match resolve(cli)? {
        (cfg, Some(cmd)) => commands::run(&cfg, cmd).map(Some),
        (cfg, None) => {
            print!("{}", cfg.to_toml());
            Ok(None)
        }
    }
}
