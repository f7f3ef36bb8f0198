//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use slu_core::data::{two_gaussian_task, Dataset, SyntheticFisher, Targets};
use slu_core::eval::{
    ablation_surface, auroc, lemma1_errors, lemma2_errors, memory_account, projector_agreement, quantile,
    AblationConfig, LemmaConfig, MemoryAccount, Probe,
};
use slu_core::lanczos::lanczos_hi_memory;
use slu_core::linalg::{dot, frobenius_norm_sq, tridiag_eig, LinearOperator};
use slu_core::model::{
    ggn_diagonal, loss_output_hessian, train_sgd, Activation, GgnOperator, LossKind, MlpModel, SgdConfig,
};
use slu_core::score::{diag_laplace_score, exact_score_jt, slu_score, slu_score_jt};
use slu_core::sketched_lanczos::sketched_lanczos;
use slu_core::{DenseMatrix, SketchOperator};

struct Counting;

thread_local! {
    static TRACKING: Cell<bool> = const { Cell::new(false) };
    static LIVE: Cell<isize> = const { Cell::new(0) };
    static PEAK: Cell<isize> = const { Cell::new(0) };
}

fn note(delta: isize) {
    let _ = TRACKING.try_with(|t| {
        if t.get() {
            let live = LIVE.with(|l| {
                l.set(l.get() + delta);
                l.get()
            });
            PEAK.with(|p| p.set(p.get().max(live)));
        }
    });
}

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            note(layout.size() as isize);
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc_zeroed(layout) };
        if !p.is_null() {
            note(layout.size() as isize);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        note(-(layout.size() as isize));
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = unsafe { System.realloc(ptr, layout, new_size) };
        if !p.is_null() {
            note(new_size as isize - layout.size() as isize);
        }
        p
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

/// Peak bytes allocated on this thread while `f` runs, above the level at entry.
fn peak_bytes<T>(f: impl FnOnce() -> T) -> (T, usize) {
    LIVE.with(|l| l.set(0));
    PEAK.with(|p| p.set(0));
    TRACKING.with(|t| t.set(true));
    let out = f();
    TRACKING.with(|t| t.set(false));
    (out, PEAK.with(|p| p.get()).max(0) as usize)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(limit_s: u64, elapsed: Duration) -> (bool, String) {
    (elapsed <= Duration::from_secs(limit_s), format!("{:.2}s of {limit_s}s", elapsed.as_secs_f64()))
}

fn dense_eigenvalues(a: &DenseMatrix) -> Vec<f64> {
    let m = DMatrix::from_column_slice(a.rows(), a.cols(), a.data());
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn lanczos_correctness() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let op = SyntheticFisher::new(500, 500, 0.9, seed).unwrap();
        let oracle = dense_eigenvalues(&op.to_dense());
        let res = lanczos_hi_memory(&op, 40, seed).unwrap();
        let ritz = tridiag_eig(&res.tridiagonal).unwrap().eigenvalues;
        for i in 0..10 {
            worst = worst.max((ritz[i] - oracle[i]).abs() / oracle[i].abs());
        }
    }
    let (fast, time) = within(10, t.elapsed());
    outcome(worst <= 1e-8 && fast, format!("max relative error {worst:.2e} (limit 1e-8), {time}"))
}

fn projector() -> Outcome {
    let t = Instant::now();
    let distances: Vec<f64> = (0..5)
        .map(|seed| {
            let op = SyntheticFisher::new(500, 100, 0.9, seed).unwrap();
            projector_agreement(&op, 40, 10, seed).unwrap()
        })
        .collect();
    let good = distances.iter().filter(|&&d| d <= 0.05).count();
    let (fast, time) = within(30, t.elapsed());
    let shown: Vec<String> = distances.iter().map(|d| format!("{d:.4}")).collect();
    outcome(good >= 4 && fast, format!("{good}/5 seeds within 0.05 [{}], {time}", shown.join(", ")))
}

fn lemma1() -> Outcome {
    let t = Instant::now();
    let q95 = quantile(&lemma1_errors(&LemmaConfig::new(4096, 16, 1024, 500, 0)).unwrap(), 0.95).unwrap();
    let median = |s| {
        let mut cfg = LemmaConfig::new(4096, 16, s, 500, 0);
        cfg.probe = Probe::Aligned;
        quantile(&lemma1_errors(&cfg).unwrap(), 0.5).unwrap()
    };
    let ratio = median(1024) / median(2048);
    let (fast, time) = within(60, t.elapsed());
    outcome(
        q95 <= 0.15 && (1.4..=2.6).contains(&ratio) && fast,
        format!("q95 {q95:.4} (limit 0.15), median(s)/median(2s) {ratio:.3} (target 2 ± 30%), {time}"),
    )
}

fn lemma2() -> Outcome {
    let t = Instant::now();
    let op = SyntheticFisher::new(4096, 100, 0.9, 0).unwrap();
    let q95 = quantile(&lemma2_errors(&op, &LemmaConfig::new(4096, 16, 1024, 500, 0)).unwrap(), 0.95).unwrap();
    let (fast, time) = within(60, t.elapsed());
    outcome(q95 <= 0.15 && fast, format!("q95 {q95:.4} (limit 0.15), {time}"))
}

fn ablation() -> Outcome {
    let t = Instant::now();
    let sf = SyntheticFisher::new(10_000, 100, 0.9, 0).unwrap();
    let report = ablation_surface(&sf, &AblationConfig::default()).unwrap();
    let trends: Vec<(&String, &f64)> = report.metrics.iter().filter(|(k, _)| k.starts_with("spearman_")).collect();
    let worst = trends.iter().map(|(_, &v)| v).fold(f64::NEG_INFINITY, f64::max);
    let full = AblationConfig { k_grid: vec![100], s_grid: vec![2048], ..AblationConfig::default() };
    let at_100 = ablation_surface(&sf, &full).unwrap();
    let inf = at_100.tables["error"].get(0, 1);
    let (fast, time) = within(300, t.elapsed());
    outcome(
        trends.len() == 9 && worst <= -0.8 && inf <= 1e-6 && fast,
        format!(
            "{} trends, max rho {worst:.3} (limit -0.8), inf column at k=100 {inf:.3e} (limit 1e-6), {time}",
            trends.len()
        ),
    )
}

fn slu_exact_agreement() -> Outcome {
    let t = Instant::now();
    let task = two_gaussian_task(8, 500, 6.0, 1).unwrap();
    let init = MlpModel::new(&[8, 32, 32, 3], Activation::Tanh, 1).unwrap();
    let (model, _) = train_sgd(&init, &task.id_train, LossKind::CrossEntropy, &SgdConfig::default()).unwrap();
    let ggn = GgnOperator::new(&model, &task.id_train, LossKind::CrossEntropy).unwrap();
    let p = model.num_params();
    let basis = sketched_lanczos(&ggn, 20, SketchOperator::new(p, 512, 3).unwrap(), 2).unwrap();
    let exact = lanczos_hi_memory(&ggn, 20, 2).unwrap().basis.unwrap();
    let envelope = 2.0 * (20.0f64 * 3.0 / 512.0).sqrt();
    let points = (0..50).map(|i| task.id_test.input(i)).chain((0..50).map(|i| task.ood_test.input(i)));
    let good = points
        .filter(|x| {
            let jt = model.jacobian_t(x).unwrap();
            let sketched = slu_score_jt(&basis, &jt).unwrap().score;
            (sketched - exact_score_jt(&exact, &jt).unwrap()).abs() <= envelope * frobenius_norm_sq(&jt)
        })
        .count();
    let (fast, time) = within(60, t.elapsed());
    outcome(good >= 90 && fast, format!("{good}/100 points within 2 sqrt(kt/s) |J|_F^2 (p = {p}), {time}"))
}

fn relative(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    diff / dot(b, b).sqrt().max(f64::MIN_POSITIVE)
}

fn ggn_oracle() -> Outcome {
    let t = Instant::now();
    let model = MlpModel::new(&[2, 4, 3], Activation::Tanh, 7).unwrap();
    let p = model.num_params();
    let xs: Vec<f64> = (0..20).map(|i| ((i * 37 % 11) as f64 - 5.0) / 4.0).collect();
    let inputs = DenseMatrix::from_col_major(2, 10, xs).unwrap();
    let values = DenseMatrix::from_col_major(3, 10, (0..30).map(|i| (i % 7) as f64 / 3.0 - 1.0).collect()).unwrap();
    let sets = [
        (LossKind::Mse, Dataset::new("mse", inputs.clone(), Targets::Values(values), 0).unwrap()),
        (
            LossKind::CrossEntropy,
            Dataset::new("ce", inputs, Targets::Classes((0..10).map(|i| i % 3).collect()), 0).unwrap(),
        ),
    ];
    let probe: Vec<f64> = (0..p).map(|i| ((i * 13 % 17) as f64 - 8.0) / 8.0).collect();
    let mut ggn_err = 0.0f64;
    for (loss, data) in &sets {
        let mut explicit = DenseMatrix::zeros(p, p);
        for i in 0..data.len() {
            let jt = model.jacobian_t(data.input(i)).unwrap();
            let h = loss_output_hessian(*loss, &model.forward(data.input(i)).unwrap());
            let jthj = jt.matmul(&h).unwrap().matmul(&jt.transpose()).unwrap();
            for (e, v) in explicit.data_mut().iter_mut().zip(jthj.data()) {
                *e += v;
            }
        }
        let op = GgnOperator::new(&model, data, *loss).unwrap();
        ggn_err = ggn_err.max(relative(&op.apply_vec(&probe), &explicit.matvec(&probe).unwrap()));
    }

    let (mut fd_err, mut adj_err) = (0.0f64, 0.0f64);
    let h = 1e-6;
    let u = [0.3, -1.1, 0.7];
    for i in 0..10 {
        let x = sets[0].1.input(i);
        let shifted = |sign: f64| {
            let params: Vec<f64> = model.params().iter().zip(&probe).map(|(w, v)| w + sign * h * v).collect();
            MlpModel::from_params(model.layer_dims(), Activation::Tanh, params).unwrap().forward(x).unwrap()
        };
        let (plus, minus) = (shifted(1.0), shifted(-1.0));
        let fd: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let jv = model.jvp(x, &probe).unwrap();
        fd_err = fd_err.max(relative(&jv, &fd));
        let lhs = dot(&u, &jv);
        let rhs = dot(&model.vjp(x, &u).unwrap(), &probe);
        adj_err = adj_err.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    let (fast, time) = within(5, t.elapsed());
    outcome(
        ggn_err <= 1e-9 && fd_err <= 1e-6 && adj_err <= 1e-10 && fast,
        format!(
            "ggn {ggn_err:.1e} (1e-9), finite difference {fd_err:.1e} (1e-6), adjoint {adj_err:.1e} (1e-10), {time}"
        ),
    )
}

fn end_to_end_ood() -> Outcome {
    let t = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in 0..3 {
        let task = two_gaussian_task(8, 2000, 6.0, seed).unwrap();
        let init = MlpModel::new(&[8, 32, 32, 2], Activation::Tanh, seed).unwrap();
        let sgd = SgdConfig { seed, ..SgdConfig::default() };
        let (model, _) = train_sgd(&init, &task.id_train, LossKind::CrossEntropy, &sgd).unwrap();
        let acc = model.accuracy(&task.id_test).unwrap().unwrap();
        let ggn = GgnOperator::new(&model, &task.id_train, LossKind::CrossEntropy).unwrap();
        let basis =
            sketched_lanczos(&ggn, 20, SketchOperator::new(model.num_params(), 512, seed).unwrap(), seed).unwrap();
        let diag = ggn_diagonal(&model, &task.id_train, LossKind::CrossEntropy).unwrap();
        let scores =
            |ds: &Dataset, f: &dyn Fn(&[f64]) -> f64| (0..ds.len()).map(|i| f(ds.input(i))).collect::<Vec<_>>();
        let slu = |x: &[f64]| slu_score(&model, &basis, x).unwrap().score;
        let dl = |x: &[f64]| diag_laplace_score(&model, &diag, 1.0, x).unwrap();
        let a_slu = auroc(&scores(&task.id_test, &slu), &scores(&task.ood_test, &slu)).unwrap();
        let a_diag = auroc(&scores(&task.id_test, &dl), &scores(&task.ood_test, &dl)).unwrap();
        pass &= acc >= 0.95 && a_slu >= 0.85 && a_slu >= a_diag - 0.02;
        parts.push(format!("seed {seed}: acc {acc:.3} slu {a_slu:.3} diag {a_diag:.3}"));
    }
    let (fast, time) = within(120, t.elapsed());
    outcome(pass && fast, format!("{}; {time}", parts.join("; ")))
}

fn memory() -> Outcome {
    let (p, s, k) = (4096, 512, 16);
    let op = SyntheticFisher::new(p, 100, 0.9, 0).unwrap();
    let sketch = SketchOperator::new(p, s, 1).unwrap();
    let (basis, bytes) = peak_bytes(|| sketched_lanczos(&op, k, sketch, 2).unwrap());
    assert_eq!(basis.k(), k);
    let floats = bytes.div_ceil(8);
    let budget = 4 * p + s * (k + 1) + 1000;
    let closed = memory_account(p, s, k, 0)
        == MemoryAccount { preprocess: 4 * 4096 + 512 * 17, query: 4096 + 512 * 17 }
        && memory_account(100, 8, 3, 5) == MemoryAccount { preprocess: 400 + 32 + 500, query: 100 + 32 + 500 };
    outcome(
        floats <= budget && closed,
        format!("peak {floats} floats (budget {budget}), closed forms {}", if closed { "exact" } else { "wrong" }),
    )
}

fn brute_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut twice = 0u64;
    for o in ood {
        for i in id {
            twice += if o > i {
                2
            } else if o == i {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * id.len() * ood.len()) as f64
}

fn auroc_oracle() -> Outcome {
    let t = Instant::now();
    let mut state = 0x853c_49e6_748f_ea9bu64;
    let mut next = move || {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    let mut mismatches = 0;
    let mut with_ties = 0;
    for _ in 0..1000 {
        let levels = 1 + next() % 12;
        let (n_id, n_ood) = (next() % 40, next() % 40);
        let mut draw = |n: u64| (0..1 + n).map(|_| (next() % levels) as f64 * 0.25).collect::<Vec<_>>();
        let (id, ood) = (draw(n_id), draw(n_ood));
        with_ties += usize::from(id.iter().any(|a| ood.contains(a)));
        if auroc(&id, &ood).unwrap() != brute_auroc(&id, &ood) {
            mismatches += 1;
        }
    }
    let (fast, time) = within(5, t.elapsed());
    outcome(
        mismatches == 0 && fast,
        format!("{mismatches} mismatches in 1000 instances ({with_ties} with ties), {time}"),
    )
}

fn primary_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.to_string_lossy().ends_with(".timings.json") {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let runs: &[&[&str]] = &[
        &["train", "--n", "300", "--hidden", "16", "--epochs", "3"],
        &["precompute", "--n", "300", "--k0", "3", "--k1", "8", "-s", "128"],
        &["score", "--n", "300", "--limit", "30", "--output", "out/slu.csv"],
        &["score", "--n", "300", "--limit", "30", "--method", "lla", "--output", "out/lla.csv"],
        &["score", "--n", "300", "--limit", "30", "--method", "diag_laplace", "--output", "out/diag.csv"],
        &["bench", "lemma1", "--p", "512", "--k", "4", "-s", "64", "--trials", "20"],
        &["bench", "lemma2", "--p", "512", "--k", "4", "-s", "64", "--trials", "20"],
        &[
            "bench",
            "ablation",
            "--p",
            "600",
            "--rank",
            "20",
            "--k-grid",
            "4,8",
            "--s-grid",
            "64,128",
            "--m-queries",
            "4",
        ],
        &["bench", "projector", "--p", "200", "--rank", "40", "--k", "20", "--seeds", "0,1"],
        &["bench", "spectrum", "--p", "200", "--rank", "40", "--k-grid", "10", "--seeds", "0,1"],
    ];
    let exec = |dir: &Path| -> Option<Vec<(PathBuf, Vec<u8>)>> {
        for args in runs {
            let status = Command::new(env!("CARGO_BIN_EXE_slu"))
                .current_dir(dir)
                .env("RUST_LOG", "error")
                .args(*args)
                .status()
                .ok()?;
            if !status.success() {
                return None;
            }
        }
        Some(primary_files(dir))
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    match (exec(a.path()), exec(b.path())) {
        (Some(x), Some(y)) => {
            let differing: Vec<String> =
                x.iter().zip(&y).filter(|(l, r)| l != r).map(|(l, _)| l.0.display().to_string()).collect();
            let same = x.len() == y.len() && differing.is_empty();
            outcome(
                same,
                format!(
                    "{} commands, {} output files, {} differ {:?}",
                    runs.len(),
                    x.len(),
                    differing.len(),
                    differing
                ),
            )
        }
        _ => outcome(false, "a command failed".into()),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("lanczos eigenvalues match dense oracle", lanczos_correctness),
        ("low-memory projector agreement", projector),
        ("lemma 1 sketch envelope", lemma1),
        ("lemma 2 sketched-QR envelope", lemma2),
        ("synthetic ablation trends", ablation),
        ("slu vs exact score agreement", slu_exact_agreement),
        ("ggn, jvp and vjp oracles", ggn_oracle),
        ("end-to-end two-gaussian ood", end_to_end_ood),
        ("sketched lanczos memory budget", memory),
        ("auroc matches pair counting", auroc_oracle),
        ("cli reruns are byte-identical", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let r = check();
        failed += usize::from(!r.pass);
        println!("{} criterion {:>2} {name}: {}", if r.pass { "PASS" } else { "FAIL" }, i + 1, r.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
