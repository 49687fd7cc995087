//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (visible with `--nocapture`). Criteria share a process-wide gate so the
//! stated runtime budgets are measured without CPU contention.
//!
//! Criterion 8 checks the rejection trend of the data-shift audit across
//! sample sizes. Its small-sample legs are not attainable under the
//! closed-form decision rule (the threshold at m <= 50 exceeds what a
//! bounded kernel can produce on same-distribution text), so that test is
//! expected to fail on those legs; it states the criterion faithfully and
//! reports the measured fractions rather than weakening the bound.

use std::path::PathBuf;
use std::sync::{Mutex, OnceLock, PoisonError};
use std::time::{Duration, Instant};

use limeaudit::audit::{audit_dataset, fidelity, AuditReport, AuditRow};
use limeaudit::blackbox::{train_kernel_logistic, ScoreVector, Scorer, TrainParams};
use limeaudit::config::{AuditConfig, Provenance};
use limeaudit::dataset::{load_svmlight, Dataset};
use limeaudit::error::{Error, Result};
use limeaudit::external::ExternalScorer;
use limeaudit::lars::lars_lasso_select;
use limeaudit::lime::{explain, LimeParams};
use limeaudit::mmd::{mmd_biased, mmd_threshold, two_sample_test};
use limeaudit::numkit::{KernelSpec, SparseVector};
use limeaudit::stream::{CounterStream, UniformSource};

static GATE: Mutex<()> = Mutex::new(());

fn gate() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(PoisonError::into_inner)
}

fn report(criterion: &str, ok: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn bundled_corpus() -> (Dataset, Dataset) {
    let train = load_svmlight(&data_dir().join("train.svm")).expect("bundled train.svm");
    let test = load_svmlight(&data_dir().join("test.svm")).expect("bundled test.svm");
    (train, test)
}

// ---------------------------------------------------------------------------
// criterion 1: MMD oracle equivalence
// ---------------------------------------------------------------------------

/// Independent triple-loop MMD with its own dense kernel arithmetic.
fn mmd_oracle(xs: &[Vec<f64>], ys: &[Vec<f64>], rbf_gamma: Option<f64>) -> f64 {
    fn kernel(a: &[f64], b: &[f64], gamma: Option<f64>) -> f64 {
        match gamma {
            Some(g) => {
                let mut d2 = 0.0;
                for i in 0..a.len() {
                    d2 += (a[i] - b[i]) * (a[i] - b[i]);
                }
                (-g * d2).exp()
            }
            None => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for i in 0..a.len() {
                    dot += a[i] * b[i];
                    na += a[i] * a[i];
                    nb += b[i] * b[i];
                }
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    dot / (na.sqrt() * nb.sqrt())
                }
            }
        }
    }
    let m = xs.len() as f64;
    let mut kxx = 0.0;
    for a in xs {
        for b in xs {
            kxx += kernel(a, b, rbf_gamma);
        }
    }
    let mut kyy = 0.0;
    for a in ys {
        for b in ys {
            kyy += kernel(a, b, rbf_gamma);
        }
    }
    let mut kxy = 0.0;
    for a in xs {
        for b in ys {
            kxy += kernel(a, b, rbf_gamma);
        }
    }
    (kxx / (m * m) + kyy / (m * m) - 2.0 * kxy / (m * m)).max(0.0).sqrt()
}

#[test]
fn criterion_01_mmd_oracle_equivalence() {
    let _g = gate();
    let started = Instant::now();
    let mut stream = CounterStream::new(1001, &[1]);
    let mut worst: f64 = 0.0;
    for pair in 0..200 {
        let m = 1 + (stream.next_uniform() * 20.0) as usize;
        let d = 1 + (stream.next_uniform() * 10.0) as usize;
        let draw = |s: &mut CounterStream| -> Vec<Vec<f64>> {
            (0..m)
                .map(|_| (0..d).map(|_| s.next_normal() * 2.0).collect())
                .collect()
        };
        let xs = draw(&mut stream);
        let ys = draw(&mut stream);
        let to_sparse =
            |rows: &[Vec<f64>]| -> Vec<SparseVector> { rows.iter().map(|r| SparseVector::from_dense(r)).collect() };
        let (sx, sy) = (to_sparse(&xs), to_sparse(&ys));
        for (kernel, gamma) in [
            (KernelSpec::cosine(), None),
            (KernelSpec::rbf(0.5).unwrap(), Some(0.5)),
        ] {
            let fast = mmd_biased(&sx, &sy, &kernel).unwrap();
            let oracle = mmd_oracle(&xs, &ys, gamma);
            worst = worst.max((fast - oracle).abs());
            assert!(
                (fast - oracle).abs() < 1e-10,
                "pair {pair}: {fast} vs oracle {oracle}"
            );
        }
    }
    let elapsed = started.elapsed();
    let ok = worst < 1e-10 && elapsed < Duration::from_secs(10);
    report(
        "01 (mmd oracle equivalence)",
        ok,
        &format!("max |diff| {worst:.2e} over 200 pairs, {elapsed:.2?}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criteria 2 and 3: calibration and power of the two-sample test
// ---------------------------------------------------------------------------

fn gaussian_draw(seed: u64, rep: u64, side: u64, m: usize, d: usize, shift: &[f64]) -> Vec<SparseVector> {
    (0..m)
        .map(|i| {
            let mut s = CounterStream::new(seed, &[rep, side, i as u64]);
            let dense: Vec<f64> = (0..d)
                .map(|j| s.next_normal() + shift.get(j).copied().unwrap_or(0.0))
                .collect();
            SparseVector::from_dense(&dense)
        })
        .collect()
}

/// Rejection rate over 200 seeded repetitions; the median-heuristic
/// bandwidth is resolved on the first (reference) sample.
fn rejection_rate(seed: u64, shift: &[f64]) -> f64 {
    let (m, d, reps) = (100usize, 20usize, 200u64);
    let mut rejects = 0usize;
    for rep in 0..reps {
        let xs = gaussian_draw(seed, rep, 0, m, d, &[]);
        let ys = gaussian_draw(seed, rep, 1, m, d, shift);
        let kernel = KernelSpec::rbf_median_heuristic().resolve(&xs).unwrap();
        let outcome = two_sample_test(&xs, &ys, &kernel, 0.05).unwrap();
        rejects += outcome.reject as usize;
    }
    rejects as f64 / reps as f64
}

#[test]
fn criterion_02_test_calibration_under_the_null() {
    let _g = gate();
    let started = Instant::now();
    let rate = rejection_rate(2002, &[]);
    let elapsed = started.elapsed();
    let ok = rate <= 0.05 && elapsed < Duration::from_secs(60);
    report(
        "02 (calibration, same distribution)",
        ok,
        &format!("rejection rate {rate:.3} (need <= 0.05), {elapsed:.2?}"),
    );
    assert!(ok);
}

#[test]
fn criterion_03_test_power_under_mean_shift() {
    let _g = gate();
    let started = Instant::now();
    let shift = [2.0; 5];
    let rate = rejection_rate(2002, &shift);
    let elapsed = started.elapsed();
    let ok = rate >= 0.95 && elapsed < Duration::from_secs(60);
    report(
        "03 (power, 5-coordinate mean shift)",
        ok,
        &format!("rejection rate {rate:.3} (need >= 0.95), {elapsed:.2?}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criterion 4: threshold closed form
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_threshold_closed_form() {
    let _g = gate();
    let t200 = mmd_threshold(200, 0.05, 1.0).unwrap();
    let t50 = mmd_threshold(50, 0.05, 1.0).unwrap();
    let ok = (t200 - 0.3447747).abs() <= 1e-6 && (t50 - 0.6895494).abs() <= 1e-6;
    report(
        "04 (threshold closed form)",
        ok,
        &format!("threshold(200) = {t200:.7}, threshold(50) = {t50:.7}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criterion 5: fidelity properties on the unit grid
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_fidelity_grid_properties() {
    let _g = gate();
    let started = Instant::now();
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(201 * 201);
    for i in 0..=200 {
        for j in 0..=200 {
            let (f, g) = (i as f64 / 200.0, j as f64 / 200.0);
            let fid = fidelity(f, g).unwrap();
            assert!(fid > 0.0 && fid <= 1.0, "fidelity({f}, {g}) = {fid}");
            assert_eq!(fid == 1.0, f == g, "fidelity({f}, {g}) = {fid}");
            pairs.push(((f - g).abs(), fid));
        }
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for w in pairs.windows(2) {
        if w[1].0 > w[0].0 + 1e-12 {
            assert!(
                w[1].1 < w[0].1,
                "fidelity not strictly decreasing: gap {} -> {} but fidelity {} -> {}",
                w[0].0,
                w[1].0,
                w[0].1,
                w[1].1
            );
        }
    }
    let elapsed = started.elapsed();
    let ok = elapsed < Duration::from_secs(1);
    report(
        "05 (fidelity grid properties)",
        ok,
        &format!("201x201 grid verified, {elapsed:.2?}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criterion 6: linear-recovery of a black box that is exactly linear in the
// interpretable representation
// ---------------------------------------------------------------------------

struct LinearBinaryScorer {
    parent: SparseVector,
    coeffs: Vec<f64>,
    intercept: f64,
    classes: [i32; 2],
}

impl Scorer for LinearBinaryScorer {
    fn dim(&self) -> usize {
        self.parent.dim()
    }
    fn class_ids(&self) -> &[i32] {
        &self.classes
    }
    fn score(&self, x: &SparseVector) -> Result<ScoreVector> {
        let mut p = self.intercept;
        for (j, &feat) in self.parent.indices().iter().enumerate() {
            if x.get(feat) != 0.0 {
                p += self.coeffs[j];
            }
        }
        ScoreVector::new(vec![1.0 - p, p], self.classes.to_vec())
    }
}

#[test]
fn criterion_06_lime_linear_recovery() {
    let _g = gate();
    let started = Instant::now();
    let x = SparseVector::new(
        60,
        (0..10u32).map(|i| i * 5 + 1).collect(),
        (0..10).map(|i| 1.0 + 0.2 * i as f64).collect(),
    )
    .unwrap();
    let coeffs: Vec<f64> = (0..10)
        .map(|i| 0.028 * ((i % 3) as f64 - 1.0) + 0.006 * i as f64)
        .collect();
    let scorer = LinearBinaryScorer {
        parent: x.clone(),
        coeffs: coeffs.clone(),
        intercept: 0.5,
        classes: [0, 1],
    };
    let expl = explain(
        &x,
        1,
        &scorer,
        &LimeParams {
            n_samples: 2000,
            k_features: 10,
            proximity: KernelSpec::cosine(),
            ridge: 1e-6,
            seed: 606,
        },
    )
    .unwrap();

    let mut selected = expl.selected.clone();
    selected.sort_unstable();
    let top_k_exact = selected == x.indices().to_vec();
    let mut max_err: f64 = 0.0;
    for fw in &expl.features {
        max_err = max_err.max((fw.weight - coeffs[fw.position]).abs());
    }
    let elapsed = started.elapsed();
    let ok = top_k_exact && max_err < 1e-3 && expl.loss < 1e-6 && elapsed < Duration::from_secs(30);
    report(
        "06 (linear recovery)",
        ok,
        &format!(
            "top-k exact: {top_k_exact}, max weight error {max_err:.2e}, loss {:.2e}, {elapsed:.2?}",
            expl.loss
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criterion 7: first LARS entry equals the weighted-correlation argmax
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_lars_entry_property() {
    let _g = gate();
    let started = Instant::now();
    let mut s = CounterStream::new(707, &[0]);
    let mut checked = 0;
    while checked < 100 {
        let d = 2 + (s.next_uniform() * 11.0) as usize;
        let n = 5 + (s.next_uniform() * 46.0) as usize;
        let rows: Vec<Vec<u8>> = (0..n)
            .map(|_| (0..d).map(|_| (s.next_uniform() < 0.5) as u8).collect())
            .collect();
        let w: Vec<f64> = (0..n).map(|_| 0.05 + 0.95 * s.next_uniform()).collect();
        let y: Vec<f64> = (0..n).map(|_| s.next_normal()).collect();

        // direct scan: weighted correlation with the centered target
        let rw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        let ty: Vec<f64> = y.iter().zip(&rw).map(|(a, b)| a * b).collect();
        let y_mean = ty.iter().sum::<f64>() / n as f64;
        let yc: Vec<f64> = ty.iter().map(|v| v - y_mean).collect();
        let y_norm = yc.iter().map(|v| v * v).sum::<f64>().sqrt();
        let corr: Vec<f64> = (0..d)
            .map(|j| {
                let col: Vec<f64> = (0..n).map(|i| rows[i][j] as f64 * rw[i]).collect();
                let mean = col.iter().sum::<f64>() / n as f64;
                let cc: Vec<f64> = col.iter().map(|v| v - mean).collect();
                let norm = cc.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm <= 1e-12 || y_norm <= 1e-12 {
                    0.0
                } else {
                    (cc.iter().zip(&yc).map(|(a, b)| a * b).sum::<f64>() / (norm * y_norm)).abs()
                }
            })
            .collect();
        let best = corr.iter().fold(0.0f64, |a, &c| a.max(c));
        if best < 1e-9 {
            continue;
        }
        let sel = lars_lasso_select(&rows, &w, &y, 1).unwrap();
        assert_eq!(sel.len(), 1);
        assert!(
            corr[sel[0]] >= best - 1e-9,
            "problem {checked}: first entry {} has |corr| {}, argmax {}",
            sel[0],
            corr[sel[0]],
            best
        );
        checked += 1;
    }
    let elapsed = started.elapsed();
    let ok = elapsed < Duration::from_secs(10);
    report(
        "07 (lars entry property)",
        ok,
        &format!("100 weighted problems agree with the correlation scan, {elapsed:.2?}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criteria 8 and 9: qualitative trend reproduction on the bundled corpus
// ---------------------------------------------------------------------------

struct CorpusAudit {
    report: AuditReport,
    _rows: Vec<AuditRow>,
    elapsed: Duration,
}

fn corpus_audit() -> &'static CorpusAudit {
    static AUDIT: OnceLock<CorpusAudit> = OnceLock::new();
    AUDIT.get_or_init(|| {
        let (train, test) = bundled_corpus();
        let model = train_kernel_logistic(
            &train.instances,
            &train.labels,
            &KernelSpec::cosine(),
            &TrainParams::default(),
        )
        .expect("bundled corpus trains");
        let config = AuditConfig::default();
        let provenance = Provenance::new(&config, "", "", "builtin".into());
        let started = Instant::now();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("single-core pool");
        let (report, rows) = pool
            .install(|| {
                audit_dataset(
                    &test.instances,
                    &model,
                    &train.instances,
                    &config,
                    provenance,
                )
            })
            .map_err(|f| f.error)
            .expect("audit completes");
        CorpusAudit {
            report,
            _rows: rows,
            elapsed: started.elapsed(),
        }
    })
}

#[test]
fn criterion_08_data_shift_trend_on_bundled_corpus() {
    let _g = gate();
    let audit = corpus_audit();
    let mut detail = String::new();
    let mut reject_small_n_ok = true;
    let mut reject_n2_ok = true;
    let mut monotone_ok = true;
    let mut prev_scaled = f64::NEG_INFINITY;
    for agg in &audit.report.aggregates {
        let frac = agg.data_shift.reject_fraction;
        detail.push_str(&format!("n={} reject {:.3}; ", agg.n, frac));
        if agg.n >= 20 && frac < 0.95 {
            reject_small_n_ok = false;
        }
        if agg.n == 2 && frac < 0.5 {
            reject_n2_ok = false;
        }
        if agg.data_shift.scaled_mean < prev_scaled {
            monotone_ok = false;
        }
        prev_scaled = agg.data_shift.scaled_mean;
    }
    let within_budget = audit.elapsed < Duration::from_secs(300);
    detail.push_str(&format!(
        "scaled_stat monotone: {monotone_ok}; single-core {:.1?}",
        audit.elapsed
    ));
    let ok = reject_small_n_ok && reject_n2_ok && monotone_ok && within_budget;
    report("08 (data-shift trend, bundled corpus)", ok, &detail);
    assert!(
        ok,
        "rejection >= 0.95 for n >= 20: {reject_small_n_ok}; rejection >= 0.5 at n = 2: {reject_n2_ok}; \
         scaled_stat non-decreasing: {monotone_ok}; runtime within budget: {within_budget} — {detail}"
    );
}

#[test]
fn criterion_09_label_shift_orders_below_data_shift() {
    let _g = gate();
    let audit = corpus_audit();
    let aggs = &audit.report.aggregates;
    let n2 = aggs.iter().find(|a| a.n == 2).expect("n=2 row");
    let n2_ok = n2.label_shift.reject_fraction <= n2.data_shift.reject_fraction;
    let ordered = aggs
        .iter()
        .filter(|a| a.label_shift.mmd_mean <= a.data_shift.mmd_mean)
        .count();
    let ok = n2_ok && ordered >= 6;
    report(
        "09 (label-shift below data-shift)",
        ok,
        &format!(
            "label reject {:.3} <= data reject {:.3} at n=2: {n2_ok}; label mmd <= data mmd on {ordered}/{} grid values (need >= 6)",
            n2.label_shift.reject_fraction,
            n2.data_shift.reject_fraction,
            aggs.len()
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// criteria 10 and 11: end-to-end determinism and null-mode calibration of
// the command-line audit
// ---------------------------------------------------------------------------

fn run_audit_cli(dir: &std::path::Path, extra: &[&str]) -> std::process::Output {
    let data = data_dir();
    let model_path = dir.join("model.json");
    if !model_path.exists() {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_limeaudit"))
            .args([
                "train",
                "--dataset",
                data.join("train.svm").to_str().unwrap(),
                "--out",
                model_path.to_str().unwrap(),
            ])
            .output()
            .expect("train runs");
        assert!(status.status.success(), "train failed: {status:?}");
    }
    let mut args = vec![
        "audit".to_string(),
        "--train".into(),
        data.join("train.svm").to_str().unwrap().into(),
        "--test".into(),
        data.join("test.svm").to_str().unwrap().into(),
        "--model".into(),
        model_path.to_str().unwrap().into(),
        "--class".into(),
        "1".into(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    std::process::Command::new(env!("CARGO_BIN_EXE_limeaudit"))
        .args(&args)
        .output()
        .expect("audit runs")
}

#[test]
fn criterion_10_jobs_and_rerun_determinism() {
    let _g = gate();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let grid = "2,5,10,20";
    let out1 = dir.join("j1");
    let out8 = dir.join("j8");
    let out8b = dir.join("j8b");
    for (out, jobs) in [(&out1, "1"), (&out8, "8"), (&out8b, "8")] {
        let output = run_audit_cli(
            dir,
            &[
                "--n", grid, "--seed", "11", "--jobs", jobs, "--out", out.to_str().unwrap(),
            ],
        );
        assert!(output.status.success(), "audit failed: {output:?}");
    }
    let j1 = std::fs::read(out1.join("report.json")).unwrap();
    let j8 = std::fs::read(out8.join("report.json")).unwrap();
    let j8b = std::fs::read(out8b.join("report.json")).unwrap();
    let jobs_identical = j1 == j8;
    let rerun_identical = j8 == j8b;
    let rows_identical = std::fs::read(out1.join("rows.csv")).unwrap()
        == std::fs::read(out8.join("rows.csv")).unwrap();
    let ok = jobs_identical && rerun_identical && rows_identical;
    report(
        "10 (determinism across jobs and reruns)",
        ok,
        &format!("jobs 1 vs 8 identical: {jobs_identical}; rerun identical: {rerun_identical}; rows identical: {rows_identical}"),
    );
    assert!(ok);
}

#[test]
fn criterion_11_null_mode_rarely_rejects() {
    let _g = gate();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = dir.join("null");
    let output = run_audit_cli(
        dir,
        &[
            "--n",
            "2,5,10,20,50,100,200",
            "--null-mode",
            "--seed",
            "42",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert!(output.status.success(), "null-mode audit failed: {output:?}");
    let report_json: AuditReport =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let mut detail = String::new();
    let mut ok = true;
    for agg in &report_json.aggregates {
        detail.push_str(&format!("n={} reject {:.3}; ", agg.n, agg.data_shift.reject_fraction));
        if agg.data_shift.reject_fraction > 0.08 {
            ok = false;
        }
    }
    report("11 (null-mode calibration)", ok, &detail);
    assert!(ok, "{detail}");
}

// ---------------------------------------------------------------------------
// criterion 12: external scorer protocol
// ---------------------------------------------------------------------------

fn echo_command(malform: Option<&str>) -> Vec<String> {
    let mut cmd = vec![env!("CARGO_BIN_EXE_limeaudit").to_string(), "echo-scorer".into()];
    if let Some(kind) = malform {
        cmd.push("--malform".into());
        cmd.push(kind.into());
    }
    cmd
}

#[test]
fn criterion_12_external_scorer_protocol() {
    let _g = gate();
    let dim = 12usize;
    let mut stream = CounterStream::new(1212, &[0]);
    let instances: Vec<SparseVector> = (0..1000)
        .map(|_| {
            let dense: Vec<f64> = (0..dim)
                .map(|_| {
                    if stream.next_uniform() < 0.4 {
                        (stream.next_uniform() * 5.0).ceil()
                    } else {
                        0.0
                    }
                })
                .collect();
            SparseVector::from_dense(&dense)
        })
        .collect();

    let scorer = ExternalScorer::spawn(&echo_command(None), dim, 2, Duration::from_secs(20))
        .expect("echo scorer spawns");
    let scores = scorer.score_batch(&instances).expect("pipelined batch");
    let pipelined_ok = scores.len() == 1000
        && scores
            .iter()
            .all(|s| (s.scores().iter().sum::<f64>() - 1.0).abs() <= 1e-6);

    let mut error_paths_ok = true;
    for kind in ["unnormalized", "wrong-id", "garbage", "silent"] {
        let timeout = if kind == "silent" {
            Duration::from_millis(400)
        } else {
            Duration::from_secs(20)
        };
        let bad = ExternalScorer::spawn(&echo_command(Some(kind)), dim, 2, timeout)
            .expect("misbehaving scorer spawns");
        match bad.score(&instances[0]) {
            Err(Error::Protocol { .. }) => {}
            other => {
                error_paths_ok = false;
                println!("malform {kind}: expected protocol error, got {other:?}");
            }
        }
    }
    let ok = pipelined_ok && error_paths_ok;
    report(
        "12 (external scorer protocol)",
        ok,
        &format!("1000 pipelined responses in order: {pipelined_ok}; malformed responses rejected: {error_paths_ok}"),
    );
    assert!(ok);
}
