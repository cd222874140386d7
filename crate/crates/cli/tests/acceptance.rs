//! Acceptance suite. Each test prints one `acceptance N: PASS|FAIL` line
//! straight to stdout so the verdicts show up even when output capture is on.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use feedback_kmeans::feedback::{evaluate_clustering, EvalStream, FeedbackProvider};
use feedback_kmeans::harness::{expected_relative_change, run_experiment, ExperimentConfig, FluctuationPairing, Variant};
use feedback_kmeans::kmeans::{lloyd_run, update_centroids, KMeansConfig};
use feedback_kmeans::operators::{bisect, is_splittable};
use feedback_kmeans::rng::substream;
use feedback_kmeans::synth::{generate, standardize, GeneratorConfig};
use feedback_kmeans::{run, Clustering, Dataset, EngineConfig, Method, OracleProfile};

fn verdict(n: usize, pass: bool, detail: &str) {
    let line = format!("acceptance {n:>2}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn random_dataset(rng: &mut impl Rng, n: usize, dim: usize) -> Dataset {
    Dataset::from_points(
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect(),
    )
    .unwrap()
}

fn planted_20k() -> (Dataset, OracleProfile) {
    let cfg = GeneratorConfig::planted(20_000, 2024);
    let (ds, _) = standardize(&generate(&cfg).unwrap());
    (ds, cfg.oracle_profile())
}

/// Clustering that puts each hidden segment in its own cluster.
fn segment_clustering(ds: &Dataset) -> Clustering {
    let segs = ds.hidden_segments().unwrap();
    let mut ids: Vec<u32> = segs.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let assignment: Vec<usize> = segs.iter().map(|s| ids.binary_search(s).unwrap()).collect();
    let (centroids, empties) = update_centroids(ds, &assignment, ids.len());
    assert!(empties.is_empty());
    Clustering::new(assignment, centroids)
}

#[test]
fn a01_flat_sum_identity() {
    let start = Instant::now();
    let mut rng = substream(101, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let dim = rng.random_range(1..=8);
        let n = rng.random_range(2..=500);
        let k = rng.random_range(1..=n.min(12));
        let ds = random_dataset(&mut rng, n, dim);
        // first k points seed the k clusters so none is empty
        let assignment: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
        let centroids: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let c = Clustering::new(assignment.clone(), centroids.clone());
        let got = evaluate_clustering(&ds, &c, &FeedbackProvider::Rss, EvalStream::new(0, 0))
            .unwrap()
            .aggregate;
        let mut flat = 0.0;
        for (i, &a) in assignment.iter().enumerate() {
            for d in 0..dim {
                flat += (ds.point(i)[d] - centroids[a][d]).powi(2);
            }
        }
        flat /= n as f64;
        worst = worst.max((got - flat).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-12 && elapsed < Duration::from_secs(10);
    verdict(1, pass, &format!("max |aggregate - flat| = {worst:e}, {elapsed:.2?}"));
    assert!(pass);
}

#[test]
fn a02_lloyd_monotone() {
    let start = Instant::now();
    let mut rng = substream(202, &[]);
    let mut violations = 0;
    for run in 0..50u64 {
        let dim = rng.random_range(1..=6);
        let n = rng.random_range(50..=800);
        let k = rng.random_range(2..=10);
        let ds = random_dataset(&mut rng, n, dim);
        let r = lloyd_run(&ds, &KMeansConfig::new(k, run)).unwrap();
        for w in r.objective_history.windows(2) {
            if w[1] > w[0] + 1e-12 * w[0].max(1.0) {
                violations += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = violations == 0 && elapsed < Duration::from_secs(30);
    verdict(2, pass, &format!("{violations} increases over 50 runs, {elapsed:.2?}"));
    assert!(pass);
}

#[test]
fn a03_sme_preserves_k() {
    let mut violations = 0;
    let mut cells = 0;
    for data_seed in 0..3u64 {
        let (ds, oracle) = {
            let cfg = GeneratorConfig::planted(1500, data_seed);
            (standardize(&generate(&cfg).unwrap()).0, cfg.oracle_profile())
        };
        let custom = FeedbackProvider::customizability(oracle).unwrap();
        for k in 2..7 {
            for seed in 0..2u64 {
                let provider = if seed == 0 { &FeedbackProvider::Rss } else { &custom };
                let t = run(&ds, k, &EngineConfig::new(Method::Sme, seed), provider).unwrap();
                cells += 1;
                violations += t.steps.iter().filter(|s| s.k != k).count();
            }
        }
    }
    let pass = violations == 0 && cells == 30;
    verdict(3, pass, &format!("{violations} k changes over {cells} cells"));
    assert!(pass);
}

#[test]
fn a04_operator_count_parity() {
    let cfg = GeneratorConfig::planted(3000, 4);
    let (ds, _) = standardize(&generate(&cfg).unwrap());
    let sm = run(&ds, 3, &EngineConfig::new(Method::Sm, 1).with_iterations(12), &FeedbackProvider::Rss).unwrap();
    let sme = run(&ds, 3, &EngineConfig::new(Method::Sme, 1).with_iterations(6), &FeedbackProvider::Rss).unwrap();
    let got = (sm.action_count(), sm.steps.len(), sme.action_count(), sme.steps.len());
    let pass = got == (12, 13, 12, 7);
    verdict(
        4,
        pass,
        &format!("S/M {} actions / {} evals, SME {} actions / {} evals", got.0, got.1, got.2, got.3),
    );
    assert!(pass);
}

#[test]
fn a05_split_improves_parent() {
    let mut rng = substream(505, &[]);
    let mut violations = 0;
    let mut degenerate = 0;
    let mut splits = 0;
    let mut attempt = 0u64;
    while splits < 100 {
        attempt += 1;
        let dim = rng.random_range(1..=5);
        let n = rng.random_range(4..=300);
        let mut ds = random_dataset(&mut rng, n, dim);
        let duplicates = attempt.is_multiple_of(10);
        if duplicates {
            // one point repeated n times
            let p = ds.point(0).to_vec();
            ds = Dataset::from_points(vec![p; n]).unwrap();
        }
        let k = if duplicates { 1 } else { rng.random_range(1..=4.min(n)) };
        let init = lloyd_run(&ds, &KMeansConfig::new(k, attempt)).unwrap().clustering;
        let members = init.members();
        let target = rng.random_range(0..k);
        if !is_splittable(&ds, &members[target]) {
            degenerate += 1;
            continue;
        }
        let b = bisect(&ds, &init, target, attempt).unwrap();
        let sse = |idx: &[usize], m: &[f64]| -> f64 {
            idx.iter()
                .map(|&i| ds.point(i).iter().zip(m).map(|(x, c)| (x - c).powi(2)).sum::<f64>())
                .sum()
        };
        let parent = sse(&members[target], &init.centroids[target]);
        let children = sse(&b.side_members(0), &b.centroids[0]) + sse(&b.side_members(1), &b.centroids[1]);
        if children > parent + 1e-12 * parent.max(1.0) {
            violations += 1;
        }
        splits += 1;
    }
    let pass = violations == 0;
    verdict(
        5,
        pass,
        &format!("{violations} violations in {splits} splits, {degenerate} duplicate-point clusters skipped"),
    );
    assert!(pass);
}

#[test]
fn a06_oracle_closed_form() {
    let n = 600;
    let mut rng = substream(606, &[]);
    let ds = random_dataset(&mut rng, n, 8)
        .with_hidden_segments(vec![0; n])
        .unwrap()
        .with_bookings((0..n as u64).map(|i| (i * 7919) % 113).collect())
        .unwrap();
    let mut profile = OracleProfile::new([(0u32, vec![2.0, 0.0, 0.0, 0.0])].into_iter().collect()).with_noise(0.0);
    profile.score_offset = 10.0;
    let provider = FeedbackProvider::customizability(profile).unwrap();
    let (centroids, _) = update_centroids(&ds, &vec![0; n], 1);
    let c = Clustering::new(vec![0; n], centroids);
    let got = evaluate_clustering(&ds, &c, &provider, EvalStream::new(6, 0)).unwrap().aggregate;
    let expected = (10.0 - 6.0) / 6.0;
    let pass = (got - expected).abs() <= 1e-9;
    verdict(6, pass, &format!("customizability {got}, expected {expected}"));
    assert!(pass);
}

#[test]
fn a07_fluctuation_statistic() {
    let mut cfg = GeneratorConfig::planted(4000, 7);
    let (ds, _) = standardize(&generate(&cfg).unwrap());
    let c = segment_clustering(&ds);
    cfg.oracle.noise_sigma = 0.0;
    let quiet = FeedbackProvider::customizability(cfg.oracle_profile()).unwrap();
    cfg.oracle.noise_sigma = 0.05;
    let noisy = FeedbackProvider::customizability(cfg.oracle_profile()).unwrap();
    let at_zero = expected_relative_change(&ds, &c, &quiet, 10, 77, FluctuationPairing::VsFirst).unwrap();
    let at_noise = expected_relative_change(&ds, &c, &noisy, 10, 77, FluctuationPairing::VsFirst).unwrap();
    let pass = at_zero == 0.0 && at_noise > 0.0;
    verdict(7, pass, &format!("sigma=0: {at_zero}, sigma=0.05: {at_noise:e} over 10 calls"));
    assert!(pass);
}

#[test]
fn a08_sme_both_feedbacks_improve() {
    let start = Instant::now();
    let (ds, oracle) = planted_20k();
    let cfg = ExperimentConfig {
        variants: vec![Variant::ALL[0], Variant::ALL[1]],
        repeats: 3,
        fluctuation_calls: 0,
        seed: 8,
        ..Default::default()
    };
    let rep = run_experiment(&ds, &cfg, Some(&oracle)).unwrap();
    let elapsed = start.elapsed();
    let rss = rep.summary.variant(Variant::ALL[0]).and_then(|v| v.mean_impact);
    let custom = rep.summary.variant(Variant::ALL[1]).and_then(|v| v.mean_impact);
    let pass = match (rss, custom) {
        (Some(r), Some(c)) => {
            r > 0.0
                && c > 0.0
                && (0.1..=10.0).contains(&(c / r))
                && rep.summary.failed_cells == 0
                && elapsed < Duration::from_secs(300)
        }
        _ => false,
    };
    verdict(
        8,
        pass,
        &format!(
            "SME(RSS) {rss:?}, SME(Custom.) {custom:?}, ratio {:?}, {elapsed:.2?}",
            custom.zip(rss).map(|(c, r)| c / r)
        ),
    );
    assert!(pass);
}

fn dump_traces(rep: &feedback_kmeans::harness::ExperimentReport) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance9_traces");
    std::fs::create_dir_all(&dir).unwrap();
    for cell in &rep.cells {
        if let Some(t) = &cell.trace {
            let name = format!("{}_{}_k{}_r{}.jsonl", cell.variant.method.name(), cell.variant.feedback.name(), cell.k, cell.repeat);
            t.save_jsonl(&dir.join(name)).unwrap();
        }
    }
    dir
}

#[test]
fn a09_sm_custom_leads_on_customizability() {
    let start = Instant::now();
    let (ds, oracle) = planted_20k();
    let cfg = ExperimentConfig {
        repeats: 5,
        fluctuation_calls: 0,
        seed: 9,
        ..Default::default()
    };
    let rep = run_experiment(&ds, &cfg, Some(&oracle)).unwrap();
    let elapsed = start.elapsed();
    let custom = |v: Variant| rep.summary.variant(v).and_then(|s| s.mean_custom_impact);
    let lead = custom(Variant::ALL[3]);
    let rivals = [custom(Variant::ALL[0]), custom(Variant::ALL[2])];
    let pass = rep.summary.failed_cells == 0
        && elapsed < Duration::from_secs(600)
        && match lead {
            Some(l) => rivals.iter().all(|r| r.is_some_and(|r| l >= r)),
            None => false,
        };
    let mut detail = format!(
        "S/M(Custom.) {lead:?} vs SME(RSS) {:?}, S/M(RSS) {:?}, {elapsed:.2?}",
        rivals[0], rivals[1]
    );
    if !pass {
        detail.push_str(&format!(", traces in {}", dump_traces(&rep).display()));
    }
    verdict(9, pass, &detail);
    assert!(pass);
}

fn cli(args: &[&str], threads: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_feedback-kmeans"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("FEEDBACK_KMEANS_THREADS", t),
        None => cmd.env_remove("FEEDBACK_KMEANS_THREADS"),
    };
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Runs generate, run (both methods and feedbacks) and experiment into `dir`.
fn cli_session(dir: &Path, threads: Option<&str>) -> Vec<PathBuf> {
    let d = |p: &str| dir.join(p).to_string_lossy().into_owned();
    cli(&["generate", "--n-points", "3000", "--seed", "10", "--out", &d("data")], threads);
    let data = d("data/dataset.csv");
    let oracle = d("data/oracle.json");
    let mut files = vec![dir.join("data/dataset.csv"), dir.join("data/oracle.json")];
    for (method, feedback) in [("sme", "rss"), ("sm", "custom")] {
        let trace = format!("{method}_{feedback}.jsonl");
        cli(
            &[
                "run", "--data", &data, "--oracle", &oracle, "--method", method, "--feedback", feedback, "--k", "3",
                "--seed", "5", "--out", &d(&trace),
            ],
            threads,
        );
        files.push(dir.join(trace));
    }
    cli(
        &[
            "experiment", "--data", &data, "--oracle", &oracle, "--k-values", "2,4", "--repeats", "2", "--seed", "3",
            "--out", &d("exp"),
        ],
        threads,
    );
    files.extend(["report.csv", "report.json", "summary.json"].map(|f| dir.join("exp").join(f)));
    files
}

#[test]
fn a10_cli_outputs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let fa = cli_session(a.path(), None);
    let fb = cli_session(b.path(), None);
    let fc = cli_session(c.path(), Some("1"));
    let mut differing = Vec::new();
    for ((x, y), z) in fa.iter().zip(&fb).zip(&fc) {
        let bx = std::fs::read(x).unwrap();
        if bx != std::fs::read(y).unwrap() || bx != std::fs::read(z).unwrap() {
            differing.push(x.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    let pass = differing.is_empty();
    verdict(
        10,
        pass,
        &format!("{} files compared across 3 sessions (one single-threaded), differing: {differing:?}", fa.len()),
    );
    assert!(pass);
}
