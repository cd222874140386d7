use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use feedback_kmeans::harness::{impact, run_experiment, ExperimentConfig, FluctuationPairing, Variant};
use feedback_kmeans::ingest::{read_csv, write_csv, write_report, ReadOptions, ReportFormat};
use feedback_kmeans::synth::{generate, GeneratorConfig};
use feedback_kmeans::trace::{check_records, read_jsonl};
use feedback_kmeans::{
    run, validate_clustering, Clustering, EngineConfig, FeedbackKind, FeedbackProvider, Method, OracleProfile,
};

#[derive(Parser)]
#[command(name = "feedback-kmeans", version, about = "Feedback-driven split/merge clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted flight-search dataset and its oracle profile.
    Generate(GenerateArgs),
    /// Run one engine and write its trace.
    Run(RunArgs),
    /// Run the method comparison grid.
    Experiment(ExperimentArgs),
    /// Check a trace (and optionally a clustering) for invariant violations.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator config JSON. Without it a planted 4-segment mixture is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// sme or sm
    #[arg(long)]
    method: Option<String>,
    /// rss or custom
    #[arg(long)]
    feedback: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stop once the best evaluation reaches this value.
    #[arg(long)]
    target: Option<f64>,
    /// Oracle profile JSON, required for custom feedback.
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Trace output (JSON lines).
    #[arg(long, default_value = "trace.jsonl")]
    out: PathBuf,
    /// Cluster raw features instead of z-scores.
    #[arg(long)]
    raw: bool,
    /// Run config JSON; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the best clustering as JSON.
    #[arg(long)]
    save_clustering: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunFile {
    data: Option<PathBuf>,
    method: Option<String>,
    feedback: Option<String>,
    k: Option<usize>,
    iterations: Option<usize>,
    seed: Option<u64>,
    target: Option<f64>,
    oracle: Option<PathBuf>,
    raw: Option<bool>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Comma-separated method:feedback list, e.g. sme:rss,sm:custom
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    k_values: Option<Vec<usize>>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sme_iterations: Option<usize>,
    #[arg(long)]
    sm_iterations: Option<usize>,
    /// Oracle calls per fluctuation estimate (0 disables it).
    #[arg(long)]
    fluctuation_calls: Option<usize>,
    /// Compare every call against the first (vs-first) or all pairs.
    #[arg(long)]
    pairing: Option<String>,
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentFile {
    data: Option<PathBuf>,
    oracle: Option<PathBuf>,
    methods: Option<Vec<String>>,
    k_values: Option<Vec<usize>>,
    repeats: Option<usize>,
    seed: Option<u64>,
    sme_iterations: Option<usize>,
    sm_iterations: Option<usize>,
    fluctuation_calls: Option<usize>,
    pairing: Option<String>,
    raw: Option<bool>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, requires = "clustering")]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    clustering: Option<PathBuf>,
    #[arg(long)]
    raw: bool,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_config<T: Default + for<'de> Deserialize<'de>>(path: Option<&Path>) -> anyhow::Result<T> {
    path.map_or_else(|| Ok(T::default()), read_json)
}

fn load_data(path: &Path, raw: bool) -> anyhow::Result<feedback_kmeans::Dataset> {
    let loaded = read_csv(
        path,
        ReadOptions {
            has_hidden_columns: true,
            standardize: !raw,
        },
    )?;
    Ok(loaded.dataset)
}

fn generate_cmd(args: GenerateArgs) -> anyhow::Result<bool> {
    let mut config = match &args.config {
        Some(p) => read_json::<GeneratorConfig>(p)?,
        None => GeneratorConfig::planted(args.n_points.unwrap_or(20_000), args.seed.unwrap_or(0)),
    };
    if let Some(n) = args.n_points {
        config.n_points = n;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate()?;
    let ds = generate(&config)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_csv(&ds, &args.out.join("dataset.csv"))?;
    config.oracle_profile().save(&args.out.join("oracle.json"))?;

    println!("points: {}", ds.len());
    let mut per_segment: BTreeMap<u32, usize> = BTreeMap::new();
    for &s in ds.hidden_segments().unwrap_or(&[]) {
        *per_segment.entry(s).or_default() += 1;
    }
    for (s, n) in &per_segment {
        println!("segment {s}: {n} points");
    }
    if let Some(b) = ds.bookings() {
        let total: u64 = b.iter().sum();
        let max = b.iter().max().copied().unwrap_or(0);
        println!(
            "bookings: total {total}, mean {:.3}, max {max}",
            total as f64 / b.len() as f64
        );
    }
    println!("wrote {}", args.out.display());
    Ok(true)
}

fn provider_for(kind: FeedbackKind, oracle: Option<&Path>) -> anyhow::Result<FeedbackProvider> {
    Ok(match kind {
        FeedbackKind::Rss => FeedbackProvider::Rss,
        FeedbackKind::Customizability => {
            let Some(path) = oracle else {
                bail!("custom feedback requires --oracle <PROFILE.json>");
            };
            FeedbackProvider::customizability(OracleProfile::load(path)?)?
        }
    })
}

fn run_cmd(args: RunArgs) -> anyhow::Result<bool> {
    let file: RunFile = load_config(args.config.as_deref())?;
    let data = args.data.or(file.data).context("missing --data")?;
    let method = Method::parse(&args.method.or(file.method).unwrap_or_else(|| "sme".into()))?;
    let feedback = FeedbackKind::parse(&args.feedback.or(file.feedback).unwrap_or_else(|| "rss".into()))?;
    let k = args.k.or(file.k).context("missing --k")?;
    let iterations = args.iterations.or(file.iterations).unwrap_or(method.default_iterations());
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let target = args.target.or(file.target);
    let raw = args.raw || file.raw.unwrap_or(false);

    let provider = provider_for(feedback, args.oracle.or(file.oracle).as_deref())?;
    let ds = load_data(&data, raw)?;
    let config = EngineConfig::new(method, seed)
        .with_iterations(iterations)
        .with_target(target);
    let trace = run(&ds, k, &config, &provider)?;
    trace.save_jsonl(&args.out)?;
    if let Some(p) = &args.save_clustering {
        let json = serde_json::to_string(&trace.best_clustering)?;
        fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
    }

    for r in trace.records() {
        println!(
            "step {:>2}  {:<14} k={:<3} {}={}{}",
            r.step,
            r.action,
            r.k,
            feedback.name(),
            r.aggregate,
            if r.is_best { "  *" } else { "" }
        );
    }
    let initial = trace.initial_evaluation();
    println!("initial: {initial}");
    println!("best: {} (step {}, k={})", trace.best_evaluation, trace.best_step_index, trace.best_clustering.k());
    match impact(initial, trace.best_evaluation, trace.sense()) {
        Ok(v) => println!("impact: {v}"),
        Err(e) => println!("impact: undefined ({e})"),
    }
    if let Some(reason) = &trace.stalled {
        println!("stalled: {reason}");
    }
    Ok(true)
}

fn experiment_cmd(args: ExperimentArgs) -> anyhow::Result<bool> {
    let file: ExperimentFile = load_config(args.config.as_deref())?;
    let data = args.data.or(file.data).context("missing --data")?;
    let oracle_path = args.oracle.or(file.oracle);
    let mut config = ExperimentConfig::default();
    if let Some(methods) = args.methods.or(file.methods) {
        config.variants = methods.iter().map(|m| Variant::parse(m)).collect::<Result<_, _>>()?;
    }
    if let Some(k) = args.k_values.or(file.k_values) {
        config.k_values = k;
    }
    if let Some(r) = args.repeats.or(file.repeats) {
        config.repeats = r;
    }
    if let Some(s) = args.seed.or(file.seed) {
        config.seed = s;
    }
    if let Some(i) = args.sme_iterations.or(file.sme_iterations) {
        config.sme_iterations = i;
    }
    if let Some(i) = args.sm_iterations.or(file.sm_iterations) {
        config.sm_iterations = i;
    }
    if let Some(c) = args.fluctuation_calls.or(file.fluctuation_calls) {
        config.fluctuation_calls = c;
    }
    if let Some(p) = args.pairing.or(file.pairing) {
        config.pairing = match p.as_str() {
            "vs-first" => FluctuationPairing::VsFirst,
            "all-pairs" => FluctuationPairing::AllPairs,
            other => bail!("unknown pairing `{other}` (expected vs-first or all-pairs)"),
        };
    }
    let raw = args.raw || file.raw.unwrap_or(false);
    let needs_oracle = config.variants.iter().any(|v| v.feedback == FeedbackKind::Customizability);
    let oracle = match &oracle_path {
        Some(p) => Some(OracleProfile::load(p)?),
        None if needs_oracle => bail!("custom feedback requires --oracle <PROFILE.json>"),
        None => None,
    };

    let ds = load_data(&data, raw)?;
    let report = run_experiment(&ds, &config, oracle.as_ref())?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_report(&report.records, &args.out.join("report.csv"), ReportFormat::Csv)?;
    write_report(&report.records, &args.out.join("report.json"), ReportFormat::Json)?;
    let summary = serde_json::to_value(&report.summary)?;
    fs::write(
        args.out.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;

    print!("{}", report.summary.table());
    for r in report.records.iter().filter(|r| r.failed()) {
        eprintln!(
            "failed: {}:{} k={} seed={}: {}",
            r.method,
            r.driving_feedback,
            r.k,
            r.seed,
            r.error.as_deref().unwrap_or("")
        );
    }
    println!("wrote {} rows to {}", report.records.len(), args.out.display());
    Ok(report.summary.failed_cells == 0)
}

fn validate_cmd(args: ValidateArgs) -> anyhow::Result<bool> {
    let records = read_jsonl(&args.trace)?;
    let mut problems = check_records(&records);
    if let (Some(data), Some(cpath)) = (&args.data, &args.clustering) {
        let ds = load_data(data, args.raw)?;
        let clustering: Clustering = read_json(cpath)?;
        problems.extend(validate_clustering(&ds, &clustering).iter().map(|v| v.to_string()));
    }
    if problems.is_empty() {
        println!("ok: {} steps", records.len());
        Ok(true)
    } else {
        for p in &problems {
            println!("violation: {p}");
        }
        Ok(false)
    }
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("FEEDBACK_KMEANS_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("FEEDBACK_KMEANS_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Generate(a) => generate_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::Experiment(a) => experiment_cmd(a),
        Command::Validate(a) => validate_cmd(a),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
