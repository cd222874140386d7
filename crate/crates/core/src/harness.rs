//! Experiment protocol: four method variants over a grid of initial
//! cluster counts and seeds, with impact metrics and the fluctuation
//! statistic of the customizability oracle.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engines::{run, EngineConfig};
use crate::error::{Error, Result};
use crate::feedback::{evaluate_clustering, relative_change, EvalStream, FeedbackKind, FeedbackProvider, RELATIVE_EPS};
use crate::kmeans::{lloyd, KMeansConfig};
use crate::oracle::OracleProfile;
use crate::rng::derive_seed;
use crate::trace::{Method, RunTrace};
use crate::types::{Clustering, Dataset, Sense};

/// Stream step used when re-evaluating an RSS-best clustering under the
/// customizability oracle. Engine steps never get this high.
const REFERENCE_STEP: u64 = u64::MAX;

/// A method driven by one kind of feedback, e.g. S/M(Custom.).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Variant {
    pub method: Method,
    pub feedback: FeedbackKind,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant { method: Method::Sme, feedback: FeedbackKind::Rss },
        Variant { method: Method::Sme, feedback: FeedbackKind::Customizability },
        Variant { method: Method::Sm, feedback: FeedbackKind::Rss },
        Variant { method: Method::Sm, feedback: FeedbackKind::Customizability },
    ];

    pub fn new(method: Method, feedback: FeedbackKind) -> Self {
        Variant { method, feedback }
    }

    /// Parses `method:feedback`, e.g. `sme:custom`.
    pub fn parse(s: &str) -> Result<Self> {
        let (m, f) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidConfig(format!("expected method:feedback, got `{s}`")))?;
        Ok(Variant::new(Method::parse(m.trim())?, FeedbackKind::parse(f.trim())?))
    }

    pub fn name(&self) -> String {
        format!("{}:{}", self.method.name(), self.feedback.name())
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fb = match self.feedback {
            FeedbackKind::Rss => "RSS",
            FeedbackKind::Customizability => "Custom.",
        };
        write!(f, "{}({fb})", self.method.label())
    }
}

/// How repeated oracle calls on one clustering are paired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FluctuationPairing {
    /// Mean |relative change| of calls 2..N against call 1.
    #[default]
    VsFirst,
    /// Mean |relative change| over all ordered-by-index pairs i < j.
    AllPairs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub variants: Vec<Variant>,
    pub k_values: Vec<usize>,
    pub sme_iterations: usize,
    pub sm_iterations: usize,
    pub repeats: usize,
    pub fluctuation_calls: usize,
    pub pairing: FluctuationPairing,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            variants: Variant::ALL.to_vec(),
            k_values: vec![2, 3, 4, 5, 6, 7],
            sme_iterations: Method::Sme.default_iterations(),
            sm_iterations: Method::Sm.default_iterations(),
            repeats: 3,
            fluctuation_calls: 10,
            pairing: FluctuationPairing::VsFirst,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::InvalidConfig("no methods requested".into()));
        }
        if self.k_values.is_empty() || self.k_values.iter().any(|&k| k < 2) {
            return Err(Error::InvalidConfig("k values must be non-empty and all >= 2".into()));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be at least 1".into()));
        }
        Ok(())
    }

    /// Seed shared by every variant run for (k, repeat), so all variants
    /// start from the same initial clustering.
    pub fn cell_seed(&self, k: usize, repeat: usize) -> u64 {
        derive_seed(self.seed, &[k as u64, repeat as u64])
    }

    fn iterations(&self, method: Method) -> usize {
        match method {
            Method::Sme => self.sme_iterations,
            Method::Sm => self.sm_iterations,
        }
    }
}

/// Relative improvement from `initial` to `best`, positive when `best` is
/// better under `sense`.
pub fn impact(initial: f64, best: f64, sense: Sense) -> Result<f64> {
    if !(initial.abs() >= RELATIVE_EPS) {
        return Err(Error::DegenerateBaseline(initial));
    }
    Ok(match sense {
        Sense::HigherIsBetter => (best - initial) / initial.abs(),
        Sense::LowerIsBetter => (initial - best) / initial.abs(),
    })
}

/// Empirical fluctuation of a random provider: `calls` evaluations of the
/// same clustering on distinct streams, summarized per `pairing`.
pub fn expected_relative_change(
    dataset: &Dataset,
    clustering: &Clustering,
    provider: &FeedbackProvider,
    calls: usize,
    seed: u64,
    pairing: FluctuationPairing,
) -> Result<f64> {
    if provider.is_deterministic() {
        return Err(Error::InvalidConfig(
            "expected relative change needs a non-deterministic provider".into(),
        ));
    }
    if calls < 2 {
        return Err(Error::InvalidConfig("at least two calls are needed".into()));
    }
    let values: Vec<f64> = (0..calls as u64)
        .map(|j| evaluate_clustering(dataset, clustering, provider, EvalStream::new(seed, j)).map(|r| r.aggregate))
        .collect::<Result<_>>()?;
    let mut changes = Vec::new();
    match pairing {
        FluctuationPairing::VsFirst => {
            for &v in &values[1..] {
                changes.push(relative_change(values[0], v)?.abs());
            }
        }
        FluctuationPairing::AllPairs => {
            for i in 0..values.len() {
                for &v in &values[i + 1..] {
                    changes.push(relative_change(values[i], v)?.abs());
                }
            }
        }
    }
    Ok(changes.iter().sum::<f64>() / changes.len() as f64)
}

/// One (variant, k, seed) cell of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRecord {
    pub method: String,
    pub k: usize,
    pub seed: u64,
    pub driving_feedback: String,
    pub initial_eval: Option<f64>,
    pub best_eval: Option<f64>,
    pub impact: Option<f64>,
    pub custom_initial: Option<f64>,
    pub custom_reference: Option<f64>,
    pub custom_impact: Option<f64>,
    pub final_k: Option<usize>,
    pub stalled: bool,
    pub error: Option<String>,
}

/// Report columns, in file order.
pub const REPORT_COLUMNS: [&str; 13] = [
    "method",
    "k",
    "seed",
    "driving_feedback",
    "initial_eval",
    "best_eval",
    "impact",
    "custom_initial",
    "custom_reference",
    "custom_impact",
    "final_k",
    "stalled",
    "error",
];

impl ImpactRecord {
    pub fn variant(&self) -> Result<Variant> {
        Variant::parse(&format!("{}:{}", self.method, self.driving_feedback))
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    fn failure(variant: Variant, k: usize, seed: u64, err: &Error) -> Self {
        ImpactRecord {
            method: variant.method.name().into(),
            k,
            seed,
            driving_feedback: variant.feedback.name().into(),
            initial_eval: None,
            best_eval: None,
            impact: None,
            custom_initial: None,
            custom_reference: None,
            custom_impact: None,
            final_k: None,
            stalled: false,
            error: Some(err.to_string()),
        }
    }
}

/// Cell outcome with its full trace, for callers that need more than the
/// record (e.g. to dump traces of failed checks).
#[derive(Debug, Clone)]
pub struct CellRun {
    pub variant: Variant,
    pub k: usize,
    pub repeat: usize,
    pub record: ImpactRecord,
    pub trace: Option<RunTrace>,
}

/// Runs one variant on one (k, repeat) cell.
pub fn run_cell(
    dataset: &Dataset,
    config: &ExperimentConfig,
    oracle: Option<&OracleProfile>,
    variant: Variant,
    k: usize,
    repeat: usize,
) -> CellRun {
    let seed = config.cell_seed(k, repeat);
    let result = (|| -> Result<(ImpactRecord, RunTrace)> {
        let custom = oracle
            .map(|p| FeedbackProvider::customizability(p.clone()))
            .transpose()?;
        let provider = match variant.feedback {
            FeedbackKind::Rss => FeedbackProvider::Rss,
            FeedbackKind::Customizability => custom
                .clone()
                .ok_or_else(|| Error::InvalidConfig("customizability needs an oracle profile".into()))?,
        };
        let engine = EngineConfig::new(variant.method, seed).with_iterations(config.iterations(variant.method));
        let trace = run(dataset, k, &engine, &provider)?;
        let initial = trace.initial_evaluation();
        let best = trace.best_evaluation;
        let driving_impact = impact(initial, best, provider.sense())?;

        let (custom_initial, custom_reference, custom_impact) = match (&variant.feedback, &custom) {
            (FeedbackKind::Customizability, _) => (Some(initial), Some(best), Some(driving_impact)),
            (FeedbackKind::Rss, Some(cp)) => {
                let ci = evaluate_clustering(dataset, trace.initial_clustering(), cp, EvalStream::new(seed, 0))?
                    .aggregate;
                let cr = evaluate_clustering(dataset, &trace.best_clustering, cp, EvalStream::new(seed, REFERENCE_STEP))?
                    .aggregate;
                (Some(ci), Some(cr), Some(impact(ci, cr, Sense::HigherIsBetter)?))
            }
            (FeedbackKind::Rss, None) => (None, None, None),
        };
        let record = ImpactRecord {
            method: variant.method.name().into(),
            k,
            seed,
            driving_feedback: variant.feedback.name().into(),
            initial_eval: Some(initial),
            best_eval: Some(best),
            impact: Some(driving_impact),
            custom_initial,
            custom_reference,
            custom_impact,
            final_k: Some(trace.best_clustering.k()),
            stalled: trace.stalled.is_some(),
            error: None,
        };
        Ok((record, trace))
    })();
    match result {
        Ok((record, trace)) => CellRun { variant, k, repeat, record, trace: Some(trace) },
        Err(e) => {
            log::warn!("cell {variant} k={k} repeat={repeat} failed: {e}");
            CellRun {
                variant,
                k,
                repeat,
                record: ImpactRecord::failure(variant, k, seed, &e),
                trace: None,
            }
        }
    }
}

/// Mean impacts of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub method: String,
    pub label: String,
    /// Unweighted mean over k of the per-k mean driving impact.
    pub mean_impact: Option<f64>,
    /// Same, for the customizability impact.
    pub mean_custom_impact: Option<f64>,
    pub per_k_impact: BTreeMap<usize, f64>,
    pub per_k_custom_impact: BTreeMap<usize, f64>,
    /// Histogram of best-clustering k per initial k.
    pub final_k: BTreeMap<usize, BTreeMap<usize, usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub variants: Vec<VariantSummary>,
    /// Mean initial customizability per initial k.
    pub initial_custom_by_k: BTreeMap<usize, f64>,
    /// Oracle fluctuation per k on the repeat-0 initial clustering.
    pub expected_relative_change_by_k: BTreeMap<usize, f64>,
    pub failed_cells: usize,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn per_k_means(records: &[&ImpactRecord], field: impl Fn(&ImpactRecord) -> Option<f64>) -> BTreeMap<usize, f64> {
    let mut by_k: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records {
        if let Some(v) = field(r) {
            by_k.entry(r.k).or_default().push(v);
        }
    }
    by_k.into_iter().filter_map(|(k, v)| mean(&v).map(|m| (k, m))).collect()
}

impl ReportSummary {
    pub fn from_records(variants: &[Variant], records: &[ImpactRecord]) -> Self {
        let summaries = variants
            .iter()
            .map(|v| {
                let rows: Vec<&ImpactRecord> = records
                    .iter()
                    .filter(|r| !r.failed() && r.variant().ok() == Some(*v))
                    .collect();
                let per_k_impact = per_k_means(&rows, |r| r.impact);
                let per_k_custom_impact = per_k_means(&rows, |r| r.custom_impact);
                let mut final_k: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
                for r in &rows {
                    if let Some(fk) = r.final_k {
                        *final_k.entry(r.k).or_default().entry(fk).or_default() += 1;
                    }
                }
                VariantSummary {
                    method: v.name(),
                    label: v.to_string(),
                    mean_impact: mean(&per_k_impact.values().copied().collect::<Vec<_>>()),
                    mean_custom_impact: mean(&per_k_custom_impact.values().copied().collect::<Vec<_>>()),
                    per_k_impact,
                    per_k_custom_impact,
                    final_k,
                }
            })
            .collect();
        let ok: Vec<&ImpactRecord> = records.iter().filter(|r| !r.failed()).collect();
        ReportSummary {
            variants: summaries,
            initial_custom_by_k: per_k_means(&ok, |r| r.custom_initial),
            expected_relative_change_by_k: BTreeMap::new(),
            failed_cells: records.len() - ok.len(),
        }
    }

    pub fn variant(&self, v: Variant) -> Option<&VariantSummary> {
        self.variants.iter().find(|s| s.method == v.name())
    }

    /// Plain-text table of mean impacts per variant.
    pub fn table(&self) -> String {
        let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut out = format!("{:<14} {:>14} {:>14}\n", "method", "own impact", "custom impact");
        for v in &self.variants {
            out.push_str(&format!(
                "{:<14} {:>14} {:>14}\n",
                v.label,
                fmt(v.mean_impact),
                fmt(v.mean_custom_impact)
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub records: Vec<ImpactRecord>,
    pub summary: ReportSummary,
    pub cells: Vec<CellRun>,
}

/// Runs every (variant, k, repeat) cell. Cells run in parallel; the output
/// order is variant, then k, then repeat.
pub fn run_experiment(
    dataset: &Dataset,
    config: &ExperimentConfig,
    oracle: Option<&OracleProfile>,
) -> Result<ExperimentReport> {
    config.validate()?;
    if let Some(p) = oracle {
        p.validate()?;
    }
    let jobs: Vec<(Variant, usize, usize)> = config
        .variants
        .iter()
        .flat_map(|&v| {
            config
                .k_values
                .iter()
                .flat_map(move |&k| (0..config.repeats).map(move |r| (v, k, r)))
        })
        .collect();
    let cells: Vec<CellRun> = jobs
        .par_iter()
        .map(|&(v, k, r)| run_cell(dataset, config, oracle, v, k, r))
        .collect();
    let records: Vec<ImpactRecord> = cells.iter().map(|c| c.record.clone()).collect();
    let mut summary = ReportSummary::from_records(&config.variants, &records);

    if let Some(p) = oracle {
        if config.fluctuation_calls >= 2 {
            let provider = FeedbackProvider::customizability(p.clone())?;
            let erc: Vec<(usize, Result<f64>)> = config
                .k_values
                .par_iter()
                .map(|&k| {
                    let seed = config.cell_seed(k, 0);
                    let r = lloyd(dataset, &KMeansConfig::new(k, seed)).and_then(|c| {
                        expected_relative_change(
                            dataset,
                            &c,
                            &provider,
                            config.fluctuation_calls,
                            derive_seed(seed, &[config.fluctuation_calls as u64]),
                            config.pairing,
                        )
                    });
                    (k, r)
                })
                .collect();
            for (k, r) in erc {
                match r {
                    Ok(v) => {
                        summary.expected_relative_change_by_k.insert(k, v);
                    }
                    Err(e) => log::warn!("fluctuation estimate for k={k} failed: {e}"),
                }
            }
        }
    }
    Ok(ExperimentReport { records, summary, cells })
}
