//! Run traces: every action and evaluation of an engine run, plus the best
//! clustering seen.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::FeedbackKind;
use crate::types::{Clustering, FeedbackReport, Sense};

/// Steps stored as full snapshots before switching to deltas.
pub const DEFAULT_SNAPSHOT_CAP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Sme,
    Sm,
}

impl Method {
    pub fn default_iterations(self) -> usize {
        match self {
            Method::Sme => 6,
            Method::Sm => 12,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Sme => "sme",
            Method::Sm => "sm",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Sme => "SME",
            Method::Sm => "S/M",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "sme" => Ok(Method::Sme),
            "sm" | "s/m" => Ok(Method::Sm),
            other => Err(Error::InvalidConfig(format!(
                "unknown method `{other}` (expected sme or sm)"
            ))),
        }
    }
}

/// One elementary operation on the clustering. Split ids refer to the
/// clustering before the split; merge ids to the clustering the merge
/// was applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Init,
    Split(usize),
    Merge(usize, usize),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Init => write!(f, "init"),
            Action::Split(c) => write!(f, "split({c})"),
            Action::Merge(a, b) => write!(f, "merge({a},{b})"),
        }
    }
}

fn format_actions(actions: &[Action]) -> String {
    actions
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("+")
}

/// How a step's clustering is kept.
#[derive(Debug, Clone, PartialEq)]
pub enum StepState {
    Snapshot(Clustering),
    /// Changed assignments `(point, new id)` relative to the previous step,
    /// plus the full centroid set.
    Delta {
        changed: Vec<(usize, usize)>,
        centroids: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub actions: Vec<Action>,
    pub k: usize,
    pub feedback: FeedbackReport,
    pub state: StepState,
}

impl TraceStep {
    pub fn evaluation(&self) -> f64 {
        self.feedback.aggregate
    }
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub method: Method,
    pub feedback: FeedbackKind,
    pub seed: u64,
    pub steps: Vec<TraceStep>,
    pub best_step_index: usize,
    pub best_evaluation: f64,
    pub best_clustering: Clustering,
    /// Why the run ended before its iteration budget, if it did.
    pub stalled: Option<String>,
    snapshot_cap: usize,
    last: Clustering,
}

impl RunTrace {
    pub fn new(
        method: Method,
        feedback: FeedbackKind,
        seed: u64,
        snapshot_cap: usize,
        initial: Clustering,
        report: FeedbackReport,
    ) -> Self {
        let best_evaluation = report.aggregate;
        RunTrace {
            method,
            feedback,
            seed,
            steps: vec![TraceStep {
                actions: vec![Action::Init],
                k: initial.k(),
                feedback: report,
                state: StepState::Snapshot(initial.clone()),
            }],
            best_step_index: 0,
            best_evaluation,
            best_clustering: initial.clone(),
            stalled: None,
            snapshot_cap: snapshot_cap.max(1),
            last: initial,
        }
    }

    pub fn sense(&self) -> Sense {
        self.feedback.sense()
    }

    /// Appends an evaluated step; returns whether it became the new best.
    pub fn push(&mut self, actions: Vec<Action>, clustering: Clustering, report: FeedbackReport) -> bool {
        let state = if self.steps.len() < self.snapshot_cap {
            StepState::Snapshot(clustering.clone())
        } else {
            let changed = clustering
                .assignment
                .iter()
                .zip(&self.last.assignment)
                .enumerate()
                .filter(|(_, (new, old))| new != old)
                .map(|(i, (&new, _))| (i, new))
                .collect();
            StepState::Delta {
                changed,
                centroids: clustering.centroids.clone(),
            }
        };
        let improved = self.sense().is_better(report.aggregate, self.best_evaluation);
        if improved {
            self.best_step_index = self.steps.len();
            self.best_evaluation = report.aggregate;
            self.best_clustering = clustering.clone();
        }
        self.steps.push(TraceStep {
            actions,
            k: clustering.k(),
            feedback: report,
            state,
        });
        self.last = clustering;
        improved
    }

    pub fn current(&self) -> &Clustering {
        &self.last
    }

    pub fn latest_report(&self) -> &FeedbackReport {
        &self.steps.last().expect("trace has an init step").feedback
    }

    /// Clustering recorded at `step`, rebuilt from deltas when needed.
    pub fn clustering_at(&self, step: usize) -> Option<Clustering> {
        if step >= self.steps.len() {
            return None;
        }
        let base = (0..=step)
            .rev()
            .find(|&s| matches!(self.steps[s].state, StepState::Snapshot(_)))?;
        let StepState::Snapshot(c) = &self.steps[base].state else {
            unreachable!()
        };
        let mut c = c.clone();
        for s in &self.steps[base + 1..=step] {
            if let StepState::Delta { changed, centroids } = &s.state {
                for &(i, id) in changed {
                    c.assignment[i] = id;
                }
                c.centroids = centroids.clone();
            }
        }
        Some(c)
    }

    pub fn initial_clustering(&self) -> &Clustering {
        match &self.steps[0].state {
            StepState::Snapshot(c) => c,
            StepState::Delta { .. } => unreachable!("step 0 is always a snapshot"),
        }
    }

    pub fn initial_evaluation(&self) -> f64 {
        self.steps[0].evaluation()
    }

    pub fn evaluations(&self) -> Vec<f64> {
        self.steps.iter().map(TraceStep::evaluation).collect()
    }

    /// Number of split and merge actions performed.
    pub fn action_count(&self) -> usize {
        self.steps
            .iter()
            .flat_map(|s| &s.actions)
            .filter(|a| !matches!(a, Action::Init))
            .count()
    }

    pub fn final_k(&self) -> usize {
        self.last.k()
    }

    pub fn records(&self) -> Vec<TraceRecord> {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, s)| TraceRecord {
                step: i,
                action: format_actions(&s.actions),
                k: s.k,
                per_cluster_feedback: s.feedback.per_cluster(),
                aggregate: s.feedback.aggregate,
                is_best: i == self.best_step_index,
                sense: s.feedback.sense,
                sizes: s.feedback.sizes(),
            })
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut out, &r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// One line of the JSON-lines trace export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub action: String,
    pub k: usize,
    pub per_cluster_feedback: Vec<f64>,
    pub aggregate: f64,
    pub is_best: bool,
    pub sense: Sense,
    pub sizes: Vec<usize>,
}

pub fn read_jsonl(path: &Path) -> Result<Vec<TraceRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(out)
}

/// Invariant checks on an exported trace. Returns one message per problem.
pub fn check_records(records: &[TraceRecord]) -> Vec<String> {
    let mut problems = Vec::new();
    let Some(first) = records.first() else {
        return vec!["trace is empty".into()];
    };
    if first.action != "init" {
        problems.push(format!("step 0 action is `{}`, expected `init`", first.action));
    }
    let sense = first.sense;
    for (i, r) in records.iter().enumerate() {
        if r.step != i {
            problems.push(format!("record {i} has step {}", r.step));
        }
        if r.sense != sense {
            problems.push(format!("step {i}: sense changes mid-trace"));
        }
        if r.per_cluster_feedback.len() != r.k || r.sizes.len() != r.k {
            problems.push(format!("step {i}: {} feedback values / {} sizes for k = {}",
                r.per_cluster_feedback.len(), r.sizes.len(), r.k));
            continue;
        }
        if r.sizes.contains(&0) {
            problems.push(format!("step {i}: empty cluster"));
        }
        match crate::feedback::aggregate_weighted(&r.per_cluster_feedback, &r.sizes) {
            Ok(a) if (a - r.aggregate).abs() <= 1e-9 * a.abs().max(1.0) => {}
            Ok(a) => problems.push(format!("step {i}: aggregate {} but weighted mean is {a}", r.aggregate)),
            Err(e) => problems.push(format!("step {i}: {e}")),
        }
    }
    let total = records[0].sizes.iter().sum::<usize>();
    if records.iter().any(|r| r.sizes.iter().sum::<usize>() != total) {
        problems.push("cluster sizes do not sum to the same total on every step".into());
    }
    // first optimum under strict improvement
    let mut best = 0;
    for (i, r) in records.iter().enumerate().skip(1) {
        if sense.is_better(r.aggregate, records[best].aggregate) {
            best = i;
        }
    }
    let flagged: Vec<usize> = records.iter().filter(|r| r.is_best).map(|r| r.step).collect();
    if flagged != [best] {
        problems.push(format!("best step flagged as {flagged:?}, expected [{best}]"));
    }
    problems
}
