//! The split-merge-evolve loop and the split-or-merge loop.
//!
//! Both start from a seeded k-means clustering and evaluate it. SME then
//! splits the worst cluster, merges the globally closest centroid pair and
//! evaluates once per iteration, so k never changes. S/M applies a single
//! size-gated action per iteration and evaluates after each one. Both keep
//! the best clustering seen but always continue from the current one.

use crate::error::{Error, Result};
use crate::feedback::{evaluate_clustering, EvalStream, FeedbackProvider};
use crate::kmeans::{lloyd, KMeansConfig};
use crate::operators::{
    closest_centroid_pair, clusters_worst_first, is_splittable, merge_pair, sm_decide, split_cluster,
    worst_cluster, SmAction, MIN_CLUSTERS,
};
use crate::rng::derive_seed;
use crate::trace::{Action, Method, RunTrace, DEFAULT_SNAPSHOT_CAP};
use crate::types::{Clustering, Dataset, FeedbackReport};

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub method: Method,
    pub iterations: usize,
    /// Stop as soon as the best evaluation reaches this value.
    pub target_evaluation: Option<f64>,
    pub seed: u64,
    pub min_k: usize,
    pub kmeans_max_iterations: usize,
    pub kmeans_tolerance: f64,
    pub snapshot_cap: usize,
}

impl EngineConfig {
    pub fn new(method: Method, seed: u64) -> Self {
        EngineConfig {
            method,
            iterations: method.default_iterations(),
            target_evaluation: None,
            seed,
            min_k: MIN_CLUSTERS,
            kmeans_max_iterations: 100,
            kmeans_tolerance: 1e-9,
            snapshot_cap: DEFAULT_SNAPSHOT_CAP,
        }
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_target(mut self, target: Option<f64>) -> Self {
        self.target_evaluation = target;
        self
    }

    fn validate(&self, dataset: &Dataset, k: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.min_k < MIN_CLUSTERS {
            return Err(Error::InvalidConfig(format!("min_k must be at least {MIN_CLUSTERS}")));
        }
        if k < self.min_k {
            return Err(Error::InvalidConfig(format!("k = {k} is below min_k = {}", self.min_k)));
        }
        if k > dataset.len() {
            return Err(Error::InvalidConfig(format!(
                "k = {k} exceeds the {} points of the dataset",
                dataset.len()
            )));
        }
        Ok(())
    }
}

/// Runs the engine selected by `config.method`.
pub fn run(dataset: &Dataset, k: usize, config: &EngineConfig, provider: &FeedbackProvider) -> Result<RunTrace> {
    match config.method {
        Method::Sme => run_sme(dataset, k, config, provider),
        Method::Sm => run_sm(dataset, k, config, provider),
    }
}

struct Runner<'a> {
    dataset: &'a Dataset,
    config: &'a EngineConfig,
    provider: &'a FeedbackProvider,
}

impl Runner<'_> {
    fn evaluate(&self, clustering: &Clustering, step: usize) -> Result<FeedbackReport> {
        evaluate_clustering(
            self.dataset,
            clustering,
            self.provider,
            EvalStream::new(self.config.seed, step as u64),
        )
    }

    fn start(&self, k: usize) -> Result<RunTrace> {
        self.config.validate(self.dataset, k)?;
        self.provider.check_dataset(self.dataset)?;
        let km = KMeansConfig::new(k, self.config.seed)
            .with_max_iterations(self.config.kmeans_max_iterations)
            .with_tolerance(self.config.kmeans_tolerance);
        let initial = lloyd(self.dataset, &km)?;
        let report = self.evaluate(&initial, 0)?;
        Ok(RunTrace::new(
            self.config.method,
            self.provider.kind(),
            self.config.seed,
            self.config.snapshot_cap,
            initial,
            report,
        ))
    }

    fn target_reached(&self, trace: &RunTrace) -> bool {
        self.config
            .target_evaluation
            .is_some_and(|t| trace.sense().reaches(trace.best_evaluation, t))
    }

    fn split_seed(&self, iteration: usize) -> u64 {
        derive_seed(self.config.seed, &[iteration as u64])
    }

    /// Evaluates and records a step. An evaluation failure ends the run.
    fn record(&self, trace: &mut RunTrace, actions: Vec<Action>, next: Clustering) -> bool {
        match self.evaluate(&next, trace.steps.len()) {
            Ok(report) => {
                trace.push(actions, next, report);
                true
            }
            Err(e) => {
                log::warn!("evaluation failed at step {}: {e}", trace.steps.len());
                trace.stalled = Some(format!("evaluation failed: {e}"));
                false
            }
        }
    }
}

/// Split-merge-evolve.
pub fn run_sme(dataset: &Dataset, k: usize, config: &EngineConfig, provider: &FeedbackProvider) -> Result<RunTrace> {
    if config.method != Method::Sme {
        return Err(Error::InvalidConfig("run_sme needs method SME".into()));
    }
    let runner = Runner { dataset, config, provider };
    let mut trace = runner.start(k)?;

    for iteration in 1..=config.iterations {
        if runner.target_reached(&trace) {
            break;
        }
        let current = trace.current().clone();
        let members = current.members();
        let Some(target) = clusters_worst_first(trace.latest_report())
            .into_iter()
            .find(|&c| is_splittable(dataset, &members[c]))
        else {
            trace.stalled = Some("no splittable cluster".into());
            break;
        };
        let split = split_cluster(dataset, &current, target, runner.split_seed(iteration))?;
        let (a, b) = closest_centroid_pair(&split)?;
        let merged = merge_pair(dataset, &split, a, b)?;
        debug_assert_eq!(merged.k(), current.k());
        if !runner.record(&mut trace, vec![Action::Split(target), Action::Merge(a, b)], merged) {
            break;
        }
    }
    Ok(trace)
}

/// Split-or-merge.
pub fn run_sm(dataset: &Dataset, k: usize, config: &EngineConfig, provider: &FeedbackProvider) -> Result<RunTrace> {
    if config.method != Method::Sm {
        return Err(Error::InvalidConfig("run_sm needs method S/M".into()));
    }
    let runner = Runner { dataset, config, provider };
    let mut trace = runner.start(k)?;

    for iteration in 1..=config.iterations {
        if runner.target_reached(&trace) {
            break;
        }
        let current = trace.current().clone();
        let worst = worst_cluster(trace.latest_report());
        let action = match sm_decide(dataset, &current, worst, config.min_k) {
            Ok(a) => a,
            Err(Error::NoLegalAction(c)) => {
                trace.stalled = Some(format!("no legal action for cluster {c}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let (next, recorded) = match action {
            SmAction::Split(c) => (
                split_cluster(dataset, &current, c, runner.split_seed(iteration))?,
                Action::Split(c),
            ),
            SmAction::Merge(a, b) => (merge_pair(dataset, &current, a, b)?, Action::Merge(a, b)),
        };
        if !runner.record(&mut trace, vec![recorded], next) {
            break;
        }
    }
    Ok(trace)
}

/// The best clustering of a trace and its evaluation.
pub fn best_clustering(trace: &RunTrace) -> (Clustering, f64) {
    (trace.best_clustering.clone(), trace.best_evaluation)
}
