//! Lloyd's k-means with seeded random-point initialization.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{substream, TAG_INIT};
use crate::types::{sq_dist, Clustering, Dataset};

// Below this many points the assignment pass stays on the calling thread.
const PARALLEL_ASSIGN_MIN: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Convergence threshold on the largest squared centroid displacement.
    pub tolerance: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            seed,
            max_iterations: 100,
            tolerance: 1e-9,
        }
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        if self.k > dataset.len() {
            return Err(Error::InvalidConfig(format!(
                "k = {} exceeds the {} points of the dataset",
                self.k,
                dataset.len()
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig("tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

fn point_key(p: &[f64]) -> Vec<u64> {
    // +0.0 folds -0.0 onto 0.0
    p.iter().map(|&x| (x + 0.0).to_bits()).collect()
}

/// Indices of the first occurrence of every distinct point among `indices`.
pub fn distinct_indices(dataset: &Dataset, indices: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut seen = HashSet::new();
    indices
        .into_iter()
        .filter(|&i| seen.insert(point_key(dataset.point(i))))
        .collect()
}

/// Whether `indices` contains at least two distinct points.
pub fn has_two_distinct(dataset: &Dataset, indices: &[usize]) -> bool {
    let Some(&first) = indices.first() else {
        return false;
    };
    let p0 = dataset.point(first);
    indices.iter().any(|&i| dataset.point(i) != p0)
}

/// Picks `k` distinct data points uniformly at random without replacement.
pub fn init_centroids(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    init_centroids_from(dataset, 0..dataset.len(), k, seed)
}

pub(crate) fn init_centroids_from(
    dataset: &Dataset,
    indices: impl IntoIterator<Item = usize>,
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let distinct = distinct_indices(dataset, indices);
    if k > distinct.len() {
        return Err(Error::KExceedsDistinctPoints {
            k,
            distinct: distinct.len(),
        });
    }
    let mut rng = substream(seed, &[TAG_INIT]);
    Ok(rand::seq::index::sample(&mut rng, distinct.len(), k)
        .into_iter()
        .map(|j| dataset.point(distinct[j]).to_vec())
        .collect())
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, m) in centroids.iter().enumerate() {
        let d = sq_dist(p, m);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Maps every point to its closest centroid; ties go to the lowest index.
pub fn assign_points(dataset: &Dataset, centroids: &[Vec<f64>]) -> Vec<usize> {
    assert!(!centroids.is_empty(), "assign_points needs at least one centroid");
    let dim = dataset.dim();
    if dataset.len() >= PARALLEL_ASSIGN_MIN {
        dataset
            .values()
            .par_chunks_exact(dim)
            .map(|p| nearest(p, centroids))
            .collect()
    } else {
        dataset.points().map(|p| nearest(p, centroids)).collect()
    }
}

/// Cluster means of `assignment`. Returns the centroids (zero vectors for
/// empty clusters) and the ids of the empty clusters.
pub fn update_centroids(
    dataset: &Dataset,
    assignment: &[usize],
    k: usize,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = dataset.dim();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in dataset.points().zip(assignment) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(p) {
            *s += x;
        }
    }
    let mut empties = Vec::new();
    for (c, (sum, &n)) in sums.iter_mut().zip(&counts).enumerate() {
        if n == 0 {
            empties.push(c);
        } else {
            let n = n as f64;
            sum.iter_mut().for_each(|s| *s /= n);
        }
    }
    (sums, empties)
}

/// Refills empty clusters by farthest-point re-seeding.
///
/// For each empty id, the point farthest from its assigned centroid (ties to
/// the lowest point index, only taken from clusters that keep at least one
/// point) moves to the empty cluster and becomes its centroid.
pub fn repair_empty(
    dataset: &Dataset,
    mut assignment: Vec<usize>,
    mut centroids: Vec<Vec<f64>>,
    empties: &[usize],
) -> Result<Clustering> {
    let k = centroids.len();
    if k > dataset.len() {
        return Err(Error::RepairImpossible {
            k,
            points: dataset.len(),
        });
    }
    let mut sizes = vec![0usize; k];
    for &c in &assignment {
        sizes[c] += 1;
    }
    let mut pending: Vec<usize> = empties.to_vec();
    pending.sort_unstable();
    pending.dedup();
    for empty in pending {
        if sizes[empty] > 0 {
            continue;
        }
        let mut pick: Option<(usize, f64)> = None;
        for (i, p) in dataset.points().enumerate() {
            let c = assignment[i];
            if sizes[c] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[c]);
            if pick.is_none_or(|(_, best)| d > best) {
                pick = Some((i, d));
            }
        }
        let (i, _) = pick.ok_or(Error::RepairImpossible {
            k,
            points: dataset.len(),
        })?;
        sizes[assignment[i]] -= 1;
        sizes[empty] += 1;
        assignment[i] = empty;
        centroids[empty] = dataset.point(i).to_vec();
    }
    Ok(Clustering::new(assignment, centroids))
}

/// Mean squared distance of every point to its assigned centroid.
pub fn objective(dataset: &Dataset, assignment: &[usize], centroids: &[Vec<f64>]) -> f64 {
    let total: f64 = dataset
        .points()
        .zip(assignment)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum();
    total / dataset.len() as f64
}

/// A finished Lloyd run with its objective after every half-step.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub clustering: Clustering,
    /// Objective after the initial assignment, then after every update and
    /// every reassignment.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn lloyd(dataset: &Dataset, config: &KMeansConfig) -> Result<Clustering> {
    Ok(lloyd_run(dataset, config)?.clustering)
}

pub fn lloyd_run(dataset: &Dataset, config: &KMeansConfig) -> Result<LloydRun> {
    config.validate(dataset)?;
    let init = init_centroids(dataset, config.k, config.seed)?;
    lloyd_from(dataset, init, config)
}

/// Lloyd iterations starting from explicit centroids.
pub(crate) fn lloyd_from(
    dataset: &Dataset,
    init: Vec<Vec<f64>>,
    config: &KMeansConfig,
) -> Result<LloydRun> {
    let k = init.len();
    let mut centroids = init;
    let mut assignment = assign_points(dataset, &centroids);
    let mut history = vec![objective(dataset, &assignment, &centroids)];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let (mut updated, empties) = update_centroids(dataset, &assignment, k);
        if !empties.is_empty() {
            let repaired = repair_empty(dataset, assignment, updated, &empties)?;
            assignment = repaired.assignment;
            updated = repaired.centroids;
        }
        let movement = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(a, b))
            .fold(0.0, f64::max);
        centroids = updated;
        history.push(objective(dataset, &assignment, &centroids));
        if movement <= config.tolerance {
            converged = true;
            break;
        }
        if iterations == config.max_iterations {
            break;
        }
        let next = assign_points(dataset, &centroids);
        history.push(objective(dataset, &next, &centroids));
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
    }

    log::debug!("lloyd k={k}: {iterations} iterations, converged={converged}");
    Ok(LloydRun {
        clustering: Clustering::new(assignment, centroids),
        objective_history: history,
        iterations,
        converged,
    })
}
