//! Shared domain types: datasets, clusterings and feedback reports.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names of the eight flight-search features, in storage order.
pub const FEATURE_NAMES: [&str; 8] = [
    "distance",
    "advance_purchase",
    "stay_duration",
    "n_passengers",
    "n_children",
    "geography",
    "dep_dow",
    "ret_dow",
];

/// A non-empty set of points in R^n plus optional per-point side data.
///
/// Points are stored row-major in a single buffer. Side columns (bookings,
/// hidden segments, origin/destination) always have one entry per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    dim: usize,
    feature_names: Vec<String>,
    bookings: Option<Vec<u64>>,
    hidden_segment: Option<Vec<u32>>,
    origin: Option<Vec<String>>,
    destination: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>, feature_names: Vec<String>) -> Result<Self> {
        let dim = feature_names.len();
        if dim == 0 {
            return Err(Error::InvalidDataset("at least one feature is required".into()));
        }
        if points.is_empty() {
            return Err(Error::InvalidDataset("dataset is empty".into()));
        }
        let mut values = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::InvalidDataset(format!(
                    "point {i} has dimension {}, expected {dim}",
                    p.len()
                )));
            }
            values.extend_from_slice(p);
        }
        Ok(Dataset {
            values,
            dim,
            feature_names,
            bookings: None,
            hidden_segment: None,
            origin: None,
            destination: None,
        })
    }

    /// Builds a dataset with generic feature names `f0..f{n-1}`.
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        let names = (0..dim).map(|i| format!("f{i}")).collect();
        Dataset::new(points, names)
    }

    fn check_side_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::InvalidDataset(format!(
                "{what} has {len} entries for {} points",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn with_bookings(mut self, bookings: Vec<u64>) -> Result<Self> {
        self.check_side_len("bookings", bookings.len())?;
        self.bookings = Some(bookings);
        Ok(self)
    }

    pub fn with_hidden_segments(mut self, segments: Vec<u32>) -> Result<Self> {
        self.check_side_len("hidden_segment", segments.len())?;
        self.hidden_segment = Some(segments);
        Ok(self)
    }

    pub fn with_route(mut self, origin: Vec<String>, destination: Vec<String>) -> Result<Self> {
        self.check_side_len("origin", origin.len())?;
        self.check_side_len("destination", destination.len())?;
        self.origin = Some(origin);
        self.destination = Some(destination);
        Ok(self)
    }

    /// Same side data, new coordinates. Used by feature scaling.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Dataset {
            values,
            ..self.clone()
        }
    }

    /// Coordinates of the listed points only; side data is dropped.
    pub(crate) fn subset(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.point(i));
        }
        Dataset {
            values,
            dim: self.dim,
            feature_names: self.feature_names.clone(),
            bookings: None,
            hidden_segment: None,
            origin: None,
            destination: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn bookings(&self) -> Option<&[u64]> {
        self.bookings.as_deref()
    }

    pub fn hidden_segments(&self) -> Option<&[u32]> {
        self.hidden_segment.as_deref()
    }

    pub fn origin(&self) -> Option<&[String]> {
        self.origin.as_deref()
    }

    pub fn destination(&self) -> Option<&[String]> {
        self.destination.as_deref()
    }
}

/// Squared Euclidean distance.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A surjective assignment of points onto `0..k` with one centroid per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
}

impl Clustering {
    pub fn new(assignment: Vec<usize>, centroids: Vec<Vec<f64>>) -> Self {
        Clustering {
            assignment,
            centroids,
        }
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &c in &self.assignment {
            if c < sizes.len() {
                sizes[c] += 1;
            }
        }
        sizes
    }

    /// Point indices per cluster, each list in ascending order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k()];
        for (i, &c) in self.assignment.iter().enumerate() {
            members[c].push(i);
        }
        members
    }

    pub fn members_of(&self, cluster: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    /// Checks against `dataset` and turns any violation into an error.
    pub fn validated(self, dataset: &Dataset) -> Result<Self> {
        let v = validate_clustering(dataset, &self);
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidClustering(v))
        }
    }
}

/// A broken clustering invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoClusters,
    AssignmentLengthMismatch { expected: usize, found: usize },
    CentroidDimension { cluster: usize, expected: usize, found: usize },
    IdOutOfRange { point: usize, id: usize, k: usize },
    EmptyCluster(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoClusters => write!(f, "clustering has no clusters"),
            Violation::AssignmentLengthMismatch { expected, found } => write!(
                f,
                "assignment length mismatch: {found} entries for {expected} points"
            ),
            Violation::CentroidDimension {
                cluster,
                expected,
                found,
            } => write!(
                f,
                "centroid {cluster} has dimension {found}, expected {expected}"
            ),
            Violation::IdOutOfRange { point, id, k } => {
                write!(f, "point {point} assigned to cluster {id}, outside 0..{k}")
            }
            Violation::EmptyCluster(c) => write!(f, "cluster {c} empty"),
        }
    }
}

/// Lists every way `clustering` fails to be a well-formed clustering of
/// `dataset`. An empty list means all invariants hold.
pub fn validate_clustering(dataset: &Dataset, clustering: &Clustering) -> Vec<Violation> {
    let mut out = Vec::new();
    let k = clustering.k();
    if k == 0 {
        out.push(Violation::NoClusters);
    }
    if clustering.assignment.len() != dataset.len() {
        out.push(Violation::AssignmentLengthMismatch {
            expected: dataset.len(),
            found: clustering.assignment.len(),
        });
    }
    for (cluster, c) in clustering.centroids.iter().enumerate() {
        if c.len() != dataset.dim() {
            out.push(Violation::CentroidDimension {
                cluster,
                expected: dataset.dim(),
                found: c.len(),
            });
        }
    }
    let mut seen = vec![false; k];
    for (point, &id) in clustering.assignment.iter().enumerate() {
        if id >= k {
            out.push(Violation::IdOutOfRange { point, id, k });
        } else {
            seen[id] = true;
        }
    }
    out.extend(
        seen.iter()
            .enumerate()
            .filter(|(_, &s)| !s)
            .map(|(c, _)| Violation::EmptyCluster(c)),
    );
    out
}

/// Orientation of a feedback value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    HigherIsBetter,
    LowerIsBetter,
}

impl Sense {
    /// Strict comparison: equal values are not better.
    pub fn is_better(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Sense::HigherIsBetter => candidate > incumbent,
            Sense::LowerIsBetter => candidate < incumbent,
        }
    }

    /// Whether `value` meets or beats `target`.
    pub fn reaches(self, value: f64, target: f64) -> bool {
        match self {
            Sense::HigherIsBetter => value >= target,
            Sense::LowerIsBetter => value <= target,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sense::HigherIsBetter => "higher_is_better",
            Sense::LowerIsBetter => "lower_is_better",
        }
    }
}

/// Intermediate quantities of one simulated customizability evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomDetail {
    pub pop_w: f64,
    pub pop_0: f64,
    pub fitted_weights: Vec<f64>,
}

/// Feedback y_i of one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFeedbackValue {
    pub value: f64,
    pub cluster_size: usize,
    pub detail: Option<CustomDetail>,
}

/// The feedback tuple of a clustering plus its size-weighted aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub clusters: Vec<ClusterFeedbackValue>,
    pub aggregate: f64,
    pub sense: Sense,
}

impl FeedbackReport {
    pub fn per_cluster(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.value).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.cluster_size).collect()
    }

    pub fn k(&self) -> usize {
        self.clusters.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_points() -> Dataset {
        Dataset::from_points(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![5.0, 5.0],
            vec![6.0, 5.0],
        ])
        .unwrap()
    }

    #[test]
    fn minimal_valid_clustering() {
        let ds = four_points();
        let c = Clustering::new(vec![0; 4], vec![vec![3.0, 2.5]]);
        assert!(validate_clustering(&ds, &c).is_empty());
    }

    #[test]
    fn declared_cluster_without_points_is_reported() {
        let ds = four_points();
        let c = Clustering::new(vec![0, 0, 1, 1], vec![vec![0.0; 2]; 3]);
        let v = validate_clustering(&ds, &c);
        assert_eq!(v, vec![Violation::EmptyCluster(2)]);
        assert_eq!(v[0].to_string(), "cluster 2 empty");
    }

    #[test]
    fn short_assignment_is_reported() {
        let ds = four_points();
        let c = Clustering::new(vec![0, 0, 0], vec![vec![0.0; 2]]);
        let v = validate_clustering(&ds, &c);
        assert!(v[0].to_string().starts_with("assignment length mismatch"));
    }

    #[test]
    fn out_of_range_ids_and_bad_centroids() {
        let ds = four_points();
        let c = Clustering::new(vec![0, 0, 2, 0], vec![vec![0.0; 3], vec![0.0; 2]]);
        let v = validate_clustering(&ds, &c);
        assert!(v.contains(&Violation::IdOutOfRange { point: 2, id: 2, k: 2 }));
        assert!(v.contains(&Violation::EmptyCluster(1)));
        assert!(v.contains(&Violation::CentroidDimension {
            cluster: 0,
            expected: 2,
            found: 3
        }));
    }

    #[test]
    fn dataset_rejects_ragged_and_empty_input() {
        assert!(Dataset::from_points(vec![]).is_err());
        assert!(Dataset::from_points(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        let ds = four_points();
        assert!(ds.clone().with_bookings(vec![1, 2]).is_err());
        assert!(ds.with_hidden_segments(vec![0; 4]).is_ok());
    }

    #[test]
    fn duplicates_are_allowed() {
        let ds = Dataset::from_points(vec![vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn strict_better() {
        assert!(Sense::LowerIsBetter.is_better(1.0, 2.0));
        assert!(!Sense::LowerIsBetter.is_better(2.0, 2.0));
        assert!(Sense::HigherIsBetter.is_better(0.5, 0.1));
        assert!(!Sense::HigherIsBetter.is_better(0.5, 0.5));
    }
}
