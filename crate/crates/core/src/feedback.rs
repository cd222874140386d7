//! Per-cluster feedback providers and clustering evaluation.
//!
//! Two providers are available: the residual square sum (deterministic,
//! lower is better) and the simulated customizability oracle (random,
//! higher is better). A clustering's evaluation is the size-weighted mean
//! of its per-cluster values.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::oracle::{customizability_cluster, OracleProfile};
use crate::rng::{substream, TAG_EVAL};
use crate::types::{sq_dist, validate_clustering, ClusterFeedbackValue, Clustering, Dataset, FeedbackReport, Sense};

/// Smallest |reference| accepted by [`relative_change`].
pub const RELATIVE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeedbackKind {
    Rss,
    Customizability,
}

impl FeedbackKind {
    pub fn sense(self) -> Sense {
        match self {
            FeedbackKind::Rss => Sense::LowerIsBetter,
            FeedbackKind::Customizability => Sense::HigherIsBetter,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeedbackKind::Rss => "rss",
            FeedbackKind::Customizability => "custom",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "rss" => Ok(FeedbackKind::Rss),
            "custom" | "customizability" => Ok(FeedbackKind::Customizability),
            other => Err(Error::InvalidConfig(format!(
                "unknown feedback `{other}` (expected rss or custom)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackProvider {
    Rss,
    Customizability(OracleProfile),
}

impl FeedbackProvider {
    pub fn customizability(profile: OracleProfile) -> Result<Self> {
        profile.validate()?;
        Ok(FeedbackProvider::Customizability(profile))
    }

    pub fn kind(&self) -> FeedbackKind {
        match self {
            FeedbackProvider::Rss => FeedbackKind::Rss,
            FeedbackProvider::Customizability(_) => FeedbackKind::Customizability,
        }
    }

    pub fn sense(&self) -> Sense {
        self.kind().sense()
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, FeedbackProvider::Rss)
    }

    pub fn name(&self) -> &'static str {
        self.kind().name()
    }

    /// Checks that `dataset` carries whatever side data the provider needs.
    pub fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        match self {
            FeedbackProvider::Rss => Ok(()),
            FeedbackProvider::Customizability(p) => p.check_dataset(dataset),
        }
    }
}

/// Key of the random stream used by one clustering evaluation. Cluster `c`
/// draws from the substream `(seed, step, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalStream {
    pub seed: u64,
    pub step: u64,
}

impl EvalStream {
    pub fn new(seed: u64, step: u64) -> Self {
        EvalStream { seed, step }
    }
}

/// Mean squared distance of `points` to `centroid`.
pub fn rss_cluster<'a>(points: impl IntoIterator<Item = &'a [f64]>, centroid: &[f64]) -> f64 {
    let (sum, n) = points
        .into_iter()
        .fold((0.0, 0usize), |(s, n), p| (s + sq_dist(p, centroid), n + 1));
    assert!(n > 0, "rss of an empty cluster");
    sum / n as f64
}

/// `(1/|X|) * sum_i |X_i| * y_i`.
pub fn aggregate_weighted(values: &[f64], sizes: &[usize]) -> Result<f64> {
    if values.len() != sizes.len() {
        return Err(Error::LengthMismatch {
            left: values.len(),
            right: sizes.len(),
        });
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::InvalidConfig("cluster sizes sum to zero".into()));
    }
    let weighted: f64 = values.iter().zip(sizes).map(|(v, &s)| s as f64 * v).sum();
    Ok(weighted / total as f64)
}

/// `(new - reference) / |reference|`.
pub fn relative_change(reference: f64, new: f64) -> Result<f64> {
    if !(reference.abs() >= RELATIVE_EPS) {
        return Err(Error::DegenerateBaseline(reference));
    }
    Ok((new - reference) / reference.abs())
}

/// Collects the per-cluster feedback tuple of `clustering` and its
/// size-weighted aggregate.
pub fn evaluate_clustering(
    dataset: &Dataset,
    clustering: &Clustering,
    provider: &FeedbackProvider,
    stream: EvalStream,
) -> Result<FeedbackReport> {
    let violations = validate_clustering(dataset, clustering);
    if !violations.is_empty() {
        return Err(Error::InvalidClustering(violations));
    }
    let members = clustering.members();
    let clusters: Vec<ClusterFeedbackValue> = match provider {
        FeedbackProvider::Rss => members
            .iter()
            .zip(&clustering.centroids)
            .map(|(idx, m)| ClusterFeedbackValue {
                value: rss_cluster(idx.iter().map(|&i| dataset.point(i)), m),
                cluster_size: idx.len(),
                detail: None,
            })
            .collect(),
        FeedbackProvider::Customizability(profile) => members
            .par_iter()
            .enumerate()
            .map(|(c, idx)| {
                let mut rng = substream(
                    stream.seed,
                    &[TAG_EVAL, profile.rng_seed, stream.step, c as u64],
                );
                customizability_cluster(dataset, idx, profile, &mut rng)
            })
            .collect::<Result<_>>()?,
    };
    let values: Vec<f64> = clusters.iter().map(|c| c.value).collect();
    let sizes: Vec<usize> = clusters.iter().map(|c| c.cluster_size).collect();
    Ok(FeedbackReport {
        aggregate: aggregate_weighted(&values, &sizes)?,
        clusters,
        sense: provider.sense(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;
    use std::collections::BTreeMap;

    #[test]
    fn rss_examples() {
        assert_eq!(rss_cluster([&[1.0, 2.0][..]], &[1.0, 2.0]), 0.0);
        assert_eq!(rss_cluster([&[0.0, 0.0][..], &[2.0, 0.0][..]], &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn rss_matches_two_pass_sum() {
        let mut rng = substream(3, &[]);
        let pts: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let m = vec![0.1, -0.2, 0.3];
        let mut sum = 0.0;
        for p in &pts {
            let mut d = 0.0;
            for j in 0..3 {
                d += (p[j] - m[j]).powi(2);
            }
            sum += d;
        }
        let got = rss_cluster(pts.iter().map(Vec::as_slice), &m);
        assert!((got - sum / 20.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_weighted(&[0.7], &[9]).unwrap(), 0.7);
        assert_eq!(aggregate_weighted(&[1.0, 3.0], &[1, 1]).unwrap(), 2.0);
        assert_eq!(aggregate_weighted(&[1.0, 3.0], &[3, 1]).unwrap(), 1.5);
        assert!(matches!(
            aggregate_weighted(&[1.0], &[1, 2]),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn relative_change_examples() {
        assert_eq!(relative_change(1.0, 1.5).unwrap(), 0.5);
        assert_eq!(relative_change(3.25, 3.25).unwrap(), 0.0);
        assert_eq!(relative_change(-2.0, -1.0).unwrap(), 0.5);
        assert!(matches!(relative_change(1e-13, 1.0), Err(Error::DegenerateBaseline(_))));
        assert!(relative_change(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn single_cluster_report() {
        let ds = Dataset::from_points(vec![vec![0.0], vec![2.0], vec![4.0]]).unwrap();
        let c = Clustering::new(vec![0; 3], vec![vec![2.0]]);
        let r = evaluate_clustering(&ds, &c, &FeedbackProvider::Rss, EvalStream::new(0, 0)).unwrap();
        assert_eq!(r.aggregate, r.clusters[0].value);
        assert_eq!(r.sense, Sense::LowerIsBetter);
    }

    #[test]
    fn invalid_clustering_is_rejected() {
        let ds = Dataset::from_points(vec![vec![0.0], vec![2.0]]).unwrap();
        let c = Clustering::new(vec![0, 0], vec![vec![0.0], vec![1.0]]);
        assert!(matches!(
            evaluate_clustering(&ds, &c, &FeedbackProvider::Rss, EvalStream::new(0, 0)),
            Err(Error::InvalidClustering(_))
        ));
    }

    fn planted(n_per: usize) -> (Dataset, OracleProfile, Clustering) {
        let w: BTreeMap<u32, Vec<f64>> = [
            (0, vec![2.0, 0.0, 0.0, 0.0]),
            (1, vec![0.0, 1.0, 1.0, 0.0]),
        ]
        .into_iter()
        .collect();
        let n = 2 * n_per;
        let points: Vec<Vec<f64>> = (0..n).map(|i| vec![(i / n_per) as f64 * 10.0 + (i % 7) as f64]).collect();
        let segs: Vec<u32> = (0..n).map(|i| (i / n_per) as u32).collect();
        let bookings: Vec<u64> = (0..n as u64).map(|i| (i * 37) % 101).collect();
        let ds = Dataset::from_points(points)
            .unwrap()
            .with_hidden_segments(segs.clone())
            .unwrap()
            .with_bookings(bookings)
            .unwrap();
        let assignment: Vec<usize> = segs.iter().map(|&s| s as usize).collect();
        let (cents, _) = crate::kmeans::update_centroids(&ds, &assignment, 2);
        (ds, OracleProfile::new(w).with_noise(0.0), Clustering::new(assignment, cents))
    }

    #[test]
    fn segment_recovering_clustering_gives_closed_forms() {
        let (ds, profile, c) = planted(300);
        let provider = FeedbackProvider::customizability(profile).unwrap();
        let r = evaluate_clustering(&ds, &c, &provider, EvalStream::new(1, 0)).unwrap();
        // C = 10: segment 0 has |w*|^2 = 4, segment 1 has |w*|^2 = 2
        assert!((r.clusters[0].value - 4.0 / 6.0).abs() < 1e-12);
        assert!((r.clusters[1].value - 2.0 / 8.0).abs() < 1e-12);
        assert_eq!(r.sense, Sense::HigherIsBetter);
        let expected = (4.0 / 6.0 + 2.0 / 8.0) / 2.0;
        assert!((r.aggregate - expected).abs() < 1e-12);
    }

    #[test]
    fn custom_evaluation_is_reproducible_per_stream() {
        let (ds, profile, c) = planted(400);
        let provider = FeedbackProvider::customizability(profile.with_noise(0.05)).unwrap();
        let a = evaluate_clustering(&ds, &c, &provider, EvalStream::new(9, 2)).unwrap();
        let b = evaluate_clustering(&ds, &c, &provider, EvalStream::new(9, 2)).unwrap();
        let other = evaluate_clustering(&ds, &c, &provider, EvalStream::new(9, 3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.aggregate, other.aggregate);
    }

    #[test]
    fn provider_metadata() {
        assert_eq!(FeedbackProvider::Rss.sense(), Sense::LowerIsBetter);
        assert!(FeedbackProvider::Rss.is_deterministic());
        assert_eq!(FeedbackKind::parse("custom").unwrap(), FeedbackKind::Customizability);
        assert_eq!(FeedbackKind::Customizability.sense(), Sense::HigherIsBetter);
        assert!(FeedbackKind::parse("silhouette").is_err());
    }
}
