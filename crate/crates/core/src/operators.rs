//! Split and merge actions on a clustering, and the size-gated
//! split-or-merge rule.
//!
//! Both actions keep cluster ids dense: the affected clusters are removed,
//! the survivors keep their relative order, and new clusters are appended.

use crate::error::{Error, Result};
use crate::kmeans::{assign_points, has_two_distinct, lloyd_run, repair_empty, KMeansConfig};
use crate::rng::{derive_seed, TAG_SPLIT};
use crate::types::{sq_dist, Clustering, Dataset, FeedbackReport, Sense};

/// Smallest cluster count any action may produce.
pub const MIN_CLUSTERS: usize = 2;

/// A 2-means partition of one cluster's points.
#[derive(Debug, Clone)]
pub struct Bisection {
    /// Point indices of the bisected cluster, ascending.
    pub members: Vec<usize>,
    /// Side (0 or 1) of each member, parallel to `members`.
    pub sides: Vec<usize>,
    pub centroids: [Vec<f64>; 2],
}

impl Bisection {
    pub fn side_members(&self, side: usize) -> Vec<usize> {
        self.members
            .iter()
            .zip(&self.sides)
            .filter(|&(_, &s)| s == side)
            .map(|(&i, _)| i)
            .collect()
    }
}

/// Whether the cluster can be bisected: at least two distinct points.
pub fn is_splittable(dataset: &Dataset, members: &[usize]) -> bool {
    members.len() >= 2 && has_two_distinct(dataset, members)
}

/// Runs a seeded 2-means on the points of `target` only.
pub fn bisect(
    dataset: &Dataset,
    clustering: &Clustering,
    target: usize,
    seed: u64,
) -> Result<Bisection> {
    if target >= clustering.k() {
        return Err(Error::UnknownCluster(target));
    }
    let members = clustering.members_of(target);
    if members.len() < 2 {
        return Err(Error::CannotSplitSingleton(target));
    }
    if !has_two_distinct(dataset, &members) {
        return Err(Error::IdenticalPoints(target));
    }
    let sub = dataset.subset(&members);
    let run = lloyd_run(&sub, &KMeansConfig::new(2, derive_seed(seed, &[TAG_SPLIT])))?;
    let mut cents = run.clustering.centroids.into_iter();
    let centroids = [cents.next().unwrap(), cents.next().unwrap()];
    Ok(Bisection {
        members,
        sides: run.clustering.assignment,
        centroids,
    })
}

/// Replaces `target` by two clusters and runs one global assignment pass.
///
/// The two new clusters get ids `k - 1` and `k` of the resulting `k + 1`
/// clusters. Centroids are not recomputed after the assignment pass; any
/// cluster it leaves empty is re-seeded.
pub fn split_cluster(
    dataset: &Dataset,
    clustering: &Clustering,
    target: usize,
    seed: u64,
) -> Result<Clustering> {
    let bisection = bisect(dataset, clustering, target, seed)?;
    let [left, right] = bisection.centroids;
    let mut centroids: Vec<Vec<f64>> = clustering
        .centroids
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != target)
        .map(|(_, m)| m.clone())
        .collect();
    centroids.push(left);
    centroids.push(right);

    let assignment = assign_points(dataset, &centroids);
    let mut sizes = vec![0usize; centroids.len()];
    for &c in &assignment {
        sizes[c] += 1;
    }
    let empties: Vec<usize> = (0..sizes.len()).filter(|&c| sizes[c] == 0).collect();
    if empties.is_empty() {
        Ok(Clustering::new(assignment, centroids))
    } else {
        log::debug!("split of {target} emptied clusters {empties:?}");
        repair_empty(dataset, assignment, centroids, &empties)
    }
}

/// Replaces clusters `i` and `j` by their union, appended as id `k - 2`.
pub fn merge_pair(dataset: &Dataset, clustering: &Clustering, i: usize, j: usize) -> Result<Clustering> {
    let k = clustering.k();
    for c in [i, j] {
        if c >= k {
            return Err(Error::UnknownCluster(c));
        }
    }
    if i == j {
        return Err(Error::SelfMerge(i));
    }
    if k <= MIN_CLUSTERS {
        return Err(Error::MinimumClusterCount { min: MIN_CLUSTERS });
    }
    let merged_id = k - 2;
    let mut remap = vec![0usize; k];
    let mut next = 0;
    for (c, slot) in remap.iter_mut().enumerate() {
        if c == i || c == j {
            *slot = merged_id;
        } else {
            *slot = next;
            next += 1;
        }
    }

    let dim = dataset.dim();
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    let assignment: Vec<usize> = clustering
        .assignment
        .iter()
        .enumerate()
        .map(|(p, &c)| {
            if c == i || c == j {
                count += 1;
                for (s, x) in sum.iter_mut().zip(dataset.point(p)) {
                    *s += x;
                }
            }
            remap[c]
        })
        .collect();
    let union_mean: Vec<f64> = sum.into_iter().map(|s| s / count as f64).collect();

    let mut centroids: Vec<Vec<f64>> = clustering
        .centroids
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != i && c != j)
        .map(|(_, m)| m.clone())
        .collect();
    centroids.push(union_mean);
    Ok(Clustering::new(assignment, centroids))
}

/// Pair of distinct clusters with the closest centroids, `i < j`; ties go
/// to the lexicographically smallest pair.
pub fn closest_centroid_pair(clustering: &Clustering) -> Result<(usize, usize)> {
    let k = clustering.k();
    if k < 2 {
        return Err(Error::MinimumClusterCount { min: 2 });
    }
    let mut best = (0, 1);
    let mut best_d = f64::INFINITY;
    for i in 0..k {
        for j in i + 1..k {
            let d = sq_dist(&clustering.centroids[i], &clustering.centroids[j]);
            if d < best_d {
                best_d = d;
                best = (i, j);
            }
        }
    }
    Ok(best)
}

/// Cluster whose centroid is closest to that of `cluster` (ties to the
/// lowest id).
pub fn nearest_cluster(clustering: &Clustering, cluster: usize) -> Result<usize> {
    let k = clustering.k();
    if cluster >= k {
        return Err(Error::UnknownCluster(cluster));
    }
    let m = &clustering.centroids[cluster];
    (0..k)
        .filter(|&c| c != cluster)
        .map(|c| (c, sq_dist(m, &clustering.centroids[c])))
        .fold(None, |best: Option<(usize, f64)>, (c, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((c, d)),
        })
        .map(|(c, _)| c)
        .ok_or(Error::MinimumClusterCount { min: 2 })
}

/// Cluster ids from worst to best feedback; ties keep ascending id order.
pub fn clusters_worst_first(report: &FeedbackReport) -> Vec<usize> {
    let values = report.per_cluster();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (values[a], values[b]);
        let ord = match report.sense {
            Sense::LowerIsBetter => y.total_cmp(&x),
            Sense::HigherIsBetter => x.total_cmp(&y),
        };
        ord.then(a.cmp(&b))
    });
    order
}

/// The cluster with the worst feedback: maximum when lower is better,
/// minimum when higher is better; ties go to the lowest id.
pub fn worst_cluster(report: &FeedbackReport) -> usize {
    assert!(!report.clusters.is_empty(), "empty feedback report");
    clusters_worst_first(report)[0]
}

/// Action picked by the split-or-merge rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmAction {
    Split(usize),
    Merge(usize, usize),
}

/// Outcome of the size rule before a merge partner is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmDecision {
    Split(usize),
    MergeWorst,
}

/// Position of each cluster when sorted by size descending, ties by id.
pub fn size_ranks(sizes: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let mut rank = vec![0; sizes.len()];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    rank
}

/// The size-gated rule on plain data.
///
/// The worst cluster is split when its size rank is below `ceil(k / 2)` and
/// merged otherwise. An unsplittable worst cluster is merged instead; a merge
/// that would go below `min_k` becomes a split of the worst cluster, or of
/// the largest splittable other cluster when the worst cannot be split.
pub fn sm_rule(sizes: &[usize], splittable: &[bool], worst: usize, min_k: usize) -> Result<SmDecision> {
    let k = sizes.len();
    if worst >= k {
        return Err(Error::UnknownCluster(worst));
    }
    let rank = size_ranks(sizes);
    let prefer_split = rank[worst] < k.div_ceil(2);
    let can_merge = k > min_k.max(MIN_CLUSTERS);

    if prefer_split && splittable[worst] {
        return Ok(SmDecision::Split(worst));
    }
    if can_merge {
        return Ok(SmDecision::MergeWorst);
    }
    if splittable[worst] {
        return Ok(SmDecision::Split(worst));
    }
    let mut others: Vec<usize> = (0..k).filter(|&c| c != worst && splittable[c]).collect();
    others.sort_by_key(|&c| rank[c]);
    others
        .first()
        .map(|&c| SmDecision::Split(c))
        .ok_or(Error::NoLegalAction(worst))
}

/// Split-or-merge decision for the worst cluster; merges pair it with the
/// cluster whose centroid is nearest.
pub fn sm_decide(dataset: &Dataset, clustering: &Clustering, worst: usize, min_k: usize) -> Result<SmAction> {
    let members = clustering.members();
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let splittable: Vec<bool> = members.iter().map(|m| is_splittable(dataset, m)).collect();
    match sm_rule(&sizes, &splittable, worst, min_k)? {
        SmDecision::Split(c) => Ok(SmAction::Split(c)),
        SmDecision::MergeWorst => Ok(SmAction::Merge(worst, nearest_cluster(clustering, worst)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{validate_clustering, ClusterFeedbackValue};

    fn report(values: &[f64], sense: Sense) -> FeedbackReport {
        FeedbackReport {
            clusters: values
                .iter()
                .map(|&value| ClusterFeedbackValue {
                    value,
                    cluster_size: 1,
                    detail: None,
                })
                .collect(),
            aggregate: 0.0,
            sense,
        }
    }

    #[test]
    fn worst_cluster_rules() {
        assert_eq!(worst_cluster(&report(&[0.1, 0.9, 0.3], Sense::LowerIsBetter)), 1);
        assert_eq!(worst_cluster(&report(&[0.5, -0.2, 0.5], Sense::HigherIsBetter)), 1);
        assert_eq!(worst_cluster(&report(&[2.0, 2.0, 2.0], Sense::LowerIsBetter)), 0);
        assert_eq!(worst_cluster(&report(&[2.0, 2.0, 2.0], Sense::HigherIsBetter)), 0);
        assert_eq!(
            clusters_worst_first(&report(&[0.3, 0.9, 0.3, 0.1], Sense::LowerIsBetter)),
            vec![1, 0, 2, 3]
        );
    }

    #[test]
    fn closest_pair_and_ties() {
        let c = Clustering::new(vec![0, 1, 2], vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![9.0, 9.0]]);
        assert_eq!(closest_centroid_pair(&c).unwrap(), (0, 1));
        // exactly equidistant centroids (unit simplex corners)
        let eq = Clustering::new(
            vec![0, 1, 2],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        );
        assert_eq!(closest_centroid_pair(&eq).unwrap(), (0, 1));
        assert!(closest_centroid_pair(&Clustering::new(vec![0], vec![vec![0.0]])).is_err());
    }

    #[test]
    fn nearest_cluster_ties_to_lowest_id() {
        let c = Clustering::new(vec![0, 1, 2], vec![vec![1.0], vec![0.0], vec![2.0]]);
        assert_eq!(nearest_cluster(&c, 0).unwrap(), 1);
        assert_eq!(nearest_cluster(&c, 2).unwrap(), 0);
    }

    #[test]
    fn two_distinct_points_split_apart() {
        let ds = Dataset::from_points(vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![100.0, 0.0]]).unwrap();
        let c = Clustering::new(vec![0, 0, 1], vec![vec![5.0, 0.0], vec![100.0, 0.0]]);
        let b = bisect(&ds, &c, 0, 3).unwrap();
        assert_ne!(b.sides[0], b.sides[1]);
        let s = split_cluster(&ds, &c, 0, 3).unwrap();
        assert_eq!(s.k(), 3);
        assert!(validate_clustering(&ds, &s).is_empty());
        // old cluster 1 becomes 0; the children are 1 and 2
        assert_eq!(s.assignment[2], 0);
        assert_ne!(s.assignment[0], s.assignment[1]);
    }

    #[test]
    fn split_refuses_singletons_and_identical_points() {
        let ds = Dataset::from_points(vec![vec![0.0], vec![0.0], vec![5.0]]).unwrap();
        let c = Clustering::new(vec![0, 0, 1], vec![vec![0.0], vec![5.0]]);
        assert!(matches!(split_cluster(&ds, &c, 1, 0), Err(Error::CannotSplitSingleton(1))));
        assert!(matches!(split_cluster(&ds, &c, 0, 0), Err(Error::IdenticalPoints(0))));
        assert!(matches!(split_cluster(&ds, &c, 7, 0), Err(Error::UnknownCluster(7))));
    }

    #[test]
    fn merge_two_singletons() {
        let ds = Dataset::from_points(vec![vec![0.0, 0.0], vec![2.0, 2.0], vec![9.0, 9.0], vec![9.0, 8.0]]).unwrap();
        let c = Clustering::new(
            vec![0, 1, 2, 2],
            vec![vec![0.0, 0.0], vec![2.0, 2.0], vec![9.0, 8.5]],
        );
        let m = merge_pair(&ds, &c, 0, 1).unwrap();
        assert_eq!(m.k(), 2);
        assert_eq!(m.centroids[1], vec![1.0, 1.0]);
        assert_eq!(m.assignment, vec![1, 1, 0, 0]);
        assert!(validate_clustering(&ds, &m).is_empty());
    }

    #[test]
    fn merge_guards() {
        let ds = Dataset::from_points(vec![vec![0.0], vec![1.0]]).unwrap();
        let c = Clustering::new(vec![0, 1], vec![vec![0.0], vec![1.0]]);
        assert!(matches!(merge_pair(&ds, &c, 0, 1), Err(Error::MinimumClusterCount { .. })));
        assert!(matches!(merge_pair(&ds, &c, 1, 1), Err(Error::SelfMerge(1))));
    }

    #[test]
    fn size_rule_basic_cases() {
        let yes = [true, true, true];
        assert_eq!(sm_rule(&[10, 4, 2], &yes, 0, 2).unwrap(), SmDecision::Split(0));
        assert_eq!(sm_rule(&[10, 4, 2], &yes, 2, 2).unwrap(), SmDecision::MergeWorst);
        // rank 1 < ceil(3/2) = 2
        assert_eq!(sm_rule(&[10, 4, 2], &yes, 1, 2).unwrap(), SmDecision::Split(1));
        // ties by id: sizes equal, cluster 1 has rank 1 < 2
        assert_eq!(sm_rule(&[5, 5, 5, 5], &[true; 4], 1, 2).unwrap(), SmDecision::Split(1));
        assert_eq!(sm_rule(&[5, 5, 5, 5], &[true; 4], 2, 2).unwrap(), SmDecision::MergeWorst);
    }

    #[test]
    fn size_rule_overrides() {
        // top-half singleton cannot split -> merge
        assert_eq!(sm_rule(&[1, 1, 1], &[false; 3], 0, 2).unwrap(), SmDecision::MergeWorst);
        // k = 2 forbids merge -> split the worst
        assert_eq!(sm_rule(&[8, 3], &[true, true], 1, 2).unwrap(), SmDecision::Split(1));
        // k = 2, worst is a singleton -> split the other cluster
        assert_eq!(sm_rule(&[8, 1], &[true, false], 1, 2).unwrap(), SmDecision::Split(0));
        // nothing legal
        assert!(matches!(sm_rule(&[1, 1], &[false, false], 0, 2), Err(Error::NoLegalAction(0))));
        // a larger min_k also blocks merges
        assert_eq!(sm_rule(&[9, 4, 2], &[true; 3], 2, 3).unwrap(), SmDecision::Split(2));
    }

    #[test]
    fn sm_decide_picks_nearest_partner() {
        let ds = Dataset::from_points(vec![
            vec![0.0], vec![0.1], vec![0.2], vec![0.3],
            vec![5.0], vec![5.1],
            vec![6.0],
        ])
        .unwrap();
        let c = Clustering::new(vec![0, 0, 0, 0, 1, 1, 2], vec![vec![0.15], vec![5.05], vec![6.0]]);
        assert_eq!(sm_decide(&ds, &c, 2, 2).unwrap(), SmAction::Merge(2, 1));
        assert_eq!(sm_decide(&ds, &c, 0, 2).unwrap(), SmAction::Split(0));
    }
}
