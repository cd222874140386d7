//! Simulated customizability oracle.
//!
//! Every hidden segment carries a true preference vector `w*` in R^m. A
//! recommendation ranked with weights `w` scores `C - |w - w*|^2` for a
//! search of that segment, plus Gaussian noise. Fitting picks the weights
//! maximizing the mean score over the fit sample, which is the mean of the
//! sample's true vectors. Customizability of a cluster is the relative
//! change of popularity between the fitted weights and the zero vector,
//! measured on a fresh random sample of heavily booked searches.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::relative_change;
use crate::types::{ClusterFeedbackValue, CustomDetail, Dataset};

/// Largest supported criteria dimension.
pub const MAX_CRITERIA: usize = 24;

/// Below this |pop_0| the price-only baseline is unusable.
pub const PRICE_BASELINE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleProfile {
    /// Criteria dimension.
    pub m: usize,
    /// Hidden true preference weights per segment id.
    pub segments: BTreeMap<u32, Vec<f64>>,
    #[serde(rename = "C")]
    pub score_offset: f64,
    pub noise_sigma: f64,
    pub sample_size: usize,
    pub eval_pool_fraction: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl OracleProfile {
    pub fn new(segments: BTreeMap<u32, Vec<f64>>) -> Self {
        let m = segments.values().next().map_or(4, Vec::len);
        OracleProfile {
            m,
            segments,
            score_offset: 10.0,
            noise_sigma: 0.05,
            sample_size: 100,
            eval_pool_fraction: 0.2,
            rng_seed: 0,
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("oracle profile: {msg}")));
        if self.m == 0 || self.m > MAX_CRITERIA {
            return bad(format!("m = {} outside 1..={MAX_CRITERIA}", self.m));
        }
        if !(self.score_offset > 0.0) {
            return bad("C must be positive".into());
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative".into());
        }
        if self.sample_size == 0 {
            return bad("sample_size must be positive".into());
        }
        if !(self.eval_pool_fraction > 0.0 && self.eval_pool_fraction <= 1.0) {
            return bad("eval_pool_fraction must lie in (0, 1]".into());
        }
        for (id, w) in &self.segments {
            if w.len() != self.m {
                return bad(format!("segment {id} has {} weights, expected {}", w.len(), self.m));
            }
            let norm2: f64 = w.iter().map(|x| x * x).sum();
            if norm2 > self.score_offset {
                return bad(format!("segment {id}: |w*|^2 = {norm2} exceeds C"));
            }
        }
        Ok(())
    }

    /// Errors unless every hidden segment of `dataset` has a weight vector.
    pub fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        let segs = labels(dataset)?.0;
        for &s in segs {
            if !self.segments.contains_key(&s) {
                return Err(Error::UnknownSegment(s));
            }
        }
        Ok(())
    }

    fn weights(&self, segment: u32) -> Result<&[f64]> {
        self.segments
            .get(&segment)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownSegment(segment))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: OracleProfile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn labels(dataset: &Dataset) -> Result<(&[u32], &[u64])> {
    let segs = dataset
        .hidden_segments()
        .ok_or(Error::OracleRequiresLabels("no hidden_segment column"))?;
    let bookings = dataset
        .bookings()
        .ok_or(Error::OracleRequiresLabels("no bookings column"))?;
    Ok((segs, bookings))
}

fn segment_counts(segs: &[u32], points: &[usize]) -> BTreeMap<u32, usize> {
    let mut counts = BTreeMap::new();
    for &i in points {
        *counts.entry(segs[i]).or_insert(0) += 1;
    }
    counts
}

/// Weights maximizing the mean simulated score over `sample`: the mean of
/// the sample's true segment vectors.
pub fn fit_weights(dataset: &Dataset, sample: &[usize], profile: &OracleProfile) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::ClusterTooSmall(0));
    }
    let (segs, _) = labels(dataset)?;
    let n = sample.len() as f64;
    let mut w = vec![0.0; profile.m];
    for (seg, count) in segment_counts(segs, sample) {
        let share = count as f64 / n;
        for (acc, x) in w.iter_mut().zip(profile.weights(seg)?) {
            *acc += share * x;
        }
    }
    Ok(w)
}

/// Mean simulated score of recommendations ranked with `weights` over
/// `eval`, with one noise draw per search when `noise_sigma > 0`.
pub fn popularity<R: Rng + ?Sized>(
    dataset: &Dataset,
    eval: &[usize],
    weights: &[f64],
    profile: &OracleProfile,
    rng: &mut R,
) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::ClusterTooSmall(0));
    }
    let (segs, _) = labels(dataset)?;
    let n = eval.len() as f64;
    let mut mean = 0.0;
    for (seg, count) in segment_counts(segs, eval) {
        let dist2: f64 = weights
            .iter()
            .zip(profile.weights(seg)?)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        mean += count as f64 / n * (profile.score_offset - dist2);
    }
    if profile.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, profile.noise_sigma)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let noise: f64 = (0..eval.len()).map(|_| normal.sample(rng)).sum();
        mean += noise / n;
    }
    Ok(mean)
}

/// Fit set and evaluation pool of a cluster, both drawn from its most
/// booked searches.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSplit {
    pub fit: Vec<usize>,
    pub pool: Vec<usize>,
}

/// Orders `members` by bookings (descending, ties by point index) and
/// carves out the fit set and the evaluation pool.
pub fn sample_split(bookings: &[u64], members: &[usize], profile: &OracleProfile) -> SampleSplit {
    let mut ranked = members.to_vec();
    ranked.sort_by(|&a, &b| bookings[b].cmp(&bookings[a]).then(a.cmp(&b)));
    let n = ranked.len();
    let fit_n = if n < 2 * profile.sample_size {
        n / 2
    } else {
        profile.sample_size
    };
    let top = ((n as f64 * profile.eval_pool_fraction).ceil() as usize).min(n);
    let pool = if top > fit_n {
        ranked[fit_n..top].to_vec()
    } else {
        ranked[fit_n..].to_vec()
    };
    ranked.truncate(fit_n);
    SampleSplit { fit: ranked, pool }
}

/// One customizability evaluation of the cluster made of `members`.
pub fn customizability_cluster<R: Rng + ?Sized>(
    dataset: &Dataset,
    members: &[usize],
    profile: &OracleProfile,
    rng: &mut R,
) -> Result<ClusterFeedbackValue> {
    if members.len() < 2 {
        return Err(Error::ClusterTooSmall(members.len()));
    }
    let (_, bookings) = labels(dataset)?;
    let SampleSplit { fit, pool } = sample_split(bookings, members, profile);
    let eval: Vec<usize> = if pool.len() <= profile.sample_size {
        pool
    } else {
        rand::seq::index::sample(rng, pool.len(), profile.sample_size)
            .into_iter()
            .map(|j| pool[j])
            .collect()
    };

    let fitted = fit_weights(dataset, &fit, profile)?;
    let pop_w = popularity(dataset, &eval, &fitted, profile, rng)?;
    let pop_0 = popularity(dataset, &eval, &vec![0.0; profile.m], profile, rng)?;
    if pop_0.abs() < PRICE_BASELINE_EPS {
        return Err(Error::DegeneratePriceBaseline(pop_0));
    }
    Ok(ClusterFeedbackValue {
        value: relative_change(pop_0, pop_w)?,
        cluster_size: members.len(),
        detail: Some(CustomDetail {
            pop_w,
            pop_0,
            fitted_weights: fitted,
        }),
    })
}
