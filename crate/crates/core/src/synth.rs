//! Synthetic flight searches drawn from a Gaussian mixture of customer
//! segments.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::OracleProfile;
use crate::rng::{substream, TAG_GENERATE};
use crate::types::{Dataset, FEATURE_NAMES};

const N_FEATURES: usize = FEATURE_NAMES.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub id: u32,
    pub mixture_weight: f64,
    pub feature_means: Vec<f64>,
    pub feature_stddevs: Vec<f64>,
    pub oracle_weights: Vec<f64>,
    /// `(mu, sigma)` of the log-normal booking counts.
    pub booking_lognormal: (f64, f64),
}

/// Oracle knobs written next to the generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSettings {
    #[serde(rename = "C")]
    pub score_offset: f64,
    pub noise_sigma: f64,
    pub sample_size: usize,
    pub eval_pool_fraction: f64,
    pub rng_seed: u64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            score_offset: 10.0,
            noise_sigma: 0.05,
            sample_size: 100,
            eval_pool_fraction: 0.2,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_points: usize,
    pub segments: Vec<SegmentSpec>,
    pub seed: u64,
    #[serde(default)]
    pub oracle: OracleSettings,
}

fn segment(
    id: u32,
    mixture_weight: f64,
    means: [f64; N_FEATURES],
    stddevs: [f64; N_FEATURES],
    oracle_weights: [f64; 4],
    booking_lognormal: (f64, f64),
) -> SegmentSpec {
    SegmentSpec {
        id,
        mixture_weight,
        feature_means: means.to_vec(),
        feature_stddevs: stddevs.to_vec(),
        oracle_weights: oracle_weights.to_vec(),
        booking_lognormal,
    }
}

impl GeneratorConfig {
    /// Four planted segments (business, leisure, family, long haul) whose
    /// oracle preferences are orthogonal vectors of equal norm.
    pub fn planted(n_points: usize, seed: u64) -> Self {
        GeneratorConfig {
            n_points,
            seed,
            oracle: OracleSettings::default(),
            segments: vec![
                segment(
                    0,
                    0.30,
                    [1200.0, 7.0, 2.0, 1.0, 0.0, 1.0, 1.0, 3.0],
                    [500.0, 5.0, 1.0, 0.3, 0.2, 0.5, 1.0, 1.0],
                    [2.0, 0.0, 0.0, 0.0],
                    (2.2, 0.8),
                ),
                segment(
                    1,
                    0.35,
                    [2000.0, 40.0, 6.0, 2.0, 0.0, 1.0, 4.0, 6.0],
                    [800.0, 15.0, 2.0, 0.6, 0.3, 0.6, 1.0, 0.8],
                    [0.0, 2.0, 0.0, 0.0],
                    (2.0, 0.9),
                ),
                segment(
                    2,
                    0.20,
                    [2500.0, 80.0, 11.0, 4.0, 2.0, 1.0, 5.0, 5.0],
                    [900.0, 25.0, 3.0, 0.8, 0.8, 0.6, 1.0, 1.0],
                    [0.0, 0.0, 2.0, 0.0],
                    (1.8, 0.7),
                ),
                segment(
                    3,
                    0.15,
                    [8000.0, 55.0, 14.0, 1.5, 0.2, 2.0, 3.0, 3.0],
                    [1800.0, 20.0, 4.0, 0.6, 0.4, 0.3, 2.0, 2.0],
                    [0.0, 0.0, 0.0, 2.0],
                    (2.4, 0.8),
                ),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("generator: {msg}")));
        if self.n_points == 0 {
            return bad("n_points must be positive".into());
        }
        if self.segments.is_empty() {
            return bad("at least one segment is required".into());
        }
        let total: f64 = self.segments.iter().map(|s| s.mixture_weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("mixture weights sum to {total}, expected 1"));
        }
        let m = self.segments[0].oracle_weights.len();
        let mut ids = HashSet::new();
        for s in &self.segments {
            if !ids.insert(s.id) {
                return bad(format!("duplicate segment id {}", s.id));
            }
            if !(s.mixture_weight >= 0.0) {
                return bad(format!("segment {}: negative mixture weight", s.id));
            }
            if s.feature_means.len() != N_FEATURES || s.feature_stddevs.len() != N_FEATURES {
                return bad(format!("segment {}: expected {N_FEATURES} means and stddevs", s.id));
            }
            if s.feature_stddevs.iter().any(|&sd| !(sd >= 0.0)) {
                return bad(format!("segment {}: stddevs must be non-negative", s.id));
            }
            if s.oracle_weights.len() != m {
                return bad(format!("segment {}: oracle weights must all have length {m}", s.id));
            }
            if !(s.booking_lognormal.1 >= 0.0) {
                return bad(format!("segment {}: booking sigma must be non-negative", s.id));
            }
        }
        self.oracle_profile().validate()
    }

    /// The oracle profile matching this generator's hidden segments.
    pub fn oracle_profile(&self) -> OracleProfile {
        let segments: BTreeMap<u32, Vec<f64>> = self
            .segments
            .iter()
            .map(|s| (s.id, s.oracle_weights.clone()))
            .collect();
        OracleProfile {
            m: self.segments.first().map_or(0, |s| s.oracle_weights.len()),
            segments,
            score_offset: self.oracle.score_offset,
            noise_sigma: self.oracle.noise_sigma,
            sample_size: self.oracle.sample_size,
            eval_pool_fraction: self.oracle.eval_pool_fraction,
            rng_seed: self.oracle.rng_seed,
        }
    }
}

fn quantize(feature: usize, x: f64) -> f64 {
    match feature {
        // distance, advance purchase, stay duration
        0..=2 => x.max(0.0),
        3 => x.round().max(1.0),
        4 => x.round().max(0.0),
        5 => x.round().clamp(0.0, 2.0),
        6 | 7 => x.round().clamp(0.0, 6.0),
        _ => x,
    }
}

/// Draws `config.n_points` round-trip searches.
pub fn generate(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = substream(config.seed, &[TAG_GENERATE]);
    let bookings_dist: Vec<LogNormal<f64>> = config
        .segments
        .iter()
        .map(|s| LogNormal::new(s.booking_lognormal.0, s.booking_lognormal.1))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidConfig(format!("generator: {e}")))?;
    let cumulative: Vec<f64> = config
        .segments
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s.mixture_weight;
            Some(*acc)
        })
        .collect();

    let n = config.n_points;
    let mut points = Vec::with_capacity(n);
    let mut segs = Vec::with_capacity(n);
    let mut bookings = Vec::with_capacity(n);
    let mut origin = Vec::with_capacity(n);
    let mut destination = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let si = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(config.segments.len() - 1);
        let s = &config.segments[si];
        let p: Vec<f64> = (0..N_FEATURES)
            .map(|f| {
                let z: f64 = StandardNormal.sample(&mut rng);
                quantize(f, s.feature_means[f] + s.feature_stddevs[f] * z)
            })
            .collect();
        points.push(p);
        segs.push(s.id);
        bookings.push(bookings_dist[si].sample(&mut rng).round().max(0.0) as u64);
        origin.push(format!("O{:02}", rng.random_range(0..40u32)));
        destination.push(format!("D{:02}", rng.random_range(0..40u32)));
    }
    Dataset::new(points, FEATURE_NAMES.iter().map(|s| s.to_string()).collect())?
        .with_bookings(bookings)?
        .with_hidden_segments(segs)?
        .with_route(origin, destination)
}

/// Per-feature z-score parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub mean: f64,
    pub stddev: f64,
}

/// Z-scores every feature (population stddev). Constant features are left
/// untouched and report a stddev of 0.
pub fn standardize(dataset: &Dataset) -> (Dataset, Vec<FeatureScale>) {
    let dim = dataset.dim();
    let n = dataset.len() as f64;
    let scales: Vec<FeatureScale> = (0..dim)
        .map(|f| {
            let mean = dataset.points().map(|p| p[f]).sum::<f64>() / n;
            let var = dataset.points().map(|p| (p[f] - mean).powi(2)).sum::<f64>() / n;
            let stddev = var.sqrt();
            if stddev > 0.0 {
                FeatureScale { mean, stddev }
            } else {
                FeatureScale { mean, stddev: 0.0 }
            }
        })
        .collect();
    let values = dataset
        .points()
        .flat_map(|p| {
            p.iter().zip(&scales).map(|(&x, s)| {
                if s.stddev > 0.0 {
                    (x - s.mean) / s.stddev
                } else {
                    x
                }
            })
        })
        .collect();
    (dataset.with_values(values), scales)
}

/// Inverse of [`standardize`].
pub fn destandardize(dataset: &Dataset, scales: &[FeatureScale]) -> Dataset {
    let values = dataset
        .points()
        .flat_map(|p| {
            p.iter().zip(scales).map(|(&z, s)| {
                if s.stddev > 0.0 {
                    z * s.stddev + s.mean
                } else {
                    z
                }
            })
        })
        .collect();
    dataset.with_values(values)
}
