//! Feedback clustering over k-means.
//!
//! A clustering is refined by split and merge actions driven by per-cluster
//! feedback. Two loops are provided ([`engines::run_sme`] and
//! [`engines::run_sm`]) with two feedback providers: the residual square
//! sum and a simulated flight-search customizability oracle. The
//! [`synth`] and [`harness`] modules generate planted data and run the
//! comparison protocol over several methods and cluster counts.

// `!(x >= 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engines;
pub mod error;
pub mod feedback;
pub mod harness;
pub mod ingest;
pub mod kmeans;
pub mod operators;
pub mod oracle;
pub mod rng;
pub mod synth;
pub mod trace;
pub mod types;

pub use engines::{best_clustering, run, run_sm, run_sme, EngineConfig};
pub use error::{Error, Result};
pub use feedback::{evaluate_clustering, EvalStream, FeedbackKind, FeedbackProvider};
pub use kmeans::{lloyd, KMeansConfig};
pub use oracle::OracleProfile;
pub use trace::{Action, Method, RunTrace, TraceRecord};
pub use types::{validate_clustering, ClusterFeedbackValue, Clustering, Dataset, FeedbackReport, Sense, Violation};
