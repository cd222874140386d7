use std::path::PathBuf;

use thiserror::Error;

use crate::types::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid clustering: {}", join_violations(.0))]
    InvalidClustering(Vec<Violation>),

    #[error("k exceeds distinct points (k = {k}, distinct points = {distinct})")]
    KExceedsDistinctPoints { k: usize, distinct: usize },

    #[error("cannot repair empty clusters: k = {k} exceeds {points} points")]
    RepairImpossible { k: usize, points: usize },

    #[error("cluster {0} does not exist")]
    UnknownCluster(usize),

    #[error("cannot split singleton cluster {0}")]
    CannotSplitSingleton(usize),

    #[error("cannot split cluster {0}: all of its points are identical")]
    IdenticalPoints(usize),

    #[error("cannot merge cluster {0} with itself")]
    SelfMerge(usize),

    #[error("minimum cluster count {min} reached")]
    MinimumClusterCount { min: usize },

    #[error("no legal action for worst cluster {0}")]
    NoLegalAction(usize),

    #[error("length mismatch: {left} values against {right} sizes")]
    LengthMismatch { left: usize, right: usize },

    #[error("cluster of {0} point(s) cannot be evaluated")]
    ClusterTooSmall(usize),

    #[error("degenerate baseline: |{0}| is below epsilon")]
    DegenerateBaseline(f64),

    #[error("degenerate price baseline: pop_0 = {0}")]
    DegeneratePriceBaseline(f64),

    #[error("oracle requires generator-labeled data ({0})")]
    OracleRequiresLabels(&'static str),

    #[error("segment {0} has no weight vector in the oracle profile")]
    UnknownSegment(u32),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("{path}: file is empty")]
    EmptyFile { path: PathBuf },

    #[error("{path}: row {row}, column `{column}`: cannot parse {value:?}")]
    ParseCell {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
