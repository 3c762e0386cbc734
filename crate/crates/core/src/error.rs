use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("node {node} is not present on level {level}")]
    UnknownNode { node: u32, level: usize },

    #[error("neighbor list for node {node} on level {level} has {len} entries, cap is {cap}")]
    DegreeOverflow {
        node: u32,
        level: usize,
        len: usize,
        cap: usize,
    },

    #[error("node {node} cannot be its own neighbor (level {level})")]
    SelfLoop { node: u32, level: usize },

    #[error("neighbor list for node {node} on level {level} contains {dup} twice")]
    DuplicateNeighbor { node: u32, level: usize, dup: u32 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("unsupported schema: {0}")]
    UnsupportedSchema(String),

    #[error("query {query} has an empty predicate set")]
    EmptyPredicateSet { query: usize },

    #[error("invalid K={k} (efs={efs})")]
    InvalidK { k: usize, efs: usize },

    #[error("lookup strategy {strategy} is not valid for a {variant} index")]
    IncompatibleStrategy {
        strategy: &'static str,
        variant: &'static str,
    },

    #[error("no oracle partition matches the query predicate")]
    UnknownLabel,

    #[error("cannot reach selectivity {target} within tolerance (closest {closest})")]
    UnreachableSelectivity { target: f64, closest: f64 },

    #[error("ground truth covers {gt} queries, workload has {workload}")]
    GroundTruthMismatch { gt: usize, workload: usize },

    #[error("bad magic bytes")]
    BadMagic,

    #[error("unsupported format version {0}")]
    BadVersion(u32),

    #[error("checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    BadChecksum { stored: u32, computed: u32 },

    #[error("file is truncated")]
    Truncated,

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
