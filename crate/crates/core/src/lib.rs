//! Hybrid (vector + predicate) nearest-neighbor search with ACORN-style
//! predicate-agnostic graph indices, the usual baselines, synthetic
//! workloads and an evaluation harness.

pub mod baselines;
pub mod build;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod eval;
pub mod graph;
pub mod neighbor;
pub mod persist;
pub mod predicate;
pub mod query;
pub mod search;
pub mod workload;

pub use baselines::{
    oracle_build, oracle_search, postfilter_search, prefilter_search, CostRouter, OraclePartitionSet, Route,
    SelectivitySource,
};
pub use build::{build, build_acorn1, build_with, BuildOptions, BuildOutput, BuildStats};
pub use dataset::{AttrKind, AttrValue, AttributeTuple, Column, Dataset};
pub use distance::Metric;
pub use error::{Error, Result};
pub use graph::{BuildParams, GraphIndex, LevelSampler, PruneStrategy, Variant};
pub use neighbor::Neighbor;
pub use predicate::{BoundPredicate, Filter, Predicate};
pub use query::HybridQuery;
pub use search::{
    filtered_search, get_neighbors, hybrid_search, search_layer, unfiltered_search, SearchCounters, SearchParams,
    SearchReport, Strategy,
};
pub use eval::{
    dist_comps_at_recall, graph_quality, predicate_subgraph, recall_at_dist_comps, sweep, GraphQualityReport,
    SearchMethod, SweepConfig, SweepRow,
};
pub use persist::{load_index, read_index, save_index, write_index};
pub use workload::{ground_truth, GroundTruth, MixtureSpec};
