//! Pre-filtering, post-filtering and oracle partitions, plus the
//! selectivity router that hands low-selectivity queries to the pre-filter.

use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::build::build;
use crate::dataset::{Column, Dataset};
use crate::error::{Error, Result};
use crate::graph::{BuildParams, GraphIndex, Variant};
use crate::neighbor::Neighbor;
use crate::predicate::{estimate_selectivity, exact_selectivity, Filter, Predicate};
use crate::query::HybridQuery;
use crate::search::{unfiltered_search, SearchCounters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Route {
    Prefilter,
    GraphSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectivitySource {
    Exact,
    Sampled { sample_size: usize, seed: u64 },
}

/// Sends a query to the pre-filter iff its estimated selectivity is at most
/// `1/gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRouter {
    pub gamma: usize,
    pub source: SelectivitySource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub route: Route,
    pub estimate: f64,
}

impl CostRouter {
    pub fn new(gamma: usize, source: SelectivitySource) -> Result<Self> {
        if gamma == 0 {
            return Err(Error::InvalidParams("router gamma must be at least 1".into()));
        }
        Ok(CostRouter { gamma, source })
    }

    pub fn threshold(&self) -> f64 {
        1.0 / self.gamma as f64
    }

    /// The decision for an already estimated selectivity.
    pub fn decide(&self, estimate: f64) -> Route {
        if estimate <= self.threshold() {
            Route::Prefilter
        } else {
            Route::GraphSearch
        }
    }

    pub fn route(&self, p: &Predicate, ds: &Dataset) -> Result<RouteDecision> {
        let estimate = match self.source {
            SelectivitySource::Exact => exact_selectivity(p, ds)?.value,
            SelectivitySource::Sampled { sample_size, seed } => estimate_selectivity(p, ds, sample_size, seed)?.value,
        };
        Ok(RouteDecision {
            route: self.decide(estimate),
            estimate,
        })
    }
}

/// Exact scan: the `k` nearest rows passing `filter`.
pub fn prefilter_scan<F: Filter + ?Sized>(
    ds: &Dataset,
    x_q: &[f32],
    filter: &F,
    k: usize,
    counters: &mut SearchCounters,
) -> Vec<Neighbor> {
    let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
    if k == 0 {
        return Vec::new();
    }
    for id in 0..ds.len() as u32 {
        counters.predicate_evaluations += 1;
        if !filter.passes(id) {
            continue;
        }
        counters.distance_computations += 1;
        let n = Neighbor::new(id, ds.score_to(x_q, id));
        if heap.len() < k {
            heap.push(n);
        } else if n < *heap.peek().expect("non-empty") {
            heap.pop();
            heap.push(n);
        }
    }
    counters.nodes_visited = counters.distance_computations;
    heap.into_sorted_vec()
}

pub fn prefilter_search(ds: &Dataset, q: &HybridQuery, counters: &mut SearchCounters) -> Result<Vec<Neighbor>> {
    if q.vector.len() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            found: q.vector.len(),
        });
    }
    let filter = q.predicate.bind(ds)?;
    Ok(prefilter_scan(ds, &q.vector, &filter, q.k, counters))
}

/// Number of unfiltered candidates gathered for selectivity `s`:
/// `ceil(k / s)`, capped at `n`.
pub fn oversearch_k(k: usize, s: f64, n: usize) -> usize {
    ((k as f64 / s).ceil() as usize).clamp(k.min(n), n)
}

/// Unfiltered HNSW search for `ceil(k/s)` candidates (beam at least `efs`),
/// then the predicate, then the first `k` survivors.
pub fn postfilter_search(
    index: &GraphIndex,
    ds: &Dataset,
    q: &HybridQuery,
    efs: usize,
    s: f64,
    counters: &mut SearchCounters,
) -> Result<Vec<Neighbor>> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::InvalidParams(format!("selectivity {s} outside (0, 1]")));
    }
    if q.k == 0 {
        return Err(Error::InvalidK { k: q.k, efs });
    }
    let filter = q.predicate.bind(ds)?;
    let k_prime = oversearch_k(q.k, s, ds.len());
    let ef = efs.max(k_prime);
    let mut out = unfiltered_search(index, ds, &q.vector, k_prime, ef, counters)?;
    out.retain(|n| {
        counters.predicate_evaluations += 1;
        filter.passes(n.id)
    });
    out.truncate(q.k);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Partition {
    /// Global ids of the members, in ascending order; local id `i` is `ids[i]`.
    pub ids: Vec<u32>,
    pub data: Dataset,
    pub index: GraphIndex,
}

/// One HNSW per equality label over the rows carrying that label.
#[derive(Debug, Clone)]
pub struct OraclePartitionSet {
    pub label_attr: usize,
    pub params: BuildParams,
    pub partitions: BTreeMap<i64, Option<Partition>>,
}

impl OraclePartitionSet {
    pub fn partition(&self, label: i64) -> Option<&Partition> {
        self.partitions.get(&label).and_then(Option::as_ref)
    }

    pub fn labels(&self) -> impl Iterator<Item = i64> + '_ {
        self.partitions.keys().copied()
    }
}

/// Builds a partition for every predicate in `labels`, which must all be
/// equality tests on one integer attribute. Labels nobody carries get an
/// empty partition.
pub fn oracle_build(ds: &Dataset, labels: &[Predicate], params: &BuildParams) -> Result<OraclePartitionSet> {
    if params.variant != Variant::Hnsw {
        return Err(Error::InvalidParams("oracle partitions are HNSW indices".into()));
    }
    let mut attr = None;
    let mut values = Vec::with_capacity(labels.len());
    for p in labels {
        match p {
            Predicate::Equals { attr: a, value } if attr.is_none() || attr == Some(*a) => {
                attr = Some(*a);
                values.push(*value);
            }
            other => {
                return Err(Error::UnsupportedSchema(format!(
                    "oracle partitions need equality predicates on one attribute, got {other:?}"
                )))
            }
        }
    }
    let label_attr = attr.ok_or_else(|| Error::InvalidParams("no labels given".into()))?;
    let column = match ds.column(label_attr) {
        Some(Column::Int(v)) => v,
        other => {
            return Err(Error::UnsupportedSchema(format!(
                "attribute {label_attr} is {:?}, not an integer label",
                other.map(Column::kind)
            )))
        }
    };
    let mut members: BTreeMap<i64, Vec<u32>> = values.iter().map(|&v| (v, Vec::new())).collect();
    for (id, v) in column.iter().enumerate() {
        if let Some(ids) = members.get_mut(v) {
            ids.push(id as u32);
        }
    }
    let mut partitions = BTreeMap::new();
    for (label, ids) in members {
        let part = if ids.is_empty() {
            None
        } else {
            let data = ds.subset(&ids);
            let index = build(&data, params)?;
            Some(Partition { ids, data, index })
        };
        partitions.insert(label, part);
    }
    Ok(OraclePartitionSet {
        label_attr,
        params: *params,
        partitions,
    })
}

/// Unfiltered search inside the partition matching the query's label.
pub fn oracle_search(
    ops: &OraclePartitionSet,
    q: &HybridQuery,
    k: usize,
    efs: usize,
    counters: &mut SearchCounters,
) -> Result<Vec<Neighbor>> {
    let label = match q.predicate {
        Predicate::Equals { attr, value } if attr == ops.label_attr => value,
        _ => return Err(Error::UnknownLabel),
    };
    let part = match ops.partitions.get(&label) {
        None => return Err(Error::UnknownLabel),
        Some(None) => return Ok(Vec::new()),
        Some(Some(p)) => p,
    };
    let k = k.min(part.ids.len());
    let efs = efs.max(k);
    let mut out = unfiltered_search(&part.index, &part.data, &q.vector, k, efs, counters)?;
    for n in &mut out {
        n.id = part.ids[n.id as usize];
    }
    Ok(out)
}
