//! Recall/QPS sweeps, distance-computation accounting, build measurements
//! and graph-quality analysis of predicate subgraphs.

use std::time::Instant;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{oracle_search, postfilter_search, prefilter_search, CostRouter, OraclePartitionSet};
use crate::build::{build_with, BuildOptions};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{BuildParams, GraphIndex};
use crate::persist::save_index;
use crate::predicate::{exact_selectivity, Filter};
use crate::query::HybridQuery;
use crate::search::{get_neighbors, hybrid_search, SearchCounters, SearchParams, Strategy};
use crate::workload::GroundTruth;

/// Result ids and counters for one query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MethodResult {
    pub ids: Vec<u32>,
    pub counters: SearchCounters,
    pub prefiltered: bool,
}

/// Anything the sweep can drive: one query at a time, parameterized by `efs`.
pub trait SearchMethod: Sync {
    fn name(&self) -> &str;

    /// False for methods that ignore `efs` and get a single sweep row.
    fn uses_efs(&self) -> bool {
        true
    }

    fn search(&self, qi: usize, q: &HybridQuery, efs: usize) -> Result<MethodResult>;
}

/// A graph index searched with [`hybrid_search`].
pub struct GraphMethod<'a> {
    pub name: String,
    pub index: &'a GraphIndex,
    pub ds: &'a Dataset,
    pub strategy: Strategy,
    pub router: Option<CostRouter>,
}

impl<'a> GraphMethod<'a> {
    pub fn new(name: impl Into<String>, index: &'a GraphIndex, ds: &'a Dataset) -> Self {
        GraphMethod {
            name: name.into(),
            index,
            ds,
            strategy: Strategy::default_for(index.variant()),
            router: None,
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_router(mut self, router: CostRouter) -> Self {
        self.router = Some(router);
        self
    }
}

impl SearchMethod for GraphMethod<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn search(&self, _qi: usize, q: &HybridQuery, efs: usize) -> Result<MethodResult> {
        let params = SearchParams::new(q.k, efs.max(q.k), self.strategy);
        let r = hybrid_search(self.index, self.ds, q, &params, self.router.as_ref())?;
        Ok(MethodResult {
            prefiltered: r.prefiltered(),
            ids: r.ids,
            counters: r.counters,
        })
    }
}

pub struct PrefilterMethod<'a> {
    pub ds: &'a Dataset,
}

impl SearchMethod for PrefilterMethod<'_> {
    fn name(&self) -> &str {
        "prefilter"
    }

    fn uses_efs(&self) -> bool {
        false
    }

    fn search(&self, _qi: usize, q: &HybridQuery, _efs: usize) -> Result<MethodResult> {
        let mut counters = SearchCounters::default();
        let found = prefilter_search(self.ds, q, &mut counters)?;
        Ok(MethodResult {
            ids: found.iter().map(|n| n.id).collect(),
            counters,
            prefiltered: true,
        })
    }
}

/// HNSW post-filtering with per-query selectivities supplied up front.
pub struct PostfilterMethod<'a> {
    pub index: &'a GraphIndex,
    pub ds: &'a Dataset,
    pub selectivity: Vec<f64>,
}

impl<'a> PostfilterMethod<'a> {
    /// Uses each query's exact selectivity.
    pub fn exact(index: &'a GraphIndex, ds: &'a Dataset, workload: &[HybridQuery]) -> Result<Self> {
        let selectivity = workload
            .par_iter()
            .map(|q| exact_selectivity(&q.predicate, ds).map(|e| e.value))
            .collect::<Result<Vec<_>>>()?;
        Ok(PostfilterMethod { index, ds, selectivity })
    }
}

impl SearchMethod for PostfilterMethod<'_> {
    fn name(&self) -> &str {
        "postfilter"
    }

    fn search(&self, qi: usize, q: &HybridQuery, efs: usize) -> Result<MethodResult> {
        let s = self.selectivity[qi];
        let mut counters = SearchCounters::default();
        if s <= 0.0 {
            return Ok(MethodResult::default());
        }
        let found = postfilter_search(self.index, self.ds, q, efs, s, &mut counters)?;
        Ok(MethodResult {
            ids: found.iter().map(|n| n.id).collect(),
            counters,
            prefiltered: false,
        })
    }
}

pub struct OracleMethod<'a> {
    pub ops: &'a OraclePartitionSet,
}

impl SearchMethod for OracleMethod<'_> {
    fn name(&self) -> &str {
        "oracle"
    }

    fn search(&self, _qi: usize, q: &HybridQuery, efs: usize) -> Result<MethodResult> {
        let mut counters = SearchCounters::default();
        let found = oracle_search(self.ops, q, q.k, efs, &mut counters)?;
        Ok(MethodResult {
            ids: found.iter().map(|n| n.id).collect(),
            counters,
            prefiltered: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub efs: Vec<usize>,
    pub repeats: usize,
    /// 1 for the single-threaded protocol; more runs queries on a pool.
    pub threads: usize,
}

impl SweepConfig {
    /// `efs` from 10 to 800 in steps of 50, with 800 itself appended.
    pub fn standard(k: usize) -> Self {
        let mut efs: Vec<usize> = (10..=800).step_by(50).collect();
        if efs.last() != Some(&800) {
            efs.push(800);
        }
        SweepConfig {
            k,
            efs,
            repeats: 1,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub efs: usize,
    pub recall: f64,
    pub qps: f64,
    pub mean_dist_comps: f64,
    pub mean_pred_evals: f64,
    pub prefiltered_fraction: f64,
    pub threads: usize,
}

fn run_queries(
    method: &dyn SearchMethod,
    workload: &[HybridQuery],
    efs: usize,
    threads: usize,
) -> Result<Vec<MethodResult>> {
    if threads <= 1 {
        return workload.iter().enumerate().map(|(i, q)| method.search(i, q, efs)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParams(e.to_string()))?;
    pool.install(|| {
        workload
            .par_iter()
            .enumerate()
            .map(|(i, q)| method.search(i, q, efs))
            .collect()
    })
}

/// Runs `method` over the workload once per `efs` value (once in total for
/// methods that ignore `efs`) and scores it against `gt`.
pub fn sweep(
    method: &dyn SearchMethod,
    workload: &[HybridQuery],
    gt: &GroundTruth,
    config: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    if gt.len() != workload.len() || gt.k < config.k {
        return Err(Error::GroundTruthMismatch {
            gt: gt.len(),
            workload: workload.len(),
        });
    }
    if workload.is_empty() {
        return Ok(Vec::new());
    }
    let efs_list: Vec<usize> = if method.uses_efs() {
        config.efs.clone()
    } else {
        vec![0]
    };
    let repeats = config.repeats.max(1);
    let mut rows = Vec::with_capacity(efs_list.len());
    for efs in efs_list {
        let start = Instant::now();
        let mut results = run_queries(method, workload, efs, config.threads)?;
        for _ in 1..repeats {
            results = run_queries(method, workload, efs, config.threads)?;
        }
        let elapsed = start.elapsed().as_secs_f64();
        let n = workload.len() as f64;
        let recall = results
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let truncated = &r.ids[..r.ids.len().min(config.k)];
                let g = &gt.ids[i][..gt.ids[i].len().min(config.k)];
                let hits = truncated.iter().filter(|id| g.contains(id)).count();
                if g.is_empty() {
                    1.0
                } else {
                    hits as f64 / g.len() as f64
                }
            })
            .sum::<f64>()
            / n;
        let mut total = SearchCounters::default();
        for r in &results {
            total += r.counters;
        }
        rows.push(SweepRow {
            method: method.name().to_string(),
            efs,
            recall,
            qps: n * repeats as f64 / elapsed.max(1e-9),
            mean_dist_comps: total.distance_computations as f64 / n,
            mean_pred_evals: total.predicate_evaluations as f64 / n,
            prefiltered_fraction: results.iter().filter(|r| r.prefiltered).count() as f64 / n,
            threads: config.threads.max(1),
        });
    }
    Ok(rows)
}

/// Distance computations needed to reach `target` recall, by linear
/// interpolation between the last row below the target and the first row at
/// or above it (rows taken in ascending `efs`). If the very first row already
/// meets the target its own count is returned. `None` if no row does.
pub fn dist_comps_at_recall(rows: &[SweepRow], target: f64) -> Option<f64> {
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.efs);
    let hit = sorted.iter().position(|r| r.recall >= target)?;
    if hit == 0 {
        return Some(sorted[0].mean_dist_comps);
    }
    let (a, b) = (sorted[hit - 1], sorted[hit]);
    let t = (target - a.recall) / (b.recall - a.recall);
    Some(a.mean_dist_comps + t * (b.mean_dist_comps - a.mean_dist_comps))
}

/// Recall reachable with a mean budget of `budget` distance computations:
/// linear interpolation over rows in ascending distance-computation order.
/// `None` if the budget is below the cheapest row; beyond the most expensive
/// row the best recall seen is returned.
pub fn recall_at_dist_comps(rows: &[SweepRow], budget: f64) -> Option<f64> {
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.mean_dist_comps.total_cmp(&b.mean_dist_comps));
    let first = sorted.first()?;
    if budget < first.mean_dist_comps {
        return None;
    }
    let mut best = first.recall;
    for w in sorted.windows(2) {
        let (a, b) = (w[0], w[1]);
        if budget <= b.mean_dist_comps {
            let span = b.mean_dist_comps - a.mean_dist_comps;
            let t = if span > 0.0 { (budget - a.mean_dist_comps) / span } else { 1.0 };
            return Some(best.max(a.recall + t * (b.recall - a.recall)));
        }
        best = best.max(b.recall);
    }
    Some(sorted.iter().map(|r| r.recall).fold(0.0, f64::max))
}

pub fn best_recall(rows: &[SweepRow]) -> f64 {
    rows.iter().map(|r| r.recall).fold(0.0, f64::max)
}

/// The subgraph induced by the nodes passing a filter, one level at a time.
/// Node `i` of a level is `levels[l].nodes[i]`; edges use those local
/// positions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubgraphView {
    pub levels: Vec<LevelView>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelView {
    pub nodes: Vec<u32>,
    pub edges: Vec<Vec<usize>>,
}

impl SubgraphView {
    pub fn node_count(&self) -> usize {
        self.levels.iter().map(|l| l.nodes.len()).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.levels.iter().flat_map(|l| &l.edges).map(Vec::len).sum()
    }
}

/// Passing nodes per level, each linked to the neighborhood `strategy`
/// produces for it (for `FilterOnly`, the first `M` passers of its list).
pub fn predicate_subgraph<F: Filter + ?Sized>(index: &GraphIndex, filter: &F, strategy: Strategy) -> Result<SubgraphView> {
    strategy.check(index.variant())?;
    let mut levels = Vec::with_capacity(index.num_levels());
    let mut local = vec![usize::MAX; index.len()];
    for l in 0..index.num_levels() {
        let nodes: Vec<u32> = index.nodes_on_level(l).filter(|&v| filter.passes(v)).collect();
        for (i, &v) in nodes.iter().enumerate() {
            local[v as usize] = i;
        }
        let mut counters = SearchCounters::default();
        let edges = nodes
            .iter()
            .map(|&v| {
                Ok(get_neighbors(index, v, l, filter, strategy, &mut counters)?
                    .into_iter()
                    .filter(|&u| filter.passes(u))
                    .map(|u| local[u as usize])
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        for &v in &nodes {
            local[v as usize] = usize::MAX;
        }
        if nodes.is_empty() {
            break;
        }
        levels.push(LevelView { nodes, edges });
    }
    Ok(SubgraphView { levels })
}

/// The whole index as a view (every node, every stored edge).
pub fn full_view(index: &GraphIndex) -> SubgraphView {
    let mut local = vec![0usize; index.len()];
    let levels = (0..index.num_levels())
        .map(|l| {
            let nodes: Vec<u32> = index.nodes_on_level(l).collect();
            for (i, &v) in nodes.iter().enumerate() {
                local[v as usize] = i;
            }
            let edges = nodes
                .iter()
                .map(|&v| index.list(v, l).iter().map(|&u| local[u as usize]).collect())
                .collect();
            LevelView { nodes, edges }
        })
        .collect();
    SubgraphView { levels }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelQuality {
    pub level: usize,
    pub n_nodes: usize,
    pub n_scc: usize,
    pub mean_out_degree: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphQualityReport {
    pub levels: Vec<LevelQuality>,
    /// Highest level holding at least one node; `None` for an empty view.
    pub graph_height: Option<usize>,
}

pub fn scc_count(edges: &[Vec<usize>]) -> usize {
    let mut g = DiGraph::<(), ()>::with_capacity(edges.len(), edges.iter().map(Vec::len).sum());
    let ids: Vec<_> = (0..edges.len()).map(|_| g.add_node(())).collect();
    for (v, list) in edges.iter().enumerate() {
        for &u in list {
            g.add_edge(ids[v], ids[u], ());
        }
    }
    tarjan_scc(&g).len()
}

pub fn graph_quality(view: &SubgraphView) -> GraphQualityReport {
    let levels: Vec<LevelQuality> = view
        .levels
        .iter()
        .enumerate()
        .map(|(level, lv)| LevelQuality {
            level,
            n_nodes: lv.nodes.len(),
            n_scc: scc_count(&lv.edges),
            mean_out_degree: if lv.nodes.is_empty() {
                0.0
            } else {
                lv.edges.iter().map(Vec::len).sum::<usize>() as f64 / lv.nodes.len() as f64
            },
        })
        .collect();
    let graph_height = levels.iter().rposition(|l| l.n_nodes > 0);
    GraphQualityReport { levels, graph_height }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeAudit {
    /// Nodes on uncompressed levels whose stored list is full.
    pub full_lists: usize,
    /// Mean number of passers in those full lists.
    pub mean_filtered_degree: f64,
    /// `gamma * M * s`, capped at the list capacity.
    pub expected: f64,
    /// Nodes on uncompressed levels measured for the zero-degree fraction.
    pub nodes: usize,
    /// Fraction of those nodes with no passer in their stored list.
    pub zero_degree_fraction: f64,
}

/// Counts passers in stored neighbor lists on every uncompressed level.
pub fn degree_concentration_audit<F: Filter + ?Sized>(index: &GraphIndex, filter: &F, s: f64) -> DegreeAudit {
    let p = index.params();
    let mut full = 0usize;
    let mut full_sum = 0usize;
    let mut nodes = 0usize;
    let mut zero = 0usize;
    for l in 0..index.num_levels() {
        if p.is_compressed_level(l) {
            continue;
        }
        let cap = p.cap(l);
        for v in index.nodes_on_level(l) {
            let list = index.list(v, l);
            let passing = list.iter().filter(|&&u| filter.passes(u)).count();
            nodes += 1;
            zero += (passing == 0) as usize;
            if list.len() == cap {
                full += 1;
                full_sum += passing;
            }
        }
    }
    let cap0 = (p.m * p.gamma) as f64;
    DegreeAudit {
        full_lists: full,
        mean_filtered_degree: if full == 0 { 0.0 } else { full_sum as f64 / full as f64 },
        expected: (cap0 * s).min(cap0),
        nodes,
        zero_degree_fraction: if nodes == 0 { 0.0 } else { zero as f64 / nodes as f64 },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildMeasurement {
    pub params: BuildParams,
    pub tti_seconds: f64,
    /// Serialized index size.
    pub index_bytes: usize,
    /// Serialized index plus raw `f32` vectors.
    pub index_plus_vectors_bytes: usize,
    pub per_level_mean_degree: Vec<f64>,
    pub edges_pruned: usize,
    pub edges_restored: usize,
}

pub fn measure_index(index: &GraphIndex, ds: &Dataset, tti_seconds: f64, edges_pruned: usize, edges_restored: usize) -> Result<BuildMeasurement> {
    let index_bytes = save_index(index)?.len();
    Ok(BuildMeasurement {
        params: *index.params(),
        tti_seconds,
        index_bytes,
        index_plus_vectors_bytes: index_bytes + ds.len() * ds.dim() * 4,
        per_level_mean_degree: index.mean_degree_per_level(),
        edges_pruned,
        edges_restored,
    })
}

/// Builds an index and measures it; returns both.
pub fn measure_build(ds: &Dataset, params: &BuildParams) -> Result<(GraphIndex, BuildMeasurement)> {
    let out = build_with(ds, params, BuildOptions::default())?;
    let m = measure_index(&out.index, ds, out.stats.tti_seconds, out.stats.edges_pruned, out.stats.edges_restored)?;
    Ok((out.index, m))
}
