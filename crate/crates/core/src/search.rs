//! Filtered greedy search over a finalized [`GraphIndex`].

use std::cell::RefCell;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::AddAssign;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::baselines::{prefilter_scan, CostRouter, Route};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{GraphIndex, Variant};
use crate::neighbor::{Marks, Neighbor};
use crate::predicate::{AcceptAll, Filter};
use crate::query::HybridQuery;

/// How a visited node's neighbor list is turned into the neighborhood the
/// search expands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    /// Keep the passing entries of the stored list.
    FilterOnly,
    /// Filter the first `m_beta` entries directly and expand the rest to
    /// their own neighbors before filtering. Levels that are not compressed
    /// fall back to `FilterOnly`.
    Compressed2Hop,
    /// Every passing one-hop neighbor, then every passing two-hop neighbor.
    Acorn1FullExpansion,
    /// The stored list as is; the predicate is only applied to the results.
    Unfiltered,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::FilterOnly,
        Strategy::Compressed2Hop,
        Strategy::Acorn1FullExpansion,
        Strategy::Unfiltered,
    ];

    /// The strategy each variant is meant to be searched with.
    pub fn default_for(variant: Variant) -> Strategy {
        match variant {
            Variant::Hnsw => Strategy::FilterOnly,
            Variant::AcornGamma => Strategy::Compressed2Hop,
            Variant::Acorn1 => Strategy::Acorn1FullExpansion,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::FilterOnly => "FILTER_ONLY",
            Strategy::Compressed2Hop => "COMPRESSED_2HOP",
            Strategy::Acorn1FullExpansion => "ACORN1_FULL_EXPANSION",
            Strategy::Unfiltered => "UNFILTERED",
        }
    }

    pub fn check(self, variant: Variant) -> Result<()> {
        let ok = match self {
            Strategy::Compressed2Hop => variant == Variant::AcornGamma,
            Strategy::Acorn1FullExpansion => variant == Variant::Acorn1,
            Strategy::FilterOnly | Strategy::Unfiltered => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::IncompatibleStrategy {
                strategy: self.name(),
                variant: variant.name(),
            })
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == norm)
            .ok_or_else(|| Error::Parse(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchParams {
    #[serde(rename = "K")]
    pub k: usize,
    pub efs: usize,
    pub strategy: Strategy,
}

impl SearchParams {
    pub fn new(k: usize, efs: usize, strategy: Strategy) -> Self {
        SearchParams { k, efs, strategy }
    }

    /// Uses the index variant's default strategy.
    pub fn for_index(index: &GraphIndex, k: usize, efs: usize) -> Self {
        SearchParams::new(k, efs, Strategy::default_for(index.variant()))
    }

    pub fn validate(&self, variant: Variant) -> Result<()> {
        check_k(self.k, self.efs)?;
        self.strategy.check(variant)
    }
}

fn check_k(k: usize, efs: usize) -> Result<()> {
    if k == 0 || k > efs {
        Err(Error::InvalidK { k, efs })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchCounters {
    pub distance_computations: u64,
    pub predicate_evaluations: u64,
    /// Nodes whose neighborhood was expanded.
    pub hops: u64,
    /// Distinct nodes scored.
    pub nodes_visited: u64,
}

impl AddAssign for SearchCounters {
    fn add_assign(&mut self, o: Self) {
        self.distance_computations += o.distance_computations;
        self.predicate_evaluations += o.predicate_evaluations;
        self.hops += o.hops;
        self.nodes_visited += o.nodes_visited;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub ids: Vec<u32>,
    /// Reported distances (true L2 for the L2 metric), ascending.
    pub distances: Vec<f32>,
    pub counters: SearchCounters,
    #[serde(with = "micros")]
    pub latency: Duration,
    pub route: Route,
    /// Selectivity estimate the router acted on, if a router was used.
    pub selectivity_estimate: Option<f64>,
}

impl SearchReport {
    pub fn prefiltered(&self) -> bool {
        self.route == Route::Prefilter
    }
}

mod micros {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_micros(u64::deserialize(d)?))
    }
}

#[derive(Default)]
struct Scratch {
    visited: Marks,
    local: Marks,
    buf: Vec<u32>,
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

fn with_scratch<R>(f: impl FnOnce(&mut Scratch) -> R) -> R {
    SCRATCH.with(|s| match s.try_borrow_mut() {
        Ok(mut s) => f(&mut s),
        // re-entrant use from inside a filter closure; fall back to a fresh set
        Err(_) => f(&mut Scratch::default()),
    })
}

/// Neighborhood truncation width: `M` for ACORN builds, the level's list
/// capacity for HNSW builds (so an always-true filter reproduces HNSW).
fn width(index: &GraphIndex, l: usize) -> usize {
    match index.variant() {
        Variant::Hnsw => index.params().cap(l),
        _ => index.params().m,
    }
}

#[allow(clippy::too_many_arguments)]
fn lookup<F: Filter + ?Sized>(
    index: &GraphIndex,
    c: u32,
    l: usize,
    filter: &F,
    strategy: Strategy,
    counters: &mut SearchCounters,
    local: &mut Marks,
    out: &mut Vec<u32>,
) {
    out.clear();
    let list = index.list(c, l);
    let w = width(index, l);
    let mut take = |u: u32, out: &mut Vec<u32>| -> bool {
        counters.predicate_evaluations += 1;
        if filter.passes(u) {
            out.push(u);
        }
        out.len() >= w
    };
    let strategy = match strategy {
        Strategy::Compressed2Hop if !index.params().is_compressed_level(l) => Strategy::FilterOnly,
        s => s,
    };
    match strategy {
        Strategy::Unfiltered => out.extend(list.iter().take(w)),
        Strategy::FilterOnly => {
            for &u in list {
                if take(u, out) {
                    return;
                }
            }
        }
        Strategy::Compressed2Hop => {
            let m_beta = index.params().m_beta;
            local.reset(index.len());
            local.insert(c);
            for (i, &u) in list.iter().enumerate() {
                if local.insert(u) && take(u, out) {
                    return;
                }
                if i >= m_beta {
                    for &x in index.list(u, l) {
                        if local.insert(x) && take(x, out) {
                            return;
                        }
                    }
                }
            }
        }
        Strategy::Acorn1FullExpansion => {
            local.reset(index.len());
            local.insert(c);
            for &u in list {
                local.insert(u);
                if take(u, out) {
                    return;
                }
            }
            for &u in list {
                for &x in index.list(u, l) {
                    if local.insert(x) && take(x, out) {
                        return;
                    }
                }
            }
        }
    }
}

/// The filtered neighborhood of `c` on level `l` under `strategy`.
pub fn get_neighbors<F: Filter + ?Sized>(
    index: &GraphIndex,
    c: u32,
    l: usize,
    filter: &F,
    strategy: Strategy,
    counters: &mut SearchCounters,
) -> Result<Vec<u32>> {
    index.neighbors(c, l)?;
    strategy.check(index.variant())?;
    Ok(with_scratch(|s| {
        let mut out = Vec::new();
        lookup(index, c, l, filter, strategy, counters, &mut s.local, &mut out);
        out
    }))
}

fn check_inputs(index: &GraphIndex, ds: &Dataset, x_q: &[f32]) -> Result<()> {
    if ds.len() != index.len() || ds.dim() != index.dim() {
        return Err(Error::InvalidParams(format!(
            "dataset ({} x {}) does not match index ({} x {})",
            ds.len(),
            ds.dim(),
            index.len(),
            index.dim()
        )));
    }
    if x_q.len() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            found: x_q.len(),
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn layer<F: Filter + ?Sized>(
    index: &GraphIndex,
    ds: &Dataset,
    x_q: &[f32],
    filter: &F,
    entry: Neighbor,
    ef: usize,
    l: usize,
    strategy: Strategy,
    counters: &mut SearchCounters,
    s: &mut Scratch,
) -> Vec<Neighbor> {
    s.visited.reset(index.len());
    s.visited.insert(entry.id);
    let mut candidates = BinaryHeap::new();
    let mut found = BinaryHeap::new();
    candidates.push(Reverse(entry));
    found.push(entry);
    while let Some(Reverse(c)) = candidates.pop() {
        let farthest = *found.peek().expect("non-empty");
        if c > farthest && found.len() >= ef {
            break;
        }
        counters.hops += 1;
        lookup(index, c.id, l, filter, strategy, counters, &mut s.local, &mut s.buf);
        for &u in &s.buf {
            if !s.visited.insert(u) {
                continue;
            }
            counters.nodes_visited += 1;
            counters.distance_computations += 1;
            let cand = Neighbor::new(u, ds.score_to(x_q, u));
            if found.len() < ef || cand < *found.peek().expect("non-empty") {
                candidates.push(Reverse(cand));
                found.push(cand);
                if found.len() > ef {
                    found.pop();
                }
            }
        }
    }
    found.into_sorted_vec()
}

/// One beam search on level `l` from `entry`; returns up to `ef` nodes in
/// ascending score order. The entry itself is always a member of the beam,
/// whether it passes the filter or not.
#[allow(clippy::too_many_arguments)]
pub fn search_layer<F: Filter + ?Sized>(
    index: &GraphIndex,
    ds: &Dataset,
    x_q: &[f32],
    filter: &F,
    entry: u32,
    ef: usize,
    l: usize,
    strategy: Strategy,
    counters: &mut SearchCounters,
) -> Result<Vec<Neighbor>> {
    check_inputs(index, ds, x_q)?;
    index.neighbors(entry, l)?;
    strategy.check(index.variant())?;
    if ef == 0 {
        return Err(Error::InvalidParams("ef must be positive".into()));
    }
    counters.distance_computations += 1;
    counters.nodes_visited += 1;
    let e = Neighbor::new(entry, ds.score_to(x_q, entry));
    Ok(with_scratch(|s| layer(index, ds, x_q, filter, e, ef, l, strategy, counters, s)))
}

/// Top-down filtered search: greedy (beam 1) on the upper levels, beam `efs`
/// on level 0, then the `k` nearest beam members that pass the filter.
#[allow(clippy::too_many_arguments)]
pub fn filtered_search<F: Filter + ?Sized>(
    index: &GraphIndex,
    ds: &Dataset,
    x_q: &[f32],
    filter: &F,
    k: usize,
    efs: usize,
    strategy: Strategy,
    counters: &mut SearchCounters,
) -> Result<Vec<Neighbor>> {
    check_inputs(index, ds, x_q)?;
    check_k(k, efs)?;
    strategy.check(index.variant())?;
    let entry = index.entry_point();
    counters.distance_computations += 1;
    counters.nodes_visited += 1;
    let mut ep = Neighbor::new(entry, ds.score_to(x_q, entry));
    let beam = with_scratch(|s| {
        for l in (1..=index.max_level()).rev() {
            ep = layer(index, ds, x_q, filter, ep, 1, l, strategy, counters, s)[0];
        }
        layer(index, ds, x_q, filter, ep, efs, 0, strategy, counters, s)
    });
    let mut out = Vec::with_capacity(k);
    for n in beam {
        counters.predicate_evaluations += 1;
        if filter.passes(n.id) {
            out.push(n);
            if out.len() == k {
                break;
            }
        }
    }
    Ok(out)
}

/// Plain top-down search without a predicate.
pub fn unfiltered_search(
    index: &GraphIndex,
    ds: &Dataset,
    x_q: &[f32],
    k: usize,
    efs: usize,
    counters: &mut SearchCounters,
) -> Result<Vec<Neighbor>> {
    filtered_search(index, ds, x_q, &AcceptAll, k, efs, Strategy::Unfiltered, counters)
}

/// Answers a hybrid query. With a router, queries whose estimated
/// selectivity is at most `1/gamma` are answered by an exact scan instead.
pub fn hybrid_search(
    index: &GraphIndex,
    ds: &Dataset,
    q: &HybridQuery,
    params: &SearchParams,
    router: Option<&CostRouter>,
) -> Result<SearchReport> {
    check_inputs(index, ds, &q.vector)?;
    let params = SearchParams { k: q.k, ..*params };
    params.validate(index.variant())?;
    let start = Instant::now();
    let filter = q.predicate.bind(ds)?;
    let mut counters = SearchCounters::default();
    let (route, estimate) = match router {
        Some(r) => {
            let d = r.route(&q.predicate, ds)?;
            (d.route, Some(d.estimate))
        }
        None => (Route::GraphSearch, None),
    };
    let found = match route {
        Route::Prefilter => prefilter_scan(ds, &q.vector, &filter, q.k, &mut counters),
        Route::GraphSearch => filtered_search(index, ds, &q.vector, &filter, q.k, params.efs, params.strategy, &mut counters)?,
    };
    let latency = start.elapsed();
    let metric = ds.metric();
    Ok(SearchReport {
        ids: found.iter().map(|n| n.id).collect(),
        distances: found.iter().map(|n| metric.report(n.dist)).collect(),
        counters,
        latency,
        route,
        selectivity_estimate: estimate,
    })
}
