//! Index construction for HNSW, ACORN-γ and ACORN-1.
//!
//! All three variants share one insertion routine. A node draws its level,
//! descends greedily (beam 1) from the entry point to the level above its own,
//! then on each of its levels collects candidates with a beam search and
//! selects its neighbor list:
//!
//! * HNSW keeps at most `M` (2M on level 0) candidates chosen by the RNG rule.
//! * ACORN-1 keeps the `M` nearest candidates.
//! * ACORN-γ keeps the `M·γ` nearest candidates; on its pruned levels the
//!   configured [`PruneStrategy`] thins them further.
//!
//! ACORN builds traverse only the first `M` entries of each list, and collect
//! candidates with a beam of `max(efc, M·γ)`.
//!
//! Reverse edges are always added. When a reverse edge overflows a list the
//! list is re-selected with the same rule. M_β-compressed lists are kept in
//! compressed form: any reverse edge landing past the first `m_beta` entries
//! re-runs the compression over the merged list.

use std::collections::BinaryHeap;
use std::cmp::Reverse;
use std::time::Instant;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, Dataset};
use crate::error::{Error, Result};
use crate::graph::{BuildParams, GraphIndex, LevelSampler, PruneStrategy, Variant};
use crate::neighbor::{Marks, Neighbor};

/// Result of thinning a sorted candidate list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PruneOutcome {
    /// Surviving candidates, still in ascending distance order.
    pub kept: Vec<Neighbor>,
    /// Candidates removed by the strategy's pruning rule.
    pub pruned: Vec<u32>,
    /// Candidates dropped by a size limit or stop condition rather than the
    /// rule itself.
    pub cut: Vec<u32>,
}

impl PruneOutcome {
    pub fn kept_ids(&self) -> Vec<u32> {
        self.kept.iter().map(|n| n.id).collect()
    }

    /// Everything that did not survive.
    pub fn dropped(&self) -> usize {
        self.pruned.len() + self.cut.len()
    }
}

/// M_β compression of a sorted candidate list.
///
/// The first `m_beta` candidates are kept verbatim. Each remaining candidate
/// is pruned if it is already in `H`, the running set of neighbors of the
/// candidates kept after the prefix; otherwise it is kept and its current
/// neighbor list (from `neighbor_oracle`) is added to `H`. Iteration stops
/// once `|H|` plus the number of kept candidates exceeds `cap`.
pub fn prune_acorn<O, I>(candidates: &[Neighbor], m_beta: usize, cap: usize, neighbor_oracle: O) -> PruneOutcome
where
    O: FnMut(u32) -> I,
    I: IntoIterator<Item = u32>,
{
    let mut h = FxHashSet::default();
    prune_acorn_with(candidates, m_beta, cap, neighbor_oracle, &mut h)
}

fn prune_acorn_with<O, I>(
    candidates: &[Neighbor],
    m_beta: usize,
    cap: usize,
    mut neighbor_oracle: O,
    h: &mut FxHashSet<u32>,
) -> PruneOutcome
where
    O: FnMut(u32) -> I,
    I: IntoIterator<Item = u32>,
{
    debug_assert!(candidates.windows(2).all(|w| w[0] <= w[1]), "candidates must be sorted");
    h.clear();
    let prefix = m_beta.min(cap).min(candidates.len());
    let mut out = PruneOutcome {
        kept: candidates[..prefix].to_vec(),
        ..Default::default()
    };
    let mut stopped = false;
    for c in &candidates[prefix..] {
        if stopped || out.kept.len() >= cap {
            out.cut.push(c.id);
        } else if h.contains(&c.id) {
            out.pruned.push(c.id);
        } else {
            out.kept.push(*c);
            h.extend(neighbor_oracle(c.id));
            stopped = h.len() + out.kept.len() > cap;
        }
    }
    out
}

/// Relative-neighborhood pruning: keep `c` iff it is closer to the list owner
/// than to every candidate kept so far. At most `m` are kept.
pub fn prune_rng_blind(candidates: &[Neighbor], m: usize, ds: &Dataset) -> PruneOutcome {
    let mut out = PruneOutcome::default();
    for c in candidates {
        if out.kept.len() >= m {
            out.cut.push(c.id);
        } else if out.kept.iter().all(|a| c.dist < ds.score(c.id, a.id)) {
            out.kept.push(*c);
        } else {
            out.pruned.push(c.id);
        }
    }
    out
}

/// RNG pruning that only lets a kept candidate `a` prune `b` when both carry
/// the same equality label, so the pruned edge's triangle survives inside
/// that label's predicate subgraph. At most `m` candidates are kept per label
/// and `cap` overall.
pub fn prune_rng_metadata_aware(
    candidates: &[Neighbor],
    m: usize,
    cap: usize,
    ds: &Dataset,
    label_attr: usize,
) -> Result<PruneOutcome> {
    let labels = equality_labels(ds, label_attr)?;
    Ok(rng_aware(candidates, m, cap, ds, labels))
}

fn equality_labels(ds: &Dataset, label_attr: usize) -> Result<&[i64]> {
    match ds.column(label_attr) {
        Some(Column::Int(v)) => Ok(v),
        other => Err(Error::UnsupportedSchema(format!(
            "metadata-aware pruning needs an integer label at attribute {label_attr}, found {:?}",
            other.map(Column::kind)
        ))),
    }
}

fn rng_aware(candidates: &[Neighbor], m: usize, cap: usize, ds: &Dataset, labels: &[i64]) -> PruneOutcome {
    let mut out = PruneOutcome::default();
    let mut per_label: FxHashMap<i64, usize> = FxHashMap::default();
    for c in candidates {
        let label = labels[c.id as usize];
        let used = per_label.get(&label).copied().unwrap_or(0);
        if out.kept.len() >= cap || used >= m {
            out.cut.push(c.id);
        } else if out
            .kept
            .iter()
            .any(|a| labels[a.id as usize] == label && ds.score(c.id, a.id) < c.dist)
        {
            out.pruned.push(c.id);
        } else {
            out.kept.push(*c);
            per_label.insert(label, used + 1);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    /// Keep every candidate removed by the M_β rule so the recoverability
    /// property can be audited after the build.
    pub record_prunes: bool,
    /// Skip the finalization pass that restores pruned candidates with no
    /// surviving two-hop path.
    pub skip_repair: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildStats {
    pub tti_seconds: f64,
    pub edges_total: usize,
    /// Candidates discarded by the prune strategy (rule plus stop/limit).
    pub edges_pruned: usize,
    /// Pruned candidates re-added at finalization because no two-hop path
    /// to them survived later list updates.
    pub edges_restored: usize,
    pub per_level_mean_degree: Vec<f64>,
    pub distance_computations: u64,
}

/// Per compressed level, per node: the candidates the M_β rule pruned in the
/// selection that produced the node's current list.
#[derive(Debug, Clone, Default)]
pub struct PruneLog {
    pub levels: Vec<Vec<Vec<u32>>>,
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub index: GraphIndex,
    pub stats: BuildStats,
    pub prune_log: Option<PruneLog>,
}

pub fn build(ds: &Dataset, params: &BuildParams) -> Result<GraphIndex> {
    Ok(build_with(ds, params, BuildOptions::default())?.index)
}

/// ACORN-1: HNSW construction with γ = 1, M_β = M and nearest-M selection.
pub fn build_acorn1(ds: &Dataset, m: usize, efc: usize, seed: u64) -> Result<GraphIndex> {
    build(ds, &BuildParams::acorn1(m, efc, seed))
}

pub fn build_with(ds: &Dataset, params: &BuildParams, options: BuildOptions) -> Result<BuildOutput> {
    params.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let labels = if params.is_pruned_level(0) || params.compressed_levels > 0 {
        match params.prune {
            PruneStrategy::RngMetadataAware { label_attr } if params.variant == Variant::AcornGamma => {
                Some(equality_labels(ds, label_attr)?)
            }
            _ => None,
        }
    } else {
        None
    };
    let start = Instant::now();
    let mut builder = Builder::new(ds, *params, labels, options);
    for v in 0..ds.len() as u32 {
        builder.insert(v);
    }
    builder.finish(start)
}

struct Builder<'a> {
    ds: &'a Dataset,
    params: BuildParams,
    labels: Option<&'a [i64]>,
    node_levels: Vec<u8>,
    lists: Vec<Vec<Vec<Neighbor>>>,
    entry: Option<u32>,
    max_level: usize,
    visited: Marks,
    h: FxHashSet<u32>,
    edges_pruned: usize,
    distance_computations: u64,
    prune_log: Vec<Vec<Vec<u32>>>,
    options: BuildOptions,
}

impl<'a> Builder<'a> {
    fn new(ds: &'a Dataset, params: BuildParams, labels: Option<&'a [i64]>, options: BuildOptions) -> Self {
        let n = ds.len();
        let mut sampler = LevelSampler::new(params.m_l(), params.seed);
        let node_levels: Vec<u8> = (0..n).map(|_| sampler.next_level().min(u8::MAX as usize) as u8).collect();
        let top = *node_levels.iter().max().expect("non-empty") as usize;
        let lists = (0..=top).map(|_| vec![Vec::new(); n]).collect();
        let compressed = (0..=top).filter(|&l| params.is_compressed_level(l)).count();
        Builder {
            ds,
            params,
            labels,
            node_levels,
            lists,
            entry: None,
            max_level: 0,
            visited: Marks::with_capacity(n),
            h: FxHashSet::default(),
            edges_pruned: 0,
            distance_computations: 0,
            prune_log: (0..compressed).map(|_| vec![Vec::new(); n]).collect(),
            options,
        }
    }

    fn traversal_width(&self) -> usize {
        match self.params.variant {
            Variant::Hnsw => usize::MAX,
            _ => self.params.m,
        }
    }

    fn beam(&self) -> usize {
        match self.params.variant {
            Variant::Hnsw => self.params.efc,
            _ => self.params.efc.max(self.params.m * self.params.gamma),
        }
    }

    #[inline]
    fn score(&mut self, q: u32, id: u32) -> f32 {
        self.distance_computations += 1;
        self.ds.score(q, id)
    }

    fn insert(&mut self, v: u32) {
        let level = self.node_levels[v as usize] as usize;
        let Some(entry) = self.entry else {
            self.entry = Some(v);
            self.max_level = level;
            return;
        };
        let mut ep = Neighbor::new(entry, self.score(v, entry));
        for l in (level + 1..=self.max_level).rev() {
            ep = self.search_level(v, ep, 1, l)[0];
        }
        let beam = self.beam();
        for l in (0..=level.min(self.max_level)).rev() {
            let found = self.search_level(v, ep, beam, l);
            ep = found[0];
            let selected = self.select(v, &found, l);
            for nb in &selected {
                self.add_reverse(nb.id, Neighbor::new(v, nb.dist), l);
            }
            self.lists[l][v as usize] = selected;
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(v);
        }
    }

    /// Beam search over level `l` for the node `q`'s vector.
    fn search_level(&mut self, q: u32, entry: Neighbor, ef: usize, l: usize) -> Vec<Neighbor> {
        let width = self.traversal_width();
        self.visited.reset(self.ds.len());
        self.visited.insert(entry.id);
        let mut candidates = BinaryHeap::new();
        let mut found = BinaryHeap::new();
        candidates.push(Reverse(entry));
        found.push(entry);
        while let Some(Reverse(c)) = candidates.pop() {
            let farthest = *found.peek().expect("non-empty");
            if c > farthest && found.len() >= ef {
                break;
            }
            let list_len = self.lists[l][c.id as usize].len().min(width);
            for i in 0..list_len {
                let u = self.lists[l][c.id as usize][i].id;
                if !self.visited.insert(u) {
                    continue;
                }
                let cand = Neighbor::new(u, self.score(q, u));
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

    fn select(&mut self, v: u32, found: &[Neighbor], l: usize) -> Vec<Neighbor> {
        let p = self.params;
        match p.variant {
            Variant::Hnsw => {
                let out = prune_rng_blind(found, p.cap(l), self.ds);
                self.edges_pruned += out.dropped();
                out.kept
            }
            Variant::Acorn1 => found[..found.len().min(p.cap(l))].to_vec(),
            Variant::AcornGamma => {
                let cands = &found[..found.len().min(p.cap(l))];
                if p.is_pruned_level(l) {
                    self.prune(v, cands, l)
                } else {
                    cands.to_vec()
                }
            }
        }
    }

    /// Applies the ACORN-γ prune strategy to `owner`'s candidates on `l`.
    fn prune(&mut self, owner: u32, cands: &[Neighbor], l: usize) -> Vec<Neighbor> {
        let p = self.params;
        let out = match p.prune {
            PruneStrategy::AcornMBeta => {
                let lists = &self.lists[l];
                prune_acorn_with(
                    cands,
                    p.m_beta,
                    p.cap(l),
                    |c| lists[c as usize].iter().map(|n| n.id),
                    &mut self.h,
                )
            }
            PruneStrategy::RngMetadataAware { .. } => {
                rng_aware(cands, p.m, p.cap(l), self.ds, self.labels.expect("labels resolved"))
            }
            PruneStrategy::HnswMetadataBlind => prune_rng_blind(cands, p.m, self.ds),
            PruneStrategy::None => PruneOutcome {
                kept: cands.to_vec(),
                ..Default::default()
            },
        };
        self.edges_pruned += out.dropped();
        if p.is_compressed_level(l) {
            self.prune_log[l][owner as usize] = out.pruned;
        }
        out.kept
    }

    fn add_reverse(&mut self, u: u32, edge: Neighbor, l: usize) {
        let p = self.params;
        let mut list = std::mem::take(&mut self.lists[l][u as usize]);
        let pos = list.partition_point(|x| *x < edge);
        list.insert(pos, edge);
        let cap = p.cap(l);
        let list = match p.variant {
            Variant::Hnsw if list.len() > cap => {
                let out = prune_rng_blind(&list, cap, self.ds);
                self.edges_pruned += out.dropped();
                out.kept
            }
            Variant::Hnsw | Variant::Acorn1 | Variant::AcornGamma if !p.is_pruned_level(l) => {
                list.truncate(cap);
                list
            }
            Variant::AcornGamma => {
                let overflow = match p.prune {
                    PruneStrategy::AcornMBeta => list.len() > p.m_beta,
                    PruneStrategy::RngMetadataAware { .. } => {
                        let labels = self.labels.expect("labels resolved");
                        let label = labels[edge.id as usize];
                        list.len() > cap || list.iter().filter(|x| labels[x.id as usize] == label).count() > p.m
                    }
                    PruneStrategy::HnswMetadataBlind => list.len() > p.m,
                    PruneStrategy::None => list.len() > cap,
                };
                if overflow {
                    let mut kept = self.prune(u, &list, l);
                    kept.truncate(cap);
                    kept
                } else {
                    list
                }
            }
            _ => unreachable!("all variants handled"),
        };
        self.lists[l][u as usize] = list;
    }

    /// Re-adds every logged pruned candidate that is neither a neighbor nor
    /// in the list of a neighbor stored at position `m_beta` or later. Only
    /// adds edges, so nodes already checked stay covered.
    fn repair(&mut self) -> usize {
        let m_beta = self.params.m_beta;
        let mut restored = 0;
        for l in 0..self.prune_log.len() {
            let cap = self.params.cap(l);
            for v in 0..self.lists[l].len() {
                if self.prune_log[l][v].is_empty() {
                    continue;
                }
                let pruned = std::mem::take(&mut self.prune_log[l][v]);
                self.visited.reset(self.ds.len());
                let list = &self.lists[l][v];
                for n in list {
                    self.visited.insert(n.id);
                }
                for y in list.iter().skip(m_beta) {
                    for n in &self.lists[l][y.id as usize] {
                        self.visited.insert(n.id);
                    }
                }
                for &x in &pruned {
                    if self.visited.contains(x) || self.lists[l][v].len() >= cap {
                        continue;
                    }
                    let edge = Neighbor::new(x, self.score(v as u32, x));
                    let list = &mut self.lists[l][v];
                    let pos = list.partition_point(|e| *e < edge);
                    list.insert(pos, edge);
                    self.visited.insert(x);
                    restored += 1;
                }
                self.prune_log[l][v] = pruned;
            }
        }
        restored
    }

    fn finish(mut self, start: Instant) -> Result<BuildOutput> {
        let edges_restored = if self.options.skip_repair { 0 } else { self.repair() };
        let ids: Vec<Vec<Vec<u32>>> = self
            .lists
            .into_iter()
            .map(|level| level.into_iter().map(|l| l.into_iter().map(|n| n.id).collect()).collect())
            .collect();
        let tti_seconds = start.elapsed().as_secs_f64();
        let index = GraphIndex::from_parts(
            self.params,
            self.ds.dim(),
            self.ds.metric(),
            self.entry.expect("at least one node"),
            self.node_levels,
            ids,
        )?;
        let stats = BuildStats {
            tti_seconds,
            edges_total: index.total_edges(),
            edges_pruned: self.edges_pruned,
            edges_restored,
            per_level_mean_degree: index.mean_degree_per_level(),
            distance_computations: self.distance_computations,
        };
        let prune_log = self.options.record_prunes.then_some(PruneLog {
            levels: self.prune_log,
        });
        Ok(BuildOutput {
            index,
            stats,
            prune_log,
        })
    }
}

/// Outcome of checking that M_β-pruned candidates stay reachable in two hops.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoverabilityReport {
    /// Pruned candidates that are no longer direct neighbors.
    pub checked: usize,
    /// Pruned candidates later re-added as direct neighbors.
    pub direct: usize,
    /// Pruned candidates found in no kept list at position `>= m_beta`.
    pub unreachable: Vec<(usize, u32, u32)>,
}

/// For every node `v` and every candidate `x` the M_β rule pruned from `v`,
/// checks that `x` is either still a neighbor of `v` or sits in the list of
/// some neighbor `y` stored at position `m_beta` or later, the positions that
/// two-hop look-ups expand.
pub fn audit_recoverability(index: &GraphIndex, log: &PruneLog) -> RecoverabilityReport {
    let m_beta = index.params().m_beta;
    let mut report = RecoverabilityReport::default();
    let mut direct = FxHashSet::default();
    let mut two_hop = FxHashSet::default();
    for (l, nodes) in log.levels.iter().enumerate() {
        for (v, pruned) in nodes.iter().enumerate() {
            if pruned.is_empty() {
                continue;
            }
            let list = index.list(v as u32, l);
            direct.clear();
            direct.extend(list.iter().copied());
            two_hop.clear();
            for &y in list.iter().skip(m_beta) {
                two_hop.extend(index.list(y, l).iter().copied());
            }
            for &x in pruned {
                if direct.contains(&x) {
                    report.direct += 1;
                    continue;
                }
                report.checked += 1;
                if !two_hop.contains(&x) {
                    report.unreachable.push((l, v as u32, x));
                }
            }
        }
    }
    report
}
