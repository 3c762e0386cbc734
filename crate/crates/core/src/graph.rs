//! Hierarchical graph storage shared by the HNSW, ACORN-γ and ACORN-1
//! indices.
//!
//! Node ids are dense dataset row indices. The graph never owns vectors; a
//! search pairs a [`GraphIndex`] with the [`Dataset`](crate::Dataset) it was
//! built over. Every per-level neighbor list is ordered by ascending distance
//! to its owner at the time the edges were selected, so "first M" and "first
//! M_β" reads are plain slice prefixes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::distance::Metric;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Hnsw,
    AcornGamma,
    Acorn1,
}

impl Variant {
    pub fn tag(self) -> u32 {
        match self {
            Variant::Hnsw => 0,
            Variant::AcornGamma => 1,
            Variant::Acorn1 => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Variant::Hnsw),
            1 => Some(Variant::AcornGamma),
            2 => Some(Variant::Acorn1),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Hnsw => "hnsw",
            Variant::AcornGamma => "acorn-gamma",
            Variant::Acorn1 => "acorn-1",
        }
    }
}

/// How candidate edges are thinned on the pruned levels of an index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PruneStrategy {
    /// Keep the nearest `m_beta` candidates, then drop candidates already
    /// reachable through a kept candidate's list.
    AcornMBeta,
    /// Relative-neighborhood pruning restricted to candidates sharing the
    /// equality label stored in attribute `label_attr`.
    RngMetadataAware { label_attr: usize },
    /// Plain relative-neighborhood pruning, blind to attributes.
    HnswMetadataBlind,
    None,
}

impl PruneStrategy {
    pub fn tag(self) -> u32 {
        match self {
            PruneStrategy::AcornMBeta => 0,
            PruneStrategy::RngMetadataAware { .. } => 1,
            PruneStrategy::HnswMetadataBlind => 2,
            PruneStrategy::None => 3,
        }
    }

    pub fn from_tag(tag: u32, label_attr: usize) -> Option<Self> {
        match tag {
            0 => Some(PruneStrategy::AcornMBeta),
            1 => Some(PruneStrategy::RngMetadataAware { label_attr }),
            2 => Some(PruneStrategy::HnswMetadataBlind),
            3 => Some(PruneStrategy::None),
            _ => None,
        }
    }

    fn label_attr(self) -> usize {
        match self {
            PruneStrategy::RngMetadataAware { label_attr } => label_attr,
            _ => 0,
        }
    }
}

fn default_compressed_levels() -> usize {
    1
}

fn default_prune() -> PruneStrategy {
    PruneStrategy::AcornMBeta
}

/// Construction parameters. `m_L = 1/ln(M)` is derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildParams {
    pub variant: Variant,
    /// Degree bound used while traversing.
    #[serde(rename = "M")]
    pub m: usize,
    pub efc: usize,
    pub gamma: usize,
    pub m_beta: usize,
    pub seed: u64,
    #[serde(default = "default_prune", rename = "prune_strategy")]
    pub prune: PruneStrategy,
    /// Number of bottom levels the prune strategy applies to (ACORN-γ only).
    #[serde(default = "default_compressed_levels")]
    pub compressed_levels: usize,
}

impl BuildParams {
    pub fn hnsw(m: usize, efc: usize, seed: u64) -> Self {
        BuildParams {
            variant: Variant::Hnsw,
            m,
            efc,
            gamma: 1,
            m_beta: m,
            seed,
            prune: PruneStrategy::HnswMetadataBlind,
            compressed_levels: 0,
        }
    }

    pub fn acorn_gamma(m: usize, gamma: usize, m_beta: usize, efc: usize, seed: u64) -> Self {
        BuildParams {
            variant: Variant::AcornGamma,
            m,
            efc,
            gamma,
            m_beta,
            seed,
            prune: PruneStrategy::AcornMBeta,
            compressed_levels: 1,
        }
    }

    pub fn acorn1(m: usize, efc: usize, seed: u64) -> Self {
        BuildParams {
            variant: Variant::Acorn1,
            m,
            efc,
            gamma: 1,
            m_beta: m,
            seed,
            prune: PruneStrategy::None,
            compressed_levels: 0,
        }
    }

    pub fn with_prune(mut self, prune: PruneStrategy) -> Self {
        self.prune = prune;
        self
    }

    pub fn m_l(&self) -> f64 {
        1.0 / (self.m as f64).ln()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.m < 2 {
            return bad(format!("M must be at least 2, got {}", self.m));
        }
        if self.efc == 0 {
            return bad("efc must be positive".into());
        }
        if self.gamma == 0 {
            return bad("gamma must be at least 1".into());
        }
        if self.m_beta > self.m * self.gamma {
            return bad(format!("m_beta {} exceeds M*gamma {}", self.m_beta, self.m * self.gamma));
        }
        match self.variant {
            Variant::Hnsw if self.gamma != 1 => bad("HNSW requires gamma = 1".into()),
            Variant::Hnsw if self.prune != PruneStrategy::HnswMetadataBlind => {
                bad("HNSW always uses metadata-blind RNG pruning".into())
            }
            Variant::Acorn1 if self.gamma != 1 || self.m_beta != self.m => {
                bad("ACORN-1 requires gamma = 1 and m_beta = M".into())
            }
            Variant::Acorn1 if self.prune != PruneStrategy::None => bad("ACORN-1 does not prune".into()),
            _ => Ok(()),
        }
    }

    /// Maximum neighbor-list length on `level`.
    pub fn cap(&self, level: usize) -> usize {
        match self.variant {
            Variant::Hnsw if level == 0 => 2 * self.m,
            Variant::Hnsw => self.m,
            Variant::AcornGamma => self.m * self.gamma,
            Variant::Acorn1 => self.m,
        }
    }

    /// True if the prune strategy applies on `level`.
    pub fn is_pruned_level(&self, level: usize) -> bool {
        self.variant == Variant::AcornGamma && self.prune != PruneStrategy::None && level < self.compressed_levels
    }

    /// True if `level` holds M_β-compressed lists that two-hop look-ups can
    /// expand.
    pub fn is_compressed_level(&self, level: usize) -> bool {
        self.is_pruned_level(level) && self.prune == PruneStrategy::AcornMBeta
    }

    pub(crate) fn label_attr(&self) -> usize {
        self.prune.label_attr()
    }
}

/// Draws node levels as `floor(-ln(u) * m_L)` with `u` uniform in (0, 1].
#[derive(Debug, Clone)]
pub struct LevelSampler {
    m_l: f64,
    rng: ChaCha8Rng,
}

impl LevelSampler {
    pub fn new(m_l: f64, seed: u64) -> Self {
        LevelSampler {
            m_l,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn for_degree(m: usize, seed: u64) -> Self {
        Self::new(1.0 / (m as f64).ln(), seed)
    }

    pub fn m_l(&self) -> f64 {
        self.m_l
    }

    /// The level a given uniform draw maps to.
    pub fn level_for(&self, u: f64) -> usize {
        (-u.ln() * self.m_l).floor() as usize
    }

    pub fn next_level(&mut self) -> usize {
        let u = 1.0 - self.rng.gen::<f64>();
        self.level_for(u)
    }
}

/// Multi-level adjacency. `lists[l][v]` is node `v`'s ordered neighbor list
/// on level `l`; it is empty for nodes that do not reach `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphIndex {
    params: BuildParams,
    dim: usize,
    metric: Metric,
    entry_point: u32,
    node_levels: Vec<u8>,
    lists: Vec<Vec<Vec<u32>>>,
}

impl GraphIndex {
    /// Assembles an index and checks every structural invariant.
    pub fn from_parts(
        params: BuildParams,
        dim: usize,
        metric: Metric,
        entry_point: u32,
        node_levels: Vec<u8>,
        lists: Vec<Vec<Vec<u32>>>,
    ) -> Result<Self> {
        let index = GraphIndex {
            params,
            dim,
            metric,
            entry_point,
            node_levels,
            lists,
        };
        index.validate()?;
        Ok(index)
    }

    /// A graph with every node placed on its level and no edges.
    pub fn empty(params: BuildParams, dim: usize, metric: Metric, node_levels: Vec<u8>) -> Result<Self> {
        if node_levels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let max_level = *node_levels.iter().max().expect("non-empty") as usize;
        let entry_point = node_levels
            .iter()
            .position(|&l| l as usize == max_level)
            .expect("max exists") as u32;
        let n = node_levels.len();
        let lists = (0..=max_level).map(|_| vec![Vec::new(); n]).collect();
        Self::from_parts(params, dim, metric, entry_point, node_levels, lists)
    }

    pub fn params(&self) -> &BuildParams {
        &self.params
    }

    pub fn variant(&self) -> Variant {
        self.params.variant
    }

    pub fn len(&self) -> usize {
        self.node_levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_levels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn entry_point(&self) -> u32 {
        self.entry_point
    }

    pub fn max_level(&self) -> usize {
        self.lists.len() - 1
    }

    pub fn num_levels(&self) -> usize {
        self.lists.len()
    }

    pub fn node_level(&self, v: u32) -> usize {
        self.node_levels[v as usize] as usize
    }

    pub fn node_levels(&self) -> &[u8] {
        &self.node_levels
    }

    #[inline]
    pub fn has_node(&self, v: u32, level: usize) -> bool {
        (v as usize) < self.node_levels.len() && self.node_levels[v as usize] as usize >= level
    }

    /// Read-only view of `v`'s list on `level`.
    pub fn neighbors(&self, v: u32, level: usize) -> Result<&[u32]> {
        if !self.has_node(v, level) {
            return Err(Error::UnknownNode { node: v, level });
        }
        Ok(&self.lists[level][v as usize])
    }

    /// Unchecked variant for hot loops; callers guarantee `v` is on `level`.
    #[inline]
    pub(crate) fn list(&self, v: u32, level: usize) -> &[u32] {
        &self.lists[level][v as usize]
    }

    /// Ids of nodes present on `level`, ascending.
    pub fn nodes_on_level(&self, level: usize) -> impl Iterator<Item = u32> + '_ {
        self.node_levels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l as usize >= level)
            .map(|(v, _)| v as u32)
    }

    pub fn level_size(&self, level: usize) -> usize {
        self.node_levels.iter().filter(|&&l| l as usize >= level).count()
    }

    /// Replaces `v`'s list on `level` after checking the variant's cap,
    /// self-loops, duplicates and dangling ids.
    pub fn set_neighbors(&mut self, v: u32, level: usize, list: Vec<u32>) -> Result<()> {
        if !self.has_node(v, level) {
            return Err(Error::UnknownNode { node: v, level });
        }
        self.check_list(v, level, &list)?;
        self.lists[level][v as usize] = list;
        Ok(())
    }

    fn check_list(&self, v: u32, level: usize, list: &[u32]) -> Result<()> {
        let cap = self.params.cap(level);
        if list.len() > cap {
            return Err(Error::DegreeOverflow {
                node: v,
                level,
                len: list.len(),
                cap,
            });
        }
        let mut seen = FxHashSet::default();
        for &u in list {
            if u == v {
                return Err(Error::SelfLoop { node: v, level });
            }
            if !self.has_node(u, level) {
                return Err(Error::UnknownNode { node: u, level });
            }
            if !seen.insert(u) {
                return Err(Error::DuplicateNeighbor { node: v, level, dup: u });
            }
        }
        Ok(())
    }

    /// Checks every structural invariant, naming the first violated one.
    pub fn validate(&self) -> Result<()> {
        let violation = |what: &str| Err(Error::InvariantViolation(what.to_string()));
        let n = self.node_levels.len();
        if n == 0 {
            return violation("empty index");
        }
        if self.lists.is_empty() {
            return violation("no levels");
        }
        if self.params.validate().is_err() {
            return violation("invalid build parameters");
        }
        let max_level = self.max_level();
        if self.node_levels.iter().any(|&l| l as usize > max_level) {
            return violation("node level above max level");
        }
        if self.entry_point as usize >= n {
            return violation("entry point out of range");
        }
        if self.node_levels[self.entry_point as usize] as usize != max_level {
            return violation("entry point not on max level");
        }
        for (level, lists) in self.lists.iter().enumerate() {
            if lists.len() != n {
                return violation("level table size");
            }
            for (v, list) in lists.iter().enumerate() {
                if !self.has_node(v as u32, level) && !list.is_empty() {
                    return violation("edges on absent node");
                }
                if list.iter().any(|&u| u as usize >= n || !self.has_node(u, level)) {
                    return violation("dangling edge");
                }
                match self.check_list(v as u32, level, list) {
                    Ok(()) => {}
                    Err(Error::DegreeOverflow { .. }) => return violation("degree cap"),
                    Err(Error::SelfLoop { .. }) => return violation("self loop"),
                    Err(Error::DuplicateNeighbor { .. }) => return violation("duplicate neighbor"),
                    Err(_) => return violation("dangling edge"),
                }
            }
        }
        Ok(())
    }

    pub fn edge_count(&self, level: usize) -> usize {
        self.lists[level].iter().map(Vec::len).sum()
    }

    pub fn total_edges(&self) -> usize {
        (0..self.num_levels()).map(|l| self.edge_count(l)).sum()
    }

    /// Mean out-degree over the nodes present on each level.
    pub fn mean_degree_per_level(&self) -> Vec<f64> {
        (0..self.num_levels())
            .map(|l| {
                let nodes = self.level_size(l);
                if nodes == 0 {
                    0.0
                } else {
                    self.edge_count(l) as f64 / nodes as f64
                }
            })
            .collect()
    }
}
