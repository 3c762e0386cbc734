//! Synthetic datasets and hybrid-query workloads, and exact ground truth.
//!
//! Vectors come from a Gaussian mixture drawn in a latent space and mapped
//! into `d` dimensions by one shared random linear map. The generators for label, correlation
//! and selectivity workloads draw their attributes from independent RNG
//! streams, so the same [`MixtureSpec`] always yields the same vectors and
//! one index can serve several workloads.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, Dataset};
use crate::distance::Metric;
use crate::error::{Error, Result};
use crate::neighbor::Neighbor;
use crate::predicate::{exact_selectivity, Predicate};
use crate::query::HybridQuery;

const STREAM_VECTORS: u64 = 1;
const STREAM_LABELS: u64 = 2;
const STREAM_LABEL_QUERIES: u64 = 3;
const STREAM_KEYWORDS: u64 = 4;
const STREAM_KEYWORD_QUERIES: u64 = 5;
const STREAM_DATES: u64 = 6;
const STREAM_WINDOWS: u64 = 7;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Shape of the Gaussian mixture.
///
/// Clusters live in a shared `latent_dim`-dimensional space: centers are
/// standard normal there, members scatter around them with deviation
/// `spread`, and the latent points are mapped into `d` dimensions by one
/// random linear map before isotropic `noise` is added.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub n: usize,
    pub d: usize,
    pub clusters: usize,
    pub latent_dim: usize,
    pub spread: f32,
    pub noise: f32,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        MixtureSpec {
            n,
            d,
            clusters: 16,
            latent_dim: 32,
            spread: 2.5,
            noise: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.clusters == 0 || self.latent_dim == 0 {
            return Err(Error::InvalidParams(
                "n, d, clusters and latent_dim must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Database vectors plus held-out query vectors drawn from the same mixture.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub spec: MixtureSpec,
    pub base: Vec<f32>,
    pub base_cluster: Vec<u32>,
    pub queries: Vec<Vec<f32>>,
    pub query_cluster: Vec<u32>,
}

impl Mixture {
    pub fn generate(spec: &MixtureSpec, n_queries: usize) -> Result<Mixture> {
        spec.validate()?;
        let mut r = rng(spec.seed, STREAM_VECTORS);
        let (d, rank) = (spec.d, spec.latent_dim);
        let centers: Vec<f32> = (0..spec.clusters * rank).map(|_| r.sample(StandardNormal)).collect();
        let scale = (1.0 / rank as f64).sqrt() as f32;
        let map: Vec<f32> = (0..d * rank)
            .map(|_| r.sample::<f32, _>(StandardNormal) * scale)
            .collect();
        let point = |r: &mut ChaCha8Rng, out: &mut Vec<f32>| -> u32 {
            let c = r.gen_range(0..spec.clusters);
            let latent: Vec<f32> = centers[c * rank..(c + 1) * rank]
                .iter()
                .map(|&m| m + spec.spread * r.sample::<f32, _>(StandardNormal))
                .collect();
            for i in 0..d {
                let row = &map[i * rank..(i + 1) * rank];
                let x: f32 = row.iter().zip(&latent).map(|(a, z)| a * z).sum();
                out.push(x + spec.noise * r.sample::<f32, _>(StandardNormal));
            }
            c as u32
        };
        let mut base = Vec::with_capacity(spec.n * d);
        let base_cluster = (0..spec.n).map(|_| point(&mut r, &mut base)).collect();
        let mut queries = Vec::with_capacity(n_queries);
        let mut query_cluster = Vec::with_capacity(n_queries);
        for _ in 0..n_queries {
            let mut q = Vec::with_capacity(d);
            query_cluster.push(point(&mut r, &mut q));
            queries.push(q);
        }
        Ok(Mixture {
            spec: *spec,
            base,
            base_cluster,
            queries,
            query_cluster,
        })
    }

    /// The database vectors as a dataset with no attributes.
    pub fn dataset(&self) -> Dataset {
        Dataset::from_vectors(self.spec.d, self.base.clone()).expect("consistent sizes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CorrelationMode {
    Pos,
    Neg,
    None,
}

impl CorrelationMode {
    pub const ALL: [CorrelationMode; 3] = [CorrelationMode::Pos, CorrelationMode::None, CorrelationMode::Neg];

    pub fn name(self) -> &'static str {
        match self {
            CorrelationMode::Pos => "POS",
            CorrelationMode::Neg => "NEG",
            CorrelationMode::None => "NONE",
        }
    }
}

impl std::str::FromStr for CorrelationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorrelationMode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown correlation mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadKind {
    LcpsLabels { cardinality: usize },
    SelectivitySweep { percentiles: Vec<f64> },
    Correlation { mode: CorrelationMode },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub n_queries: usize,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            WorkloadKind::LcpsLabels { cardinality } if *cardinality < 2 => Err(Error::InvalidParams(format!(
                "cardinality must be at least 2, got {cardinality}"
            ))),
            WorkloadKind::SelectivitySweep { percentiles } => match percentiles.iter().find(|p| !(0.0..=100.0).contains(*p)) {
                Some(p) => Err(Error::InvalidParams(format!("percentile {p} outside [0, 100]"))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

/// Uniform labels on `1..=cardinality`.
pub fn lcps_labels(n: usize, cardinality: usize, seed: u64) -> Result<Vec<i64>> {
    if cardinality < 2 {
        return Err(Error::InvalidParams(format!("cardinality must be at least 2, got {cardinality}")));
    }
    let mut r = rng(seed, STREAM_LABELS);
    Ok((0..n).map(|_| r.gen_range(1..=cardinality as i64)).collect())
}

/// Equality queries on `label_attr` with uniformly drawn labels.
pub fn lcps_queries(query_vectors: &[Vec<f32>], label_attr: usize, cardinality: usize, k: usize, seed: u64) -> Vec<HybridQuery> {
    let mut r = rng(seed, STREAM_LABEL_QUERIES);
    query_vectors
        .iter()
        .map(|v| HybridQuery::new(v.clone(), Predicate::equals(label_attr, r.gen_range(1..=cardinality as i64)), k))
        .collect()
}

/// Mixture vectors with one integer label column (attribute 0) and
/// single-label equality queries, `K = 10`.
pub fn gen_lcps(n: usize, d: usize, cardinality: usize, n_queries: usize, seed: u64) -> Result<(Dataset, Vec<HybridQuery>)> {
    gen_lcps_from(&MixtureSpec::new(n, d, seed), cardinality, n_queries, seed)
}

pub fn gen_lcps_from(spec: &MixtureSpec, cardinality: usize, n_queries: usize, seed: u64) -> Result<(Dataset, Vec<HybridQuery>)> {
    let labels = lcps_labels(spec.n, cardinality, seed)?;
    let mix = Mixture::generate(spec, n_queries)?;
    let mut ds = mix.dataset();
    ds.push_int_column(labels)?;
    let queries = lcps_queries(&mix.queries, 0, cardinality, 10, seed);
    Ok((ds, queries))
}

pub fn topic_keyword(cluster: u32) -> String {
    format!("t{cluster}")
}

/// Number of cluster-independent filler keywords.
pub const GENERIC_KEYWORDS: usize = 14;

/// One topic keyword per entity (its own cluster's topic, or a random topic
/// for [`CorrelationMode::None`]) plus two random generic keywords.
pub fn correlation_keywords(clusters: &[u32], n_clusters: usize, mode: CorrelationMode, seed: u64) -> Vec<Vec<String>> {
    let mut r = rng(seed, STREAM_KEYWORDS);
    let generic: Vec<usize> = (0..GENERIC_KEYWORDS).collect();
    clusters
        .iter()
        .map(|&c| {
            let topic = match mode {
                CorrelationMode::None => r.gen_range(0..n_clusters as u32),
                _ => c,
            };
            let mut kws = vec![topic_keyword(topic)];
            kws.extend(generic.choose_multiple(&mut r, 2).map(|g| format!("g{g}")));
            kws
        })
        .collect()
}

/// Two-topic `contains` queries. POS includes the query's own cluster topic,
/// NEG excludes it, NONE ignores it.
pub fn correlation_queries(
    query_vectors: &[Vec<f32>],
    query_clusters: &[u32],
    n_clusters: usize,
    keyword_attr: usize,
    mode: CorrelationMode,
    k: usize,
    seed: u64,
) -> Result<Vec<HybridQuery>> {
    if n_clusters < 3 {
        return Err(Error::InvalidParams("correlation workloads need at least 3 clusters".into()));
    }
    let mut r = rng(seed, STREAM_KEYWORD_QUERIES);
    let n = n_clusters as u32;
    let other = |r: &mut ChaCha8Rng, avoid: &[u32]| loop {
        let t = r.gen_range(0..n);
        if !avoid.contains(&t) {
            return t;
        }
    };
    Ok(query_vectors
        .iter()
        .zip(query_clusters)
        .map(|(v, &c)| {
            let topics = match mode {
                CorrelationMode::Pos => [c, other(&mut r, &[c])],
                CorrelationMode::Neg => {
                    let a = other(&mut r, &[c]);
                    [a, other(&mut r, &[c, a])]
                }
                CorrelationMode::None => {
                    let a = r.gen_range(0..n);
                    [a, other(&mut r, &[a])]
                }
            };
            HybridQuery::new(
                v.clone(),
                Predicate::contains(keyword_attr, topics.iter().map(|&t| topic_keyword(t))),
                k,
            )
        })
        .collect())
}

/// Mixture vectors with one keyword column (attribute 0) and two-topic
/// `contains` queries, `K = 10`.
pub fn gen_correlation(n: usize, d: usize, mode: CorrelationMode, n_queries: usize, seed: u64) -> Result<(Dataset, Vec<HybridQuery>)> {
    gen_correlation_from(&MixtureSpec::new(n, d, seed), mode, n_queries, seed)
}

pub fn gen_correlation_from(
    spec: &MixtureSpec,
    mode: CorrelationMode,
    n_queries: usize,
    seed: u64,
) -> Result<(Dataset, Vec<HybridQuery>)> {
    let mix = Mixture::generate(spec, n_queries)?;
    let mut ds = mix.dataset();
    ds.push_keyword_column(correlation_keywords(&mix.base_cluster, spec.clusters, mode, seed))?;
    let queries = correlation_queries(&mix.queries, &mix.query_cluster, spec.clusters, 0, mode, 10, seed)?;
    Ok((ds, queries))
}

/// 1900-01-01 as days since the Unix epoch.
pub const DATE_MIN: i64 = -25567;
/// 2020-12-31 as days since the Unix epoch.
pub const DATE_MAX: i64 = 18627;

/// Uniform dates between 1900-01-01 and 2020-12-31, as days since the epoch.
pub fn uniform_dates(n: usize, seed: u64) -> Vec<i64> {
    let mut r = rng(seed, STREAM_DATES);
    (0..n).map(|_| r.gen_range(DATE_MIN..=DATE_MAX)).collect()
}

/// Piecewise-linear map from workload percentile to target selectivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectivityTargets {
    /// `(percentile, selectivity)` anchors, ascending in both.
    pub anchors: Vec<(f64, f64)>,
}

impl Default for SelectivityTargets {
    fn default() -> Self {
        SelectivityTargets {
            anchors: vec![(1.0, 0.0127), (25.0, 0.0485), (50.0, 0.1215), (75.0, 0.2529), (99.0, 0.6164), (100.0, 1.0)],
        }
    }
}

impl SelectivityTargets {
    pub fn target(&self, percentile: f64) -> f64 {
        let a = &self.anchors;
        if percentile <= a[0].0 {
            return a[0].1;
        }
        for w in a.windows(2) {
            let ((p0, s0), (p1, s1)) = (w[0], w[1]);
            if percentile <= p1 {
                return s0 + (s1 - s0) * (percentile - p0) / (p1 - p0);
            }
        }
        a[a.len() - 1].1
    }
}

/// Relative tolerance on produced selectivities.
pub const SELECTIVITY_TOLERANCE: f64 = 0.10;

fn within(s: f64, target: f64) -> bool {
    (s - target).abs() <= SELECTIVITY_TOLERANCE * target
}

/// A predicate on `attr` whose exact selectivity is within tolerance of
/// `target`: a random `between` window for integer/date attributes, a random
/// keyword set for keyword attributes.
pub fn predicate_for_selectivity(ds: &Dataset, attr: usize, target: f64, r: &mut impl Rng) -> Result<Predicate> {
    if target >= 1.0 {
        return Ok(Predicate::True);
    }
    if !(target > 0.0) {
        return Err(Error::InvalidParams(format!("target selectivity {target} must be positive")));
    }
    let n = ds.len();
    let mut closest = f64::NAN;
    let mut note = |s: f64| {
        if closest.is_nan() || (s - target).abs() < (closest - target).abs() {
            closest = s;
        }
    };
    match ds.column(attr) {
        Some(Column::Int(v)) | Some(Column::Date(v)) => {
            let mut sorted = v.clone();
            sorted.sort_unstable();
            let count = ((target * n as f64).round() as usize).clamp(1, n);
            for _ in 0..64 {
                let start = r.gen_range(0..=n - count);
                let (lo, hi) = (sorted[start], sorted[start + count - 1]);
                let passing = sorted.partition_point(|&x| x <= hi) - sorted.partition_point(|&x| x < lo);
                let s = passing as f64 / n as f64;
                note(s);
                if within(s, target) {
                    return Ok(Predicate::between(attr, lo, hi));
                }
            }
        }
        Some(Column::Keywords(col)) => {
            let universe = col.universe().to_vec();
            for _ in 0..64 {
                let mut order = universe.clone();
                order.shuffle(r);
                let mut chosen = Vec::new();
                for kw in order {
                    chosen.push(kw);
                    let p = Predicate::contains(attr, chosen.clone());
                    let s = exact_selectivity(&p, ds)?.value;
                    note(s);
                    if within(s, target) {
                        return Ok(p);
                    }
                    if s > target {
                        break;
                    }
                }
            }
        }
        other => {
            return Err(Error::UnsupportedSchema(format!(
                "attribute {attr} ({:?}) supports neither ranges nor keywords",
                other.map(Column::kind)
            )))
        }
    }
    Err(Error::UnreachableSelectivity {
        target,
        closest: if closest.is_nan() { 0.0 } else { closest },
    })
}

/// For each percentile, `n_queries` queries on `attr` whose predicates hit the
/// percentile's target selectivity. Query vectors cycle through `pool`.
pub fn gen_selectivity_sweep(
    ds: &Dataset,
    attr: usize,
    percentiles: &[f64],
    targets: &SelectivityTargets,
    pool: &[Vec<f32>],
    n_queries: usize,
    seed: u64,
) -> Result<Vec<(f64, Vec<HybridQuery>)>> {
    if pool.is_empty() {
        return Err(Error::InvalidParams("empty query vector pool".into()));
    }
    if let Some(p) = percentiles.iter().find(|p| !(0.0..=100.0).contains(*p)) {
        return Err(Error::InvalidParams(format!("percentile {p} outside [0, 100]")));
    }
    let mut r = rng(seed, STREAM_WINDOWS);
    percentiles
        .iter()
        .map(|&pct| {
            let target = targets.target(pct);
            let queries = (0..n_queries)
                .map(|i| {
                    let p = predicate_for_selectivity(ds, attr, target, &mut r)?;
                    Ok(HybridQuery::new(pool[i % pool.len()].clone(), p, 10))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((pct, queries))
        })
        .collect()
}

/// Exact filtered K-NN per query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(rename = "K")]
    pub k: usize,
    /// Per query, at most `k` ids in ascending distance order.
    pub ids: Vec<Vec<u32>>,
    /// Reported distances matching `ids`.
    pub distances: Vec<Vec<f32>>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `(|G ∩ R|, min(K, |G|))` for query `qi`, `R` truncated to `K`.
    pub fn hits(&self, qi: usize, result: &[u32]) -> (usize, usize) {
        let g = &self.ids[qi];
        let hits = result.iter().take(self.k).filter(|id| g.contains(id)).count();
        (hits, g.len().min(self.k))
    }

    /// Recall@K of one result; an empty ground truth gives 1.0.
    pub fn recall(&self, qi: usize, result: &[u32]) -> f64 {
        let (hits, denom) = self.hits(qi, result);
        if denom == 0 {
            1.0
        } else {
            hits as f64 / denom as f64
        }
    }
}

fn exact_top_k(ds: &Dataset, q: &HybridQuery, k: usize, metric: Metric) -> Result<(Vec<u32>, Vec<f32>)> {
    let p = q.predicate.bind(ds)?;
    let mut all: Vec<Neighbor> = (0..ds.len() as u32)
        .filter(|&id| p.matches(id))
        .map(|id| Neighbor::new(id, metric.score(&q.vector, ds.vector(id))))
        .collect();
    all.sort_unstable();
    all.truncate(k);
    Ok((all.iter().map(|n| n.id).collect(), all.iter().map(|n| metric.report(n.dist)).collect()))
}

/// Exhaustive scan per query (parallel across queries).
pub fn ground_truth(ds: &Dataset, queries: &[HybridQuery], k: usize) -> Result<GroundTruth> {
    if k == 0 {
        return Err(Error::InvalidK { k, efs: 0 });
    }
    if let Some(q) = queries.iter().find(|q| q.vector.len() != ds.dim()) {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            found: q.vector.len(),
        });
    }
    let metric = ds.metric();
    let rows = queries
        .par_iter()
        .map(|q| exact_top_k(ds, q, k, metric))
        .collect::<Result<Vec<_>>>()?;
    let (ids, distances) = rows.into_iter().unzip();
    Ok(GroundTruth { k, ids, distances })
}
