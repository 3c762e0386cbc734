//! Acceptance run: prints one PASS/FAIL line per criterion.
//!
//! `ACORN_ACCEPT_N` shrinks the 10^5-vector fixture for quick local
//! iterations. With `ACORN_ACCEPT_STRICT=1` the process exits nonzero when any
//! criterion fails; otherwise only a panic outside a criterion fails the run.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use acorn_core::baselines::{oracle_build, OraclePartitionSet};
use acorn_core::build::{audit_recoverability, BuildStats, PruneLog};
use acorn_core::eval::{
    best_recall, degree_concentration_audit, full_view, measure_index, GraphMethod, OracleMethod, PostfilterMethod,
    PrefilterMethod, SearchMethod,
};
use acorn_core::predicate::{exact_selectivity, AcceptAll, BoundPredicate};
use acorn_core::workload::*;
use acorn_core::Strategy;
use acorn_core::*;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 42;
const D: usize = 128;
const M: usize = 32;
const GAMMA: usize = 12;
const M_BETA: usize = 64;
const EFC: usize = 40;
const K: usize = 10;
const LCPS_QUERIES: usize = 300;
const SEL_QUERIES: usize = 100;
const CORR_QUERIES: usize = 200;
const PERCENTILES: [f64; 5] = [1.0, 25.0, 50.0, 75.0, 99.0];
const EFS_GRID: [usize; 11] = [10, 20, 30, 40, 60, 80, 110, 160, 260, 410, 800];
/// Scale of the pruning comparison, which needs six ACORN-γ builds.
const PRUNE_N: usize = 20_000;

// attribute positions in the shared dataset
const LABEL: usize = 0;
const DATE: usize = 1;
const CLUSTER_KW: usize = 2;
const RANDOM_KW: usize = 3;

struct Built {
    index: GraphIndex,
    stats: BuildStats,
}

struct Workload {
    queries: Vec<HybridQuery>,
    gt: GroundTruth,
}

impl Workload {
    fn new(ds: &Dataset, queries: Vec<HybridQuery>) -> Self {
        let gt = ground_truth(ds, &queries, K).expect("ground truth");
        Workload { queries, gt }
    }
}

struct Fixture {
    n: usize,
    ds: Dataset,
    lcps: Workload,
    selectivity: Vec<(f64, Workload)>,
    correlation: Vec<(CorrelationMode, Workload)>,
    gamma: Built,
    prune_log: Option<PruneLog>,
    acorn1: Built,
    hnsw: Built,
    oracle: OraclePartitionSet,
    oracle_tti: f64,
    gt_seconds: f64,
}

fn config(efs: &[usize]) -> SweepConfig {
    SweepConfig { k: K, efs: efs.to_vec(), repeats: 1, threads: 1 }
}

fn build_full(ds: &Dataset, params: &BuildParams, record_prunes: bool) -> (Built, Option<PruneLog>) {
    let out = build_with(ds, params, BuildOptions { record_prunes, skip_repair: false }).expect("build");
    (Built { index: out.index, stats: out.stats }, out.prune_log)
}

fn fixture(n: usize) -> Fixture {
    let spec = MixtureSpec::new(n, D, SEED);
    let t = Instant::now();
    let (mut ds, lcps) = gen_lcps_from(&spec, 12, LCPS_QUERIES, SEED).unwrap();
    let mix = Mixture::generate(&spec, CORR_QUERIES.max(LCPS_QUERIES)).unwrap();
    ds.push_date_column(uniform_dates(n, SEED)).unwrap();
    ds.push_keyword_column(correlation_keywords(&mix.base_cluster, spec.clusters, CorrelationMode::Pos, SEED))
        .unwrap();
    ds.push_keyword_column(correlation_keywords(&mix.base_cluster, spec.clusters, CorrelationMode::None, SEED))
        .unwrap();

    let targets = SelectivityTargets::default();
    let sweep = gen_selectivity_sweep(&ds, DATE, &PERCENTILES, &targets, &mix.queries, SEL_QUERIES, SEED).unwrap();
    let corr_vectors = &mix.queries[..CORR_QUERIES];
    let corr_clusters = &mix.query_cluster[..CORR_QUERIES];
    let correlation: Vec<(CorrelationMode, Workload)> = CorrelationMode::ALL
        .into_iter()
        .map(|mode| {
            let attr = if mode == CorrelationMode::None { RANDOM_KW } else { CLUSTER_KW };
            let qs = correlation_queries(corr_vectors, corr_clusters, spec.clusters, attr, mode, K, SEED).unwrap();
            (mode, Workload::new(&ds, qs))
        })
        .collect();
    let lcps = Workload::new(&ds, lcps);
    let selectivity = sweep.into_iter().map(|(p, qs)| (p, Workload::new(&ds, qs))).collect();
    let gt_seconds = t.elapsed().as_secs_f64();
    eprintln!("fixture: n = {n}, workloads and ground truth in {gt_seconds:.1}s");

    let (hnsw, _) = build_full(&ds, &BuildParams::hnsw(M, EFC, 1), false);
    let (acorn1, _) = build_full(&ds, &BuildParams::acorn1(M, EFC, 1), false);
    let t = Instant::now();
    let labels: Vec<Predicate> = (1..=12).map(|y| Predicate::equals(LABEL, y)).collect();
    let oracle = oracle_build(&ds, &labels, &BuildParams::hnsw(M, EFC, 1)).unwrap();
    let oracle_tti = t.elapsed().as_secs_f64();
    eprintln!(
        "fixture: hnsw {:.1}s, acorn-1 {:.1}s, oracle {:.1}s",
        hnsw.stats.tti_seconds, acorn1.stats.tti_seconds, oracle_tti
    );
    let (gamma, prune_log) = build_full(&ds, &BuildParams::acorn_gamma(M, GAMMA, M_BETA, EFC, 1), true);
    eprintln!("fixture: acorn-gamma {:.1}s", gamma.stats.tti_seconds);
    Fixture {
        n,
        ds,
        lcps,
        selectivity,
        correlation,
        gamma,
        prune_log,
        acorn1,
        hnsw,
        oracle,
        oracle_tti,
        gt_seconds,
    }
}

type Outcome = (bool, String);

fn run_sweep(method: &dyn SearchMethod, w: &Workload, efs: &[usize]) -> Vec<SweepRow> {
    sweep(method, &w.queries, &w.gt, &config(efs)).expect("sweep")
}

fn fmt_dc(v: Option<f64>) -> String {
    v.map_or("never".into(), |x| format!("{x:.0}"))
}

fn c1_table_ordering(f: &Fixture) -> Outcome {
    let t = Instant::now();
    let post = PostfilterMethod::exact(&f.hnsw.index, &f.ds, &f.lcps.queries).unwrap();
    let methods: Vec<Box<dyn SearchMethod + '_>> = vec![
        Box::new(OracleMethod { ops: &f.oracle }),
        Box::new(GraphMethod::new("acorn-gamma", &f.gamma.index, &f.ds)),
        Box::new(GraphMethod::new("acorn-1", &f.acorn1.index, &f.ds)),
        Box::new(post),
    ];
    let dc: Vec<Option<f64>> = methods
        .iter()
        .map(|m| dist_comps_at_recall(&run_sweep(m.as_ref(), &f.lcps, &EFS_GRID), 0.8))
        .collect();
    let build_seconds = f.gamma.stats.tti_seconds + f.acorn1.stats.tti_seconds + f.hnsw.stats.tti_seconds + f.oracle_tti;
    let runtime = t.elapsed().as_secs_f64() + build_seconds + f.gt_seconds;
    let detail = format!(
        "dist comps at recall 0.8: oracle {} < gamma {} < acorn-1 {} < postfilter {}; runtime {runtime:.0}s",
        fmt_dc(dc[0]),
        fmt_dc(dc[1]),
        fmt_dc(dc[2]),
        fmt_dc(dc[3])
    );
    let [Some(o), Some(g), Some(a), Some(p)] = [dc[0], dc[1], dc[2], dc[3]] else {
        return (false, detail);
    };
    let ok = o < g && g < a && a < p && g / o <= 2.0 && p / g >= 2.0 && runtime < 1200.0;
    (ok, format!("{detail}; gamma/oracle {:.2}, postfilter/gamma {:.2}", g / o, p / g))
}

/// Smallest grid efs at which the method reaches `target`, sweeping upward.
fn efs_reaching(method: &dyn SearchMethod, w: &Workload, target: f64) -> Option<(usize, f64)> {
    for &efs in EFS_GRID.iter().chain([560].iter()).filter(|&&e| e <= 800) {
        let r = run_sweep(method, w, &[efs])[0].recall;
        if r >= target {
            return Some((efs, r));
        }
    }
    None
}

fn c2_recall_attainable(f: &Fixture) -> Outcome {
    let t = Instant::now();
    let gamma = GraphMethod::new("acorn-gamma", &f.gamma.index, &f.ds);
    let prefilter = PrefilterMethod { ds: &f.ds };
    let mut workloads: Vec<(String, &Workload)> = vec![("LCPS-12".into(), &f.lcps)];
    for (p, w) in &f.selectivity {
        if *p >= 25.0 {
            workloads.push((format!("sel-{p}p"), w));
        }
    }
    for (mode, w) in &f.correlation {
        workloads.push((format!("corr-{}", mode.name()), w));
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, w) in workloads {
        let reached = efs_reaching(&gamma, w, 0.9);
        let exact = run_sweep(&prefilter, w, &[K])[0].recall;
        ok &= reached.is_some() && exact == 1.0;
        parts.push(match reached {
            Some((efs, r)) => format!("{name} {r:.3}@{efs}"),
            None => format!("{name} below 0.9 at 800"),
        });
        if exact != 1.0 {
            parts.push(format!("{name} prefilter recall {exact}"));
        }
    }
    let runtime = t.elapsed().as_secs_f64();
    ok &= runtime < 45.0 * 60.0;
    (ok, format!("{}; prefilter 1.0 everywhere; {runtime:.0}s", parts.join(", ")))
}

fn c3_correlation(f: &Fixture) -> Outcome {
    let post_for = |w: &Workload| PostfilterMethod::exact(&f.hnsw.index, &f.ds, &w.queries).unwrap();
    let gamma = GraphMethod::new("acorn-gamma", &f.gamma.index, &f.ds);
    let mut by_mode = HashMap::new();
    for (mode, w) in &f.correlation {
        if *mode == CorrelationMode::None {
            continue;
        }
        let g = run_sweep(&gamma, w, &EFS_GRID);
        let p = run_sweep(&post_for(w), w, &EFS_GRID);
        by_mode.insert(*mode, (g, p));
    }
    let (g_neg, p_neg) = &by_mode[&CorrelationMode::Neg];
    let (g_pos, p_pos) = &by_mode[&CorrelationMode::Pos];
    let (gb, pb) = (best_recall(g_neg), best_recall(p_neg));
    let (gd, pd) = (dist_comps_at_recall(g_pos, 0.9), dist_comps_at_recall(p_pos, 0.9));
    let pos_ok = match (gd, pd) {
        (Some(g), Some(p)) => g <= p,
        (Some(_), None) => true,
        _ => false,
    };
    let ok = gb - pb >= 0.15 && pos_ok;
    let detail = format!(
        "NEG best recall gamma {gb:.3} vs postfilter {pb:.3}; POS dist comps at 0.9 gamma {} vs postfilter {}; POS best postfilter {:.3}",
        fmt_dc(gd),
        fmt_dc(pd),
        best_recall(p_pos)
    );
    (ok, detail)
}

fn c4_routing(f: &Fixture) -> Outcome {
    let router = CostRouter::new(GAMMA, SelectivitySource::Exact).unwrap();
    let method = GraphMethod::new("acorn-gamma", &f.gamma.index, &f.ds).with_router(router);
    let (_, low) = f.selectivity.iter().find(|(p, _)| *p == 1.0).unwrap();
    let (_, mid) = f.selectivity.iter().find(|(p, _)| *p == 50.0).unwrap();
    let low_rows = run_sweep(&method, low, &[40]);
    let mid_rows = run_sweep(&method, mid, &[40]);
    let routes_low = low
        .queries
        .iter()
        .filter(|q| router.route(&q.predicate, &f.ds).unwrap().route == Route::Prefilter)
        .count();
    let routes_mid = mid
        .queries
        .iter()
        .filter(|q| router.route(&q.predicate, &f.ds).unwrap().route == Route::GraphSearch)
        .count();
    let mean_s = |w: &Workload| {
        w.queries.iter().map(|q| exact_selectivity(&q.predicate, &f.ds).unwrap().value).sum::<f64>() / w.queries.len() as f64
    };
    let ok = routes_low == low.queries.len()
        && low_rows[0].prefiltered_fraction == 1.0
        && low_rows[0].recall == 1.0
        && routes_mid == mid.queries.len()
        && mid_rows[0].prefiltered_fraction == 0.0;
    let detail = format!(
        "1p (mean s {:.4}): {routes_low}/{} prefiltered, recall {:.3}; 50p (mean s {:.4}): {routes_mid}/{} graph search",
        mean_s(low),
        low.queries.len(),
        low_rows[0].recall,
        mean_s(mid),
        mid.queries.len()
    );
    (ok, detail)
}

fn c5_construction_cost(f: &Fixture) -> Outcome {
    let measure = |b: &Built| measure_index(&b.index, &f.ds, b.stats.tti_seconds, 0, 0).unwrap();
    let (g, a, h) = (measure(&f.gamma), measure(&f.acorn1), measure(&f.hnsw));
    let tti = g.tti_seconds / a.tti_seconds;
    let size = g.index_plus_vectors_bytes as f64 / h.index_plus_vectors_bytes as f64;
    let graph_only = g.index_bytes as f64 / h.index_bytes as f64;
    let ok = tti >= 5.0 && size <= 1.5 && a.index_plus_vectors_bytes <= g.index_plus_vectors_bytes;
    let detail = format!(
        "TTI gamma {:.1}s / acorn-1 {:.1}s = {tti:.1}; size with vectors gamma/hnsw {size:.2} (graph only {graph_only:.2}); acorn-1 {} <= gamma {} bytes",
        g.tti_seconds, a.tti_seconds, a.index_plus_vectors_bytes, g.index_plus_vectors_bytes
    );
    (ok, detail)
}

fn c6_recoverability(f: &Fixture) -> Outcome {
    let t = Instant::now();
    let log = f.prune_log.as_ref().expect("prune log");
    let report = audit_recoverability(&f.gamma.index, log);
    let audit = t.elapsed().as_secs_f64();
    let total = audit + f.gamma.stats.tti_seconds;
    let ok = report.checked > 0 && report.unreachable.is_empty() && total < 600.0;
    let detail = format!(
        "{} pruned candidates checked at n = {}, {} direct, {} unreachable; {} restored by repair; build + audit {total:.0}s",
        report.checked,
        f.n,
        report.direct,
        report.unreachable.len(),
        f.gamma.stats.edges_restored
    );
    (ok, detail)
}

fn c7_pruning(n: usize) -> Outcome {
    let spec = MixtureSpec::new(n, D, SEED);
    let (ds, qs) = gen_lcps_from(&spec, 12, 200, SEED).unwrap();
    let w = Workload::new(&ds, qs);
    let gamma = |m_beta| BuildParams::acorn_gamma(M, GAMMA, m_beta, EFC, 1);
    let variants = [
        ("m_beta 32", gamma(32)),
        ("m_beta 64", gamma(64)),
        ("m_beta 128", gamma(128)),
        ("no pruning", gamma(M * GAMMA).with_prune(PruneStrategy::None)),
        ("rng metadata-aware", gamma(M_BETA).with_prune(PruneStrategy::RngMetadataAware { label_attr: LABEL })),
        ("hnsw metadata-blind", gamma(M_BETA).with_prune(PruneStrategy::HnswMetadataBlind)),
    ];
    let built: Vec<(&str, Built)> = variants.iter().map(|(name, p)| (*name, build_full(&ds, p, false).0)).collect();
    let pruned: Vec<usize> = built[..4].iter().map(|(_, b)| b.stats.edges_pruned).collect();
    let monotone = pruned.windows(2).all(|x| x[0] >= x[1]);

    let rows: Vec<Vec<SweepRow>> = built[1..]
        .iter()
        .map(|(name, b)| run_sweep(&GraphMethod::new(*name, &b.index, &ds), &w, &EFS_GRID))
        .collect();
    // the budget is where the ACORN m_beta curve reaches recall 0.9
    let Some(budget) = dist_comps_at_recall(&rows[0], 0.9) else {
        return (false, format!("m_beta 64 never reaches recall 0.9; edges pruned {pruned:?}"));
    };
    let at: Vec<f64> = rows.iter().map(|r| recall_at_dist_comps(r, budget).unwrap_or(0.0)).collect();
    let (acorn, none, rng, blind) = (at[0], at[2], at[3], at[4]);
    let ok = monotone && (acorn - none).abs() <= 0.02 && (acorn - rng).abs() <= 0.02 && acorn - blind >= 0.05;
    let detail = format!(
        "n = {n}; edges pruned for m_beta 32/64/128/none {pruned:?}; recall at {budget:.0} dist comps: m_beta 64 {acorn:.3}, no pruning {none:.3}, rng-aware {rng:.3}, metadata-blind {blind:.3}"
    );
    (ok, detail)
}

fn label_filters(ds: &Dataset) -> Vec<(Predicate, BoundPredicate<'_>, f64)> {
    (1..=12)
        .map(|y| {
            let p = Predicate::equals(LABEL, y);
            let s = exact_selectivity(&p, ds).unwrap().value;
            let b = p.bind(ds).unwrap();
            (p, b, s)
        })
        .collect()
}

fn c8_degree_concentration(f: &Fixture) -> Outcome {
    let (gamma1, _) = build_full(&f.ds, &BuildParams::acorn_gamma(M, 1, M, EFC, 1), false);
    let filters = label_filters(&f.ds);
    let mut mean12 = 0.0;
    let mut zero12 = 0.0;
    let mut zero1 = 0.0;
    let mut full = 0;
    for (_, b, s) in &filters {
        let a12 = degree_concentration_audit(&f.gamma.index, b, *s);
        let a1 = degree_concentration_audit(&gamma1.index, b, *s);
        mean12 += a12.mean_filtered_degree / filters.len() as f64;
        zero12 += a12.zero_degree_fraction / filters.len() as f64;
        zero1 += a1.zero_degree_fraction / filters.len() as f64;
        full += a12.full_lists;
    }
    let ok = (mean12 - M as f64).abs() <= 0.15 * M as f64 && zero12 < zero1 && full > 0;
    let detail = format!(
        "mean filtered degree on {full} full uncompressed lists {mean12:.2} (M = {M}); zero-degree fraction gamma 12 {zero12:.4} < gamma 1 {zero1:.4}"
    );
    (ok, detail)
}

fn c9_level_law(f: &Fixture) -> Outcome {
    let levels = f.gamma.index.node_levels();
    let n = levels.len() as f64;
    let m_l = f.gamma.index.params().m_l();
    let mut ok = true;
    let mut parts = Vec::new();
    for k in 1..=3u8 {
        let p = (-(k as f64) / m_l).exp();
        let emp = levels.iter().filter(|&&l| l >= k).count() as f64 / n;
        let sd = (p * (1.0 - p) / n).sqrt();
        let z = (emp - p) / sd;
        ok &= z.abs() <= 3.0;
        parts.push(format!("P(level >= {k}) {emp:.5} vs {p:.5} (z {z:+.2})"));
    }
    (ok, parts.join(", "))
}

fn c10_oracles() -> Outcome {
    // pre-filter vs an independent evaluator and f64 scan
    let ds = mixed_dataset(1500, 8, 1);
    let tuples: Vec<_> = (0..ds.len()).map(|i| ds.tuple(i)).collect();
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let mut regexes = HashMap::new();
    let mut scan_bad = 0;
    for _ in 0..10_000 {
        let x: Vec<f32> = (0..8).map(|_| r.gen_range(-1.0..1.0)).collect();
        let p = random_predicate(&mut r, 1);
        let k = r.gen_range(1..20);
        let mut expected: Vec<(f64, u32)> = tuples
            .iter()
            .enumerate()
            .filter(|(_, t)| passes(&p, t, &mut regexes))
            .map(|(i, _)| (squared_l2(&x, ds.vector(i as u32)), i as u32))
            .collect();
        expected.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        expected.truncate(k);
        let got = prefilter_search(&ds, &HybridQuery::new(x, p, k), &mut SearchCounters::default()).unwrap();
        let same = got.len() == expected.len()
            && got.iter().zip(&expected).all(|(g, e)| g.id == e.1 || (g.dist as f64 - e.0).abs() < 1e-5);
        scan_bad += !same as usize;
    }

    // always-true filter-only search vs textbook HNSW search
    let mix = Mixture::generate(&MixtureSpec::new(4000, 24, 5), 1000).unwrap();
    let hds = mix.dataset();
    let index = build(&hds, &BuildParams::hnsw(8, 40, 5)).unwrap();
    let mut hnsw_bad = 0;
    for x in &mix.queries {
        let efs = r.gen_range(10..80);
        let k = r.gen_range(1..=10);
        let got = filtered_search(&index, &hds, x, &AcceptAll, k, efs, Strategy::FilterOnly, &mut SearchCounters::default())
            .unwrap();
        let ids: Vec<u32> = got.iter().map(|n| n.id).collect();
        hnsw_bad += (ids != reference_search(&index, &hds, x, k, efs)) as usize;
    }

    // SCC analyzer vs naive reachability
    let mut scc_bad = 0;
    let graphs = 300;
    for _ in 0..graphs {
        let n = r.gen_range(1..=500);
        let deg: f64 = r.gen_range(0.0..4.0);
        let edges: Vec<Vec<usize>> = (0..n)
            .map(|_| (0..r.gen_range(0..=(2.0 * deg) as usize)).map(|_| r.gen_range(0..n)).collect())
            .collect();
        scc_bad += (acorn_core::eval::scc_count(&edges) != naive_scc_count(&edges)) as usize;
    }
    let ok = scan_bad == 0 && hnsw_bad == 0 && scc_bad == 0;
    let detail = format!(
        "pre-filter mismatches {scan_bad}/10000, reference HNSW mismatches {hnsw_bad}/1000, SCC mismatches {scc_bad}/{graphs}"
    );
    (ok, detail)
}

fn c11_graph_quality(f: &Fixture) -> Outcome {
    let mut ok = true;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_height = 0i64;
    let mut max_degree: f64 = 0.0;
    for (p, b, _) in label_filters(&f.ds) {
        let Predicate::Equals { value, .. } = p else { unreachable!() };
        let view = predicate_subgraph(&f.gamma.index, &b, Strategy::Compressed2Hop).unwrap();
        let ours = graph_quality(&view);
        let part = f.oracle.partition(value).expect("partition");
        let theirs = graph_quality(&full_view(&part.index));
        for (a, o) in ours.levels.iter().zip(&theirs.levels) {
            let ratio = a.n_scc as f64 / o.n_scc.max(1) as f64;
            worst_ratio = worst_ratio.max(ratio);
            ok &= a.n_scc <= 2 * o.n_scc.max(1);
        }
        let dh = ours.graph_height.unwrap() as i64 - theirs.graph_height.unwrap() as i64;
        worst_height = if dh.abs() > worst_height.abs() { dh } else { worst_height };
        ok &= dh.abs() <= 1;
        for l in &ours.levels {
            max_degree = max_degree.max(l.mean_out_degree);
            ok &= l.mean_out_degree <= M as f64;
        }
    }
    let detail = format!(
        "12 labels: worst per-level SCC ratio to the oracle partition {worst_ratio:.2}, worst height difference {worst_height:+}, largest mean filtered out-degree {max_degree:.2} (M = {M})"
    );
    (ok, detail)
}

fn round_trip(g: &GraphIndex) -> bool {
    let bytes = save_index(g).unwrap();
    let loaded = load_index(&bytes).unwrap();
    loaded == *g && save_index(&loaded).unwrap() == bytes
}

fn corruption_suite(g: &GraphIndex) -> Vec<&'static str> {
    let bytes = save_index(g).unwrap();
    let reseal = |mut p: Vec<u8>| {
        let crc = crc32fast::hash(&p);
        p.extend_from_slice(&crc.to_le_bytes());
        p
    };
    let mut failures = Vec::new();
    let mut b = bytes.clone();
    b[bytes.len() / 2] ^= 0x10;
    if !matches!(load_index(&b), Err(Error::BadChecksum { .. })) {
        failures.push("bit flip");
    }
    let mut b = bytes.clone();
    b[0] ^= 0xff;
    if !matches!(load_index(&b), Err(Error::BadMagic)) {
        failures.push("magic");
    }
    let mut b = bytes.clone();
    b[4] = b[4].wrapping_add(1);
    if !matches!(load_index(&b), Err(Error::BadVersion(_))) {
        failures.push("version");
    }
    if !matches!(load_index(&bytes[..bytes.len() / 3]), Err(Error::Truncated | Error::BadChecksum { .. })) {
        failures.push("truncation");
    }
    let n = g.len();
    let first_neighbor = 68 + 4 + 4 * n + 8 * (n + 1);
    let mut p = bytes[..bytes.len() - 4].to_vec();
    p[first_neighbor..first_neighbor + 4].copy_from_slice(&(n as u32).to_le_bytes());
    if !matches!(load_index(&reseal(p)), Err(Error::InvariantViolation(ref s)) if s == "dangling edge") {
        failures.push("dangling edge");
    }
    failures
}

fn c12_determinism(f: &Fixture) -> Outcome {
    let run = || {
        let (ds, qs) = gen_lcps(10_000, 32, 12, 50, 7).unwrap();
        let g = build(&ds, &BuildParams::acorn_gamma(16, 8, 32, 40, 7)).unwrap();
        let ids: Vec<Vec<u32>> = qs
            .iter()
            .map(|q| hybrid_search(&g, &ds, q, &SearchParams::for_index(&g, q.k, 40), None).unwrap().ids)
            .collect();
        (save_index(&g).unwrap(), ids)
    };
    let deterministic = run() == run();

    let mut sizes_ok = true;
    for n in [1usize, 10, 1000] {
        let mix = Mixture::generate(&MixtureSpec::new(n, 16, 3), 0).unwrap();
        let ds = mix.dataset();
        for p in [BuildParams::hnsw(8, 20, 3), BuildParams::acorn1(8, 20, 3), BuildParams::acorn_gamma(8, 4, 12, 20, 3)] {
            sizes_ok &= round_trip(&build(&ds, &p).unwrap());
        }
    }
    for b in [&f.gamma, &f.acorn1, &f.hnsw] {
        sizes_ok &= round_trip(&b.index);
    }
    let corruption = corruption_suite(&f.gamma.index);
    let ok = deterministic && sizes_ok && corruption.is_empty();
    let detail = format!(
        "repeat gen/build/search identical: {deterministic}; byte-identical round trips at n in {{1, 10, 1000, {}}}: {sizes_ok}; corruption cases misreported: {corruption:?}",
        f.n
    );
    (ok, detail)
}

fn main() -> ExitCode {
    let n: usize = std::env::var("ACORN_ACCEPT_N").ok().and_then(|v| v.parse().ok()).unwrap_or(100_000);
    let started = Instant::now();
    let f = fixture(n);
    let prune_n = PRUNE_N.min(n);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("ordering of dist comps at recall 0.8", Box::new(|| c1_table_ordering(&f))),
        ("recall 0.9 attainable on every workload", Box::new(|| c2_recall_attainable(&f))),
        ("correlation robustness", Box::new(|| c3_correlation(&f))),
        ("selectivity routing", Box::new(|| c4_routing(&f))),
        ("construction cost shape", Box::new(|| c5_construction_cost(&f))),
        ("pruning recoverability", Box::new(|| c6_recoverability(&f))),
        ("pruning comparison", Box::new(move || c7_pruning(prune_n))),
        ("degree concentration", Box::new(|| c8_degree_concentration(&f))),
        ("level distribution", Box::new(|| c9_level_law(&f))),
        ("oracle equivalences", Box::new(c10_oracles)),
        ("predicate subgraph quality", Box::new(|| c11_graph_quality(&f))),
        ("determinism and persistence", Box::new(|| c12_determinism(&f))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(outcome) => outcome,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        failed += !ok as usize;
        println!(
            "{} {:>2} {name}: {detail} [{:.0}s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed at n = {n} in {:.0}s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    let strict = std::env::var("ACORN_ACCEPT_STRICT").is_ok_and(|v| v == "1");
    if failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
