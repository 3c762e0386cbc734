use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use acorn_core::baselines::{oracle_build, OraclePartitionSet};
use acorn_core::dataset::{read_fvecs, write_fvecs};
use acorn_core::eval::{full_view, measure_index, GraphMethod, MethodResult, OracleMethod, PostfilterMethod, PrefilterMethod};
use acorn_core::persist::{read_ground_truth, read_workload, write_ground_truth, WorkloadRecord};
use acorn_core::predicate::exact_selectivity;
use acorn_core::workload::{
    correlation_keywords, correlation_queries, gen_selectivity_sweep, lcps_labels, lcps_queries, uniform_dates, Mixture,
    SelectivityTargets,
};
use acorn_core::{
    build_with, ground_truth, graph_quality, hybrid_search, predicate_subgraph, read_index,
    save_index, sweep, write_index, BuildOptions, CostRouter, Dataset, GraphIndex,
    GraphQualityReport, GroundTruth, HybridQuery, Predicate, SearchMethod, SearchParams, SelectivitySource, Strategy,
    SweepConfig,
};
use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use crate::config::*;
use crate::manifest::Run;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Workload lines referring to a query-vector file by position.
fn write_indexed_workload(path: &Path, queries: &[(usize, HybridQuery)]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for (i, q) in queries {
        let rec = WorkloadRecord {
            vector: None,
            vector_index: Some(*i),
            predicate: q.predicate.clone(),
            k: q.k,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush().with_context(|| format!("writing {}", path.display()))
}

pub fn gen(args: &GenArgs, file: &ConfigFile) -> Result<()> {
    let s = GenSettings::resolve(args, file)?;
    create_dir(&args.out)?;
    let mut run = Run::start("gen", &s, vec![s.seed])?;
    let spec = s.mixture();
    let mix = Mixture::generate(&spec, s.queries)?;
    let mut ds = mix.dataset();
    let indexed = |qs: Vec<HybridQuery>| -> Vec<(usize, HybridQuery)> { qs.into_iter().enumerate().collect() };
    let mut parts: Vec<(f64, Vec<(usize, HybridQuery)>)> = Vec::new();
    let queries = match s.workload {
        WorkloadArg::Lcps => {
            ds.push_int_column(lcps_labels(s.n, s.cardinality, s.seed)?)?;
            indexed(lcps_queries(&mix.queries, 0, s.cardinality, s.k, s.seed))
        }
        WorkloadArg::Correlation => {
            ds.push_keyword_column(correlation_keywords(&mix.base_cluster, s.clusters, s.mode.into(), s.seed))?;
            indexed(correlation_queries(&mix.queries, &mix.query_cluster, s.clusters, 0, s.mode.into(), s.k, s.seed)?)
        }
        WorkloadArg::Selectivity => {
            ds.push_date_column(uniform_dates(s.n, s.seed))?;
            let targets = SelectivityTargets::default();
            let sweep = gen_selectivity_sweep(&ds, 0, &s.percentiles, &targets, &mix.queries, s.queries, s.seed)?;
            let mut all = Vec::new();
            for (pct, qs) in sweep {
                let part: Vec<(usize, HybridQuery)> = qs
                    .into_iter()
                    .enumerate()
                    .map(|(i, mut q)| {
                        q.k = s.k;
                        (i % mix.queries.len(), q)
                    })
                    .collect();
                all.extend(part.iter().cloned());
                parts.push((pct, part));
            }
            all
        }
    };

    let base = args.out.join("base.fvecs");
    let attrs = args.out.join("attrs.jsonl");
    ds.save(&base, &attrs)?;
    let qv = args.out.join("queries.fvecs");
    let flat: Vec<f32> = mix.queries.concat();
    write_fvecs(&qv, s.d, &flat)?;
    let workload = args.out.join("workload.jsonl");
    write_indexed_workload(&workload, &queries)?;
    for path in [&base, &attrs, &qv, &workload] {
        run.output(path);
    }
    for (pct, part) in &parts {
        let path = args.out.join(format!("workload_p{pct}.jsonl"));
        write_indexed_workload(&path, part)?;
        run.output(&path);
    }
    if s.ground_truth {
        let qs: Vec<HybridQuery> = queries.into_iter().map(|(_, q)| q).collect();
        let gt = ground_truth(&ds, &qs, s.k)?;
        let path = args.out.join("gt.bin");
        write_ground_truth(&path, &gt)?;
        run.output(&path);
    }
    run.finish(&args.out)
}

fn load_dataset(dir: &Path) -> Result<(Dataset, Vec<PathBuf>)> {
    let base = dir.join("base.fvecs");
    let attrs = dir.join("attrs.jsonl");
    if attrs.is_file() {
        let ds = Dataset::load(&base, Some(&attrs)).with_context(|| format!("loading dataset {}", dir.display()))?;
        Ok((ds, vec![base, attrs]))
    } else {
        let ds = Dataset::load(&base, None).with_context(|| format!("loading dataset {}", dir.display()))?;
        Ok((ds, vec![base]))
    }
}

struct Inputs {
    ds: Dataset,
    queries: Vec<HybridQuery>,
    paths: Vec<PathBuf>,
}

fn load_inputs(input: &InputArgs, k: Option<usize>) -> Result<Inputs> {
    input.check()?;
    let (ds, mut paths) = load_dataset(&input.dataset)?;
    let workload = input.workload_path();
    let pool = match input.queries_path() {
        Some(p) => {
            let (dim, data) = read_fvecs(&p).with_context(|| format!("loading queries {}", p.display()))?;
            paths.push(p);
            Some((dim, data))
        }
        None => None,
    };
    let mut queries = read_workload(&workload, pool.as_ref().map(|(dim, data)| (data.as_slice(), *dim)))?;
    paths.push(workload.clone());
    for (i, q) in queries.iter_mut().enumerate() {
        if q.vector.len() != ds.dim() {
            bail!("{}: query {i} has dimension {}, dataset has {}", workload.display(), q.vector.len(), ds.dim());
        }
        q.predicate.bind(&ds).with_context(|| format!("{}: query {i}", workload.display()))?;
        if let Some(k) = k {
            q.k = k;
        }
    }
    Ok(Inputs { ds, queries, paths })
}

fn load_index(path: &Path, ds: &Dataset) -> Result<GraphIndex> {
    let index = read_index(path).with_context(|| format!("loading index {}", path.display()))?;
    ensure!(
        index.len() == ds.len() && index.dim() == ds.dim(),
        "index {} holds {} vectors of dimension {}, dataset has {} of dimension {}",
        path.display(),
        index.len(),
        index.dim(),
        ds.len(),
        ds.dim()
    );
    Ok(index)
}

#[derive(Debug, Serialize)]
struct BuildStat {
    method: String,
    #[serde(flatten)]
    stats: serde_json::Value,
}

pub fn build(args: &BuildArgs, file: &ConfigFile) -> Result<()> {
    let s = BuildSettings::resolve(args, file)?;
    let params = s.params.params(s.variant)?;
    if !args.dataset.join("base.fvecs").is_file() {
        bail!("dataset: {} not found", args.dataset.join("base.fvecs").display());
    }
    let dir = parent_dir(&args.out);
    create_dir(&dir)?;
    let mut run = Run::start("build", &s, vec![params.seed])?;
    let (ds, inputs) = load_dataset(&args.dataset)?;
    inputs.iter().for_each(|p| run.input(p));
    let out = build_with(&ds, &params, BuildOptions::default())?;
    write_index(&args.out, &out.index)?;
    let stats = measure_index(&out.index, &ds, out.stats.tti_seconds, out.stats.edges_pruned, out.stats.edges_restored)?;
    let stats_path = args.out.with_extension("build.json");
    write_json(&stats_path, &stats)?;
    run.output(&args.out);
    run.output(&stats_path);
    run.finish(&dir)
}

#[derive(Debug, Serialize)]
struct ResultRow {
    query_id: usize,
    rank: usize,
    result_id: u32,
    distance: f32,
    dist_comps: u64,
    pred_evals: u64,
    latency_us: u128,
    prefiltered_flag: u8,
    efs: Option<usize>,
}

pub fn search(args: &SearchArgs, file: &ConfigFile) -> Result<()> {
    let s = SearchSettings::resolve(args, file)?;
    if !args.index.is_file() {
        bail!("index: {} not found", args.index.display());
    }
    args.input.check()?;
    let dir = parent_dir(&args.out);
    create_dir(&dir)?;
    let mut run = Run::start("search", &s, Vec::new())?;
    let inputs = load_inputs(&args.input, s.k)?;
    let index = load_index(&args.index, &inputs.ds)?;
    run.input(&args.index);
    inputs.paths.iter().for_each(|p| run.input(p));
    let strategy = match &s.strategy {
        Some(name) => name.parse::<Strategy>()?,
        None => Strategy::default_for(index.variant()),
    };
    strategy.check(index.variant())?;
    let router = s.router_gamma.map(|g| CostRouter::new(g, SelectivitySource::Exact)).transpose()?;

    let mut rows = Vec::new();
    for &efs in &s.efs {
        for (qi, q) in inputs.queries.iter().enumerate() {
            let params = SearchParams::new(q.k, efs.max(q.k), strategy);
            let rep = hybrid_search(&index, &inputs.ds, q, &params, router.as_ref())?;
            for (rank, (&id, &distance)) in rep.ids.iter().zip(&rep.distances).enumerate() {
                rows.push(ResultRow {
                    query_id: qi,
                    rank,
                    result_id: id,
                    distance,
                    dist_comps: rep.counters.distance_computations,
                    pred_evals: rep.counters.predicate_evaluations,
                    latency_us: rep.latency.as_micros(),
                    prefiltered_flag: rep.prefiltered() as u8,
                    efs: Some(params.efs),
                });
            }
        }
    }
    write_csv(&args.out, &rows)?;
    run.output(&args.out);
    run.finish(&dir)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

/// The equality labels an oracle partitioning needs for `queries`.
fn oracle_labels(queries: &[HybridQuery]) -> Result<Vec<Predicate>> {
    let mut labels = BTreeMap::new();
    for (i, q) in queries.iter().enumerate() {
        match q.predicate {
            Predicate::Equals { attr, value } => {
                labels.insert((attr, value), q.predicate.clone());
            }
            _ => bail!("oracle: query {i} is not an equality predicate"),
        }
    }
    let attrs: Vec<usize> = labels.keys().map(|(a, _)| *a).collect();
    if attrs.windows(2).any(|w| w[0] != w[1]) {
        bail!("oracle: queries test more than one attribute");
    }
    Ok(labels.into_values().collect())
}

fn run_method(method: &dyn SearchMethod, ds: &Dataset, queries: &[HybridQuery], efs: Option<usize>) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        let t = Instant::now();
        let MethodResult { ids, counters, prefiltered } = method.search(qi, q, efs.unwrap_or(q.k).max(q.k))?;
        let latency_us = t.elapsed().as_micros();
        for (rank, &id) in ids.iter().enumerate() {
            rows.push(ResultRow {
                query_id: qi,
                rank,
                result_id: id,
                distance: ds.metric().report(ds.score_to(&q.vector, id)),
                dist_comps: counters.distance_computations,
                pred_evals: counters.predicate_evaluations,
                latency_us,
                prefiltered_flag: prefiltered as u8,
                efs: efs.map(|e| e.max(q.k)),
            });
        }
    }
    Ok(rows)
}

pub fn baseline(args: &BaselineArgs, file: &ConfigFile) -> Result<()> {
    let s = BaselineSettings::resolve(args, file)?;
    let hnsw_params = s.params.params(VariantArg::Hnsw)?;
    if let Some(p) = &args.index {
        if !p.is_file() {
            bail!("index: {} not found", p.display());
        }
    }
    args.input.check()?;
    let dir = parent_dir(&args.out);
    create_dir(&dir)?;
    let mut run = Run::start("baseline", &s, vec![hnsw_params.seed])?;
    let inputs = load_inputs(&args.input, s.k)?;
    inputs.paths.iter().for_each(|p| run.input(p));
    let (ds, qs) = (&inputs.ds, &inputs.queries);

    let rows = match s.method {
        BaselineMethod::Prefilter => run_method(&PrefilterMethod { ds }, ds, qs, None)?,
        BaselineMethod::Postfilter => {
            let index = match &args.index {
                Some(p) => {
                    run.input(p);
                    load_index(p, ds)?
                }
                None => acorn_core::build(ds, &hnsw_params)?,
            };
            let method = PostfilterMethod::exact(&index, ds, qs)?;
            let mut rows = Vec::new();
            for &efs in &s.efs {
                rows.extend(run_method(&method, ds, qs, Some(efs))?);
            }
            rows
        }
        BaselineMethod::Oracle => {
            let ops = oracle_build(ds, &oracle_labels(qs)?, &hnsw_params)?;
            let method = OracleMethod { ops: &ops };
            let mut rows = Vec::new();
            for &efs in &s.efs {
                rows.extend(run_method(&method, ds, qs, Some(efs))?);
            }
            rows
        }
    };
    write_csv(&args.out, &rows)?;
    run.output(&args.out);
    run.finish(&dir)
}

#[derive(Debug, Serialize)]
struct SweepCsvRow<'a> {
    method: &'a str,
    efs: usize,
    #[serde(rename = "recall_at_K")]
    recall: f64,
    qps: f64,
    mean_dist_comps: f64,
    mean_pred_evals: f64,
    prefiltered_fraction: f64,
    threads: usize,
}

#[derive(Debug, Serialize)]
struct QualityEntry {
    method: String,
    predicate: Predicate,
    selectivity: f64,
    report: GraphQualityReport,
}

fn oracle_stats(ops: &OraclePartitionSet, ds: &Dataset, tti_seconds: f64) -> Result<serde_json::Value> {
    let mut index_bytes = 0usize;
    let mut partitions = 0usize;
    for label in ops.labels() {
        if let Some(part) = ops.partition(label) {
            index_bytes += save_index(&part.index)?.len();
            partitions += 1;
        }
    }
    Ok(serde_json::json!({
        "params": ops.params,
        "tti_seconds": tti_seconds,
        "partitions": partitions,
        "index_bytes": index_bytes,
        "index_plus_vectors_bytes": index_bytes + ds.len() * ds.dim() * 4,
    }))
}

pub fn bench(args: &BenchArgs, file: &ConfigFile, thread_cap: Option<usize>) -> Result<()> {
    let s = BenchSettings::resolve(args, file)?;
    if let Some(p) = &args.gt {
        if !p.is_file() {
            bail!("gt: {} not found", p.display());
        }
    }
    args.input.check()?;
    create_dir(&args.out)?;
    let p = &s.params;
    let mut run = Run::start("bench", &s, vec![p.seed])?;
    let inputs = load_inputs(&args.input, Some(s.k))?;
    inputs.paths.iter().for_each(|p| run.input(p));
    let (ds, qs) = (&inputs.ds, &inputs.queries);
    if s.methods.contains(&MethodArg::Oracle) {
        // fail before any build if the workload cannot be partitioned
        oracle_labels(qs)?;
    }

    let gt = load_or_compute_gt(args, &mut run, ds, qs, s.k)?;
    let threads = thread_cap.map_or(s.threads, |cap| s.threads.min(cap));
    let config = SweepConfig { k: s.k, efs: s.efs.clone(), repeats: s.repeats, threads };

    let mut build_stats = Vec::new();
    let mut quality = Vec::new();
    let mut rows = Vec::new();
    let distinct = distinct_predicates(qs, s.quality_predicates);
    for &m in &s.methods {
        let method_rows = match m {
            MethodArg::Prefilter => sweep(&PrefilterMethod { ds }, qs, &gt, &config)?,
            MethodArg::Postfilter => {
                let index = build_measured(ds, &p.params(VariantArg::Hnsw)?, "hnsw", &mut build_stats)?;
                sweep(&PostfilterMethod::exact(&index, ds, qs)?, qs, &gt, &config)?
            }
            MethodArg::AcornGamma | MethodArg::Acorn1 => {
                let variant = if m == MethodArg::AcornGamma { VariantArg::AcornGamma } else { VariantArg::Acorn1 };
                let index = build_measured(ds, &p.params(variant)?, m.name(), &mut build_stats)?;
                for pred in &distinct {
                    let bound = pred.bind(ds)?;
                    quality.push(QualityEntry {
                        method: m.name().into(),
                        predicate: pred.clone(),
                        selectivity: exact_selectivity(pred, ds)?.value,
                        report: graph_quality(&predicate_subgraph(&index, &bound, Strategy::default_for(index.params().variant))?),
                    });
                }
                sweep(&GraphMethod::new(m.name(), &index, ds), qs, &gt, &config)?
            }
            MethodArg::Oracle => {
                let t = Instant::now();
                let ops = oracle_build(ds, &oracle_labels(qs)?, &p.params(VariantArg::Hnsw)?)?;
                let tti = t.elapsed().as_secs_f64();
                build_stats.push(BuildStat { method: "oracle".into(), stats: oracle_stats(&ops, ds, tti)? });
                for pred in &distinct {
                    if let Predicate::Equals { value, .. } = pred {
                        if let Some(part) = ops.partition(*value) {
                            quality.push(QualityEntry {
                                method: "oracle".into(),
                                predicate: pred.clone(),
                                selectivity: exact_selectivity(pred, ds)?.value,
                                report: graph_quality(&full_view(&part.index)),
                            });
                        }
                    }
                }
                sweep(&OracleMethod { ops: &ops }, qs, &gt, &config)?
            }
        };
        rows.extend(method_rows);
    }

    let sweep_path = args.out.join("sweep.csv");
    let csv_rows: Vec<SweepCsvRow> = rows
        .iter()
        .map(|r| SweepCsvRow {
            method: &r.method,
            efs: r.efs,
            recall: r.recall,
            qps: r.qps,
            mean_dist_comps: r.mean_dist_comps,
            mean_pred_evals: r.mean_pred_evals,
            prefiltered_fraction: r.prefiltered_fraction,
            threads: r.threads,
        })
        .collect();
    write_csv(&sweep_path, &csv_rows)?;
    let stats_path = args.out.join("build_stats.json");
    write_json(&stats_path, &build_stats)?;
    let quality_path = args.out.join("graph_quality.json");
    write_json(&quality_path, &quality)?;
    for path in [&sweep_path, &stats_path, &quality_path] {
        run.output(path);
    }
    run.finish(&args.out)
}

fn build_measured(ds: &Dataset, params: &acorn_core::BuildParams, name: &str, stats: &mut Vec<BuildStat>) -> Result<GraphIndex> {
    let out = build_with(ds, params, BuildOptions::default())?;
    let m = measure_index(&out.index, ds, out.stats.tti_seconds, out.stats.edges_pruned, out.stats.edges_restored)?;
    stats.push(BuildStat { method: name.into(), stats: serde_json::to_value(m)? });
    Ok(out.index)
}

fn distinct_predicates(qs: &[HybridQuery], limit: usize) -> Vec<Predicate> {
    let mut seen = Vec::new();
    for q in qs {
        if seen.len() == limit {
            break;
        }
        if !seen.contains(&q.predicate) {
            seen.push(q.predicate.clone());
        }
    }
    seen
}

fn load_or_compute_gt(args: &BenchArgs, run: &mut Run, ds: &Dataset, qs: &[HybridQuery], k: usize) -> Result<GroundTruth> {
    if let Some(p) = &args.gt {
        run.input(p);
        return read_ground_truth(p).with_context(|| format!("loading ground truth {}", p.display()));
    }
    let default = args.input.dataset.join("gt.bin");
    if args.input.workload.is_none() && default.is_file() {
        let gt = read_ground_truth(&default).with_context(|| format!("loading ground truth {}", default.display()))?;
        if gt.len() == qs.len() && gt.k >= k {
            run.input(&default);
            return Ok(gt);
        }
    }
    Ok(ground_truth(ds, qs, k)?)
}

#[derive(Debug, Serialize)]
struct LevelRow {
    level: usize,
    nodes: usize,
    edges: usize,
    mean_degree: f64,
    max_degree: usize,
    cap: usize,
}

#[derive(Debug, Serialize)]
struct IndexSummary {
    file_bytes: u64,
    params: acorn_core::BuildParams,
    n: usize,
    dim: usize,
    metric: acorn_core::Metric,
    entry_point: u32,
    max_level: usize,
    levels: Vec<LevelRow>,
}

pub fn inspect(args: &InspectArgs) -> Result<()> {
    let index = read_index(&args.index).with_context(|| format!("loading index {}", args.index.display()))?;
    let file_bytes = fs::metadata(&args.index)?.len();
    let levels = (0..index.num_levels())
        .map(|l| {
            let nodes = index.level_size(l);
            let edges = index.edge_count(l);
            LevelRow {
                level: l,
                nodes,
                edges,
                mean_degree: if nodes == 0 { 0.0 } else { edges as f64 / nodes as f64 },
                max_degree: index.nodes_on_level(l).map(|v| index.neighbors(v, l).map_or(0, |n| n.len())).max().unwrap_or(0),
                cap: index.params().cap(l),
            }
        })
        .collect();
    let summary = IndexSummary {
        file_bytes,
        params: *index.params(),
        n: index.len(),
        dim: index.dim(),
        metric: index.metric(),
        entry_point: index.entry_point(),
        max_level: index.max_level(),
        levels,
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
        return Ok(());
    }
    let p = &summary.params;
    println!("file        {} ({} bytes)", args.index.display(), summary.file_bytes);
    println!("variant     {}", p.variant.name());
    println!("M           {}", p.m);
    println!("gamma       {}", p.gamma);
    println!("m_beta      {}", p.m_beta);
    println!("efc         {}", p.efc);
    println!("seed        {}", p.seed);
    println!("prune       {:?}", p.prune);
    println!("vectors     {} x {} ({:?})", summary.n, summary.dim, summary.metric);
    println!("entry point {} at level {}", summary.entry_point, summary.max_level);
    println!();
    println!("{:>5} {:>9} {:>11} {:>8} {:>6} {:>6}", "level", "nodes", "edges", "mean", "max", "cap");
    for l in &summary.levels {
        println!(
            "{:>5} {:>9} {:>11} {:>8.2} {:>6} {:>6}",
            l.level, l.nodes, l.edges, l.mean_degree, l.max_degree, l.cap
        );
    }
    Ok(())
}
