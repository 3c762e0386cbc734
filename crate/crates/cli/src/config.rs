//! Subcommand settings. Each subcommand resolves its settings as
//! flags > config file > defaults; the resolved settings are what the run
//! manifest records.

use std::fs;
use std::path::{Path, PathBuf};

use acorn_core::workload::{CorrelationMode, MixtureSpec, WorkloadKind, WorkloadSpec};
use acorn_core::{BuildParams, PruneStrategy};
use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Sections of a `--config` file, keyed by subcommand name. A run manifest
/// is accepted too: the last run of each subcommand supplies its section.
#[derive(Debug, Default)]
pub struct ConfigFile {
    root: serde_json::Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let Value::Object(mut root) = value else {
            bail!("config {} must be a JSON object", path.display());
        };
        if let Some(Value::Array(runs)) = root.remove("runs") {
            for run in runs {
                if let (Some(Value::String(cmd)), Some(cfg)) = (run.get("command"), run.get("config")) {
                    root.insert(cmd.clone(), cfg.clone());
                }
            }
        }
        Ok(ConfigFile { root })
    }

    /// The section for `command` over the defaults. Unknown keys are errors.
    pub fn section<T: DeserializeOwned + Default>(&self, command: &str) -> Result<T> {
        match self.root.get(command) {
            None => Ok(T::default()),
            Some(v) => serde_json::from_value(v.clone()).with_context(|| format!("config section {command:?}")),
        }
    }
}

macro_rules! overlay {
    ($settings:expr, $args:expr, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $args.$field.clone() {
            $settings.$field = v;
        })+
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum WorkloadArg {
    Lcps,
    Selectivity,
    Correlation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Pos,
    Neg,
    None,
}

impl From<ModeArg> for CorrelationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Pos => CorrelationMode::Pos,
            ModeArg::Neg => CorrelationMode::Neg,
            ModeArg::None => CorrelationMode::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    Hnsw,
    AcornGamma,
    #[serde(rename = "acorn-1")]
    #[value(name = "acorn-1")]
    Acorn1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PruneArg {
    MBeta,
    None,
    RngAware,
    RngBlind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Prefilter,
    Postfilter,
    Oracle,
    AcornGamma,
    #[serde(rename = "acorn-1")]
    #[value(name = "acorn-1")]
    Acorn1,
}

impl MethodArg {
    pub fn name(self) -> &'static str {
        match self {
            MethodArg::Prefilter => "prefilter",
            MethodArg::Postfilter => "postfilter",
            MethodArg::Oracle => "oracle",
            MethodArg::AcornGamma => "acorn-gamma",
            MethodArg::Acorn1 => "acorn-1",
        }
    }
}

// gen

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub workload: Option<WorkloadArg>,
    /// Label cardinality for the LCPS workload.
    #[arg(long)]
    pub cardinality: Option<usize>,
    /// Comma-separated percentiles for the selectivity workload.
    #[arg(long, value_delimiter = ',')]
    pub percentiles: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub queries: Option<usize>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Write exact ground truth to gt.bin.
    #[arg(long)]
    pub ground_truth: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSettings {
    pub n: usize,
    pub d: usize,
    pub clusters: usize,
    pub latent_dim: usize,
    pub spread: f64,
    pub noise: f64,
    pub seed: u64,
    pub workload: WorkloadArg,
    pub cardinality: usize,
    pub percentiles: Vec<f64>,
    pub mode: ModeArg,
    pub queries: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub ground_truth: bool,
}

impl Default for GenSettings {
    fn default() -> Self {
        let spec = MixtureSpec::new(10_000, 128, 42);
        GenSettings {
            n: spec.n,
            d: spec.d,
            clusters: spec.clusters,
            latent_dim: spec.latent_dim,
            // f32 -> f64 through the shortest decimal form, so 0.05 stays 0.05
            spread: spec.spread.to_string().parse().unwrap_or(2.5),
            noise: spec.noise.to_string().parse().unwrap_or(0.05),
            seed: spec.seed,
            workload: WorkloadArg::Lcps,
            cardinality: 12,
            percentiles: vec![1.0, 25.0, 50.0, 75.0, 99.0],
            mode: ModeArg::Pos,
            queries: 100,
            k: 10,
            ground_truth: true,
        }
    }
}

impl GenSettings {
    pub fn resolve(args: &GenArgs, file: &ConfigFile) -> Result<Self> {
        let mut s: GenSettings = file.section("gen")?;
        overlay!(s, args, n, d, clusters, latent_dim, spread, noise, seed, workload, cardinality, percentiles, mode, queries, k, ground_truth);
        s.validate()?;
        Ok(s)
    }

    pub fn mixture(&self) -> MixtureSpec {
        MixtureSpec {
            n: self.n,
            d: self.d,
            clusters: self.clusters,
            latent_dim: self.latent_dim,
            spread: self.spread as f32,
            noise: self.noise as f32,
            seed: self.seed,
        }
    }

    pub fn workload_spec(&self) -> WorkloadSpec {
        let kind = match self.workload {
            WorkloadArg::Lcps => WorkloadKind::LcpsLabels { cardinality: self.cardinality },
            WorkloadArg::Selectivity => WorkloadKind::SelectivitySweep { percentiles: self.percentiles.clone() },
            WorkloadArg::Correlation => WorkloadKind::Correlation { mode: self.mode.into() },
        };
        WorkloadSpec { kind, n_queries: self.queries, seed: self.seed }
    }

    fn validate(&self) -> Result<()> {
        self.mixture().validate()?;
        self.workload_spec().validate()?;
        if self.queries == 0 {
            bail!("queries must be positive");
        }
        if self.k == 0 {
            bail!("K must be positive");
        }
        if self.workload == WorkloadArg::Correlation && self.clusters < 3 {
            bail!("clusters must be at least 3 for the correlation workload, got {}", self.clusters);
        }
        Ok(())
    }
}

// build parameters, shared by build and bench

#[derive(Debug, Clone, Default, Args)]
pub struct ParamArgs {
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long)]
    pub gamma: Option<usize>,
    #[arg(long)]
    pub m_beta: Option<usize>,
    #[arg(long)]
    pub efc: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub prune: Option<PruneArg>,
    /// Label attribute for metadata-aware pruning.
    #[arg(long)]
    pub label_attr: Option<usize>,
    #[arg(long)]
    pub compressed_levels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamSettings {
    #[serde(rename = "M")]
    pub m: usize,
    pub gamma: usize,
    pub m_beta: usize,
    pub efc: usize,
    pub seed: u64,
    pub prune: PruneArg,
    pub label_attr: usize,
    pub compressed_levels: usize,
}

impl Default for ParamSettings {
    fn default() -> Self {
        ParamSettings {
            m: 32,
            gamma: 12,
            m_beta: 64,
            efc: 40,
            seed: 1,
            prune: PruneArg::MBeta,
            label_attr: 0,
            compressed_levels: 1,
        }
    }
}

impl ParamSettings {
    fn overlay(&mut self, args: &ParamArgs) {
        overlay!(self, args, m, gamma, m_beta, efc, seed, prune, label_attr, compressed_levels);
    }

    pub fn params(&self, variant: VariantArg) -> Result<BuildParams> {
        let p = match variant {
            VariantArg::Hnsw => BuildParams::hnsw(self.m, self.efc, self.seed),
            VariantArg::Acorn1 => BuildParams::acorn1(self.m, self.efc, self.seed),
            VariantArg::AcornGamma => {
                let mut p = BuildParams::acorn_gamma(self.m, self.gamma, self.m_beta, self.efc, self.seed);
                p.compressed_levels = self.compressed_levels;
                p.with_prune(match self.prune {
                    PruneArg::MBeta => PruneStrategy::AcornMBeta,
                    PruneArg::None => PruneStrategy::None,
                    PruneArg::RngAware => PruneStrategy::RngMetadataAware { label_attr: self.label_attr },
                    PruneArg::RngBlind => PruneStrategy::HnswMetadataBlind,
                })
            }
        };
        p.validate()?;
        Ok(p)
    }
}

// build

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Directory written by `acorn gen`, or any directory with base.fvecs.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Index file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildSettings {
    pub variant: VariantArg,
    pub params: ParamSettings,
}

impl Default for BuildSettings {
    fn default() -> Self {
        BuildSettings { variant: VariantArg::AcornGamma, params: ParamSettings::default() }
    }
}

impl BuildSettings {
    pub fn resolve(args: &BuildArgs, file: &ConfigFile) -> Result<Self> {
        let mut s: BuildSettings = file.section("build")?;
        overlay!(s, args, variant);
        s.params.overlay(&args.params);
        s.params.params(s.variant)?;
        Ok(s)
    }
}

// search and baseline

/// Dataset and workload inputs shared by search, baseline and bench.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Workload file; defaults to workload.jsonl in the dataset directory.
    #[arg(long)]
    pub workload: Option<PathBuf>,
    /// Query vectors referenced by `vector_index`; defaults to queries.fvecs
    /// in the dataset directory when present.
    #[arg(long)]
    pub queries: Option<PathBuf>,
}

impl InputArgs {
    pub fn workload_path(&self) -> PathBuf {
        self.workload.clone().unwrap_or_else(|| self.dataset.join("workload.jsonl"))
    }

    pub fn queries_path(&self) -> Option<PathBuf> {
        match &self.queries {
            Some(p) => Some(p.clone()),
            None => Some(self.dataset.join("queries.fvecs")).filter(|p| p.exists()),
        }
    }

    pub fn check(&self) -> Result<()> {
        let base = self.dataset.join("base.fvecs");
        if !base.is_file() {
            bail!("dataset: {} not found", base.display());
        }
        let w = self.workload_path();
        if !w.is_file() {
            bail!("workload: {} not found", w.display());
        }
        if let Some(q) = &self.queries {
            if !q.is_file() {
                bail!("queries: {} not found", q.display());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    /// Result CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated beam widths.
    #[arg(long, value_delimiter = ',')]
    pub efs: Option<Vec<usize>>,
    /// Overrides the per-query K of the workload.
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Neighbor lookup strategy; defaults to the variant's own.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Route queries with estimated selectivity at most 1/gamma to a scan.
    #[arg(long)]
    pub router_gamma: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    pub efs: Vec<usize>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub strategy: Option<String>,
    pub router_gamma: Option<usize>,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings { efs: vec![40], k: None, strategy: None, router_gamma: None }
    }
}

impl SearchSettings {
    pub fn resolve(args: &SearchArgs, file: &ConfigFile) -> Result<Self> {
        let mut s: SearchSettings = file.section("search")?;
        overlay!(s, args, efs);
        if args.k.is_some() {
            s.k = args.k;
        }
        if args.strategy.is_some() {
            s.strategy = args.strategy.clone();
        }
        if args.router_gamma.is_some() {
            s.router_gamma = args.router_gamma;
        }
        check_efs(&s.efs)?;
        if s.k == Some(0) {
            bail!("K must be positive");
        }
        if s.router_gamma == Some(0) {
            bail!("router_gamma must be at least 1");
        }
        if let Some(name) = &s.strategy {
            name.parse::<acorn_core::Strategy>()?;
        }
        Ok(s)
    }
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: BaselineMethod,
    #[command(flatten)]
    pub input: InputArgs,
    /// HNSW index for the post-filter; built from the dataset when absent.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub efs: Option<Vec<usize>>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMethod {
    Prefilter,
    Postfilter,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSettings {
    pub method: BaselineMethod,
    pub efs: Vec<usize>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    /// Parameters of the HNSW graphs the post-filter and oracle search.
    pub params: ParamSettings,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        BaselineSettings {
            method: BaselineMethod::Prefilter,
            efs: vec![40],
            k: None,
            params: ParamSettings::default(),
        }
    }
}

impl BaselineSettings {
    pub fn resolve(args: &BaselineArgs, file: &ConfigFile) -> Result<Self> {
        let mut s: BaselineSettings = file.section("baseline")?;
        s.method = args.method;
        overlay!(s, args, efs);
        if args.k.is_some() {
            s.k = args.k;
        }
        s.params.overlay(&args.params);
        check_efs(&s.efs)?;
        if s.k == Some(0) {
            bail!("K must be positive");
        }
        s.params.params(VariantArg::Hnsw)?;
        Ok(s)
    }
}

// bench

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Ground truth; defaults to gt.bin in the dataset directory, else it is
    /// computed.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Output directory for sweep.csv, build_stats.json, graph_quality.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Option<Vec<MethodArg>>,
    #[arg(long, value_delimiter = ',')]
    pub efs: Option<Vec<usize>>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Predicate subgraphs analyzed per graph method.
    #[arg(long)]
    pub quality_predicates: Option<usize>,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub methods: Vec<MethodArg>,
    pub efs: Vec<usize>,
    #[serde(rename = "K")]
    pub k: usize,
    pub repeats: usize,
    pub threads: usize,
    pub quality_predicates: usize,
    pub params: ParamSettings,
}

impl Default for BenchSettings {
    fn default() -> Self {
        let standard = acorn_core::SweepConfig::standard(10);
        BenchSettings {
            methods: vec![
                MethodArg::Prefilter,
                MethodArg::Postfilter,
                MethodArg::Oracle,
                MethodArg::AcornGamma,
                MethodArg::Acorn1,
            ],
            efs: standard.efs,
            k: standard.k,
            repeats: standard.repeats,
            threads: standard.threads,
            quality_predicates: 12,
            params: ParamSettings::default(),
        }
    }
}

impl BenchSettings {
    pub fn resolve(args: &BenchArgs, file: &ConfigFile) -> Result<Self> {
        let mut s: BenchSettings = file.section("bench")?;
        overlay!(s, args, methods, efs, k, repeats, threads, quality_predicates);
        s.params.overlay(&args.params);
        check_efs(&s.efs)?;
        if s.methods.is_empty() {
            bail!("methods must name at least one method");
        }
        if s.k == 0 || s.repeats == 0 || s.threads == 0 {
            bail!("K, repeats and threads must be positive");
        }
        for v in [VariantArg::Hnsw, VariantArg::AcornGamma, VariantArg::Acorn1] {
            s.params.params(v)?;
        }
        Ok(s)
    }
}

fn check_efs(efs: &[usize]) -> Result<()> {
    if efs.is_empty() || efs.contains(&0) {
        bail!("efs must be a non-empty list of positive widths");
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}
