//! Scenario execution, parameter sweeps and result bundles.
//!
//! A bundle directory holds flat CSV tables and one `summary.json`. Every CSV
//! row carries the hash of the configuration it came from, and nothing in a
//! bundle depends on wall-clock time, so the same configuration and seed
//! reproduce it byte for byte.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cabaret::{bfs_explore, exploration_stats, BfsSchedule};
use crate::cacheopt::{chr_objective, greedy_cache, load_instance, InstanceError};
use crate::chrmodel::{chr_closed_form, chr_jensen_bound, ModelError, ModelParams};
use crate::demand::{
    write_traces, CachePolicy, ConfigError, DemandError, PositionDistribution, PositionKind, PositionLaw, RecommenderKind,
    Scenario, ScenarioConfig, SessionTrace,
};
use crate::graphcore::{save_graph, CacheSet, ItemId, RelationGraph};
use crate::metrics::{chr_sequential, zero_cached_fraction, ChrReport, MetricsError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

impl RunnerError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Runtime(_) | Self::Io(_) => EXIT_RUNTIME,
        }
    }
}

impl From<DemandError> for RunnerError {
    fn from(e: DemandError) -> Self {
        match e {
            DemandError::Config(c) => Self::Config(c),
            DemandError::UnknownSeed(id) => Self::Config(ConfigError::Invalid(vec![format!("seed {id} is not in the catalog")])),
            DemandError::NoSeeds | DemandError::InvalidExponent(_) | DemandError::TooFewRequests(_) => {
                Self::Config(ConfigError::Invalid(vec![e.to_string()]))
            }
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<MetricsError> for RunnerError {
    fn from(e: MetricsError) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<ModelError> for RunnerError {
    fn from(e: ModelError) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<InstanceError> for RunnerError {
    fn from(e: InstanceError) -> Self {
        match e {
            InstanceError::Io(e) => Self::Io(e),
            other => Self::Config(ConfigError::Invalid(vec![other.to_string()])),
        }
    }
}

/// First 16 hex digits of the SHA-256 of the canonical TOML rendering.
pub fn config_hash(config: &ScenarioConfig) -> String {
    let digest = Sha256::digest(config.to_toml().as_bytes());
    hex::encode(&digest[..8])
}

/// One point of a sweep; `None` keeps the base configuration's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub kind: RecommenderKind,
    pub width: Option<usize>,
    pub depth: Option<usize>,
    pub capacity: usize,
    pub alpha: Option<f64>,
    pub requests: usize,
}

impl CellSpec {
    fn base(config: &ScenarioConfig) -> Self {
        Self {
            kind: config.recommender.kind,
            width: None,
            depth: None,
            capacity: config.cache.capacity,
            alpha: None,
            requests: config.demand.requests,
        }
    }

    pub fn apply(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut config = base.clone();
        config.sweep = None;
        config.recommender.kind = self.kind;
        if let Some(w) = self.width {
            config.recommender.width = Some(w);
            config.recommender.levels = None;
        }
        if let Some(d) = self.depth {
            config.recommender.depth = Some(d);
            config.recommender.levels = None;
        }
        config.cache.capacity = self.capacity;
        if let Some(alpha) = self.alpha {
            config.demand.position = PositionLaw::Zipf;
            config.demand.alpha = Some(alpha);
        }
        config.demand.requests = self.requests;
        config
    }
}

/// The sweep grid in a fixed order: kind, width, depth, capacity, alpha, requests.
/// Width and depth are not swept for recommenders without a BFS schedule.
pub fn sweep_cells(config: &ScenarioConfig) -> Vec<CellSpec> {
    let base = CellSpec::base(config);
    let Some(sweep) = &config.sweep else { return vec![base] };
    fn axis<T: Clone>(values: &[T]) -> Vec<Option<T>> {
        if values.is_empty() {
            vec![None]
        } else {
            values.iter().cloned().map(Some).collect()
        }
    }
    let kinds = if sweep.kinds.is_empty() { vec![base.kind] } else { sweep.kinds.clone() };
    let mut cells = Vec::new();
    for kind in kinds {
        let explores = kind == RecommenderKind::Cabaret;
        let widths = if explores { axis(&sweep.widths) } else { vec![None] };
        let depths = if explores { axis(&sweep.depths) } else { vec![None] };
        for width in &widths {
            for depth in &depths {
                for capacity in axis(&sweep.capacities) {
                    for alpha in axis(&sweep.alphas) {
                        for requests in axis(&sweep.requests) {
                            cells.push(CellSpec {
                                kind,
                                width: *width,
                                depth: *depth,
                                capacity: capacity.unwrap_or(base.capacity),
                                alpha,
                                requests: requests.unwrap_or(base.requests),
                            });
                        }
                    }
                }
            }
        }
    }
    cells
}

/// Model inputs measured over the seed items: mean `|L|` and mean `|L ∩ C|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub mean_list_size: f64,
    pub mean_cached: f64,
    pub q_cached: f64,
    pub closed_form: f64,
    /// Absent when the position law has no bound direction.
    pub jensen_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub spec: CellSpec,
    pub config_hash: String,
    pub report: ChrReport,
    pub model: Option<ModelComparison>,
    /// Fraction of presented lists without a cached item, per step.
    pub zero_cached: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationRow {
    pub width: usize,
    pub depth: usize,
    pub sources: usize,
    pub mean_requests: f64,
    pub mean_unique: f64,
    pub bound: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachingRow {
    pub capacity: usize,
    pub top_chr: f64,
    pub greedy_chr: f64,
    /// `greedy / top`; absent when the top-cache ratio is zero.
    pub ratio: Option<f64>,
    pub top_objective: f64,
    pub greedy_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub config: ScenarioConfig,
    pub cells: Vec<CellResult>,
    pub exploration: Vec<ExplorationRow>,
    pub caching: Vec<CachingRow>,
    /// Traces of a single-cell run.
    #[serde(skip)]
    pub traces: Vec<SessionTrace>,
}

impl ResultsBundle {
    fn new(config: &ScenarioConfig) -> Self {
        Self {
            config_hash: config_hash(config),
            seed: config.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            cells: Vec::new(),
            exploration: Vec::new(),
            caching: Vec::new(),
            traces: Vec::new(),
        }
    }
}

fn model_comparison(scenario: &Scenario) -> Result<Option<ModelComparison>, RunnerError> {
    let Some(schedule) = scenario.strategy.schedule(scenario.n) else { return Ok(None) };
    let mut total_len = 0usize;
    let mut total_cached = 0usize;
    for seed in &scenario.initial.seeds {
        let explored = bfs_explore(scenario.graph.as_ref(), seed, &schedule).map_err(|e| RunnerError::Runtime(e.to_string()))?;
        total_len += explored.len();
        total_cached += explored.items().filter(|i| scenario.cache.contains(i)).count();
    }
    let sources = scenario.initial.seeds.len() as f64;
    let mean_list_size = total_len as f64 / sources;
    let mean_cached = total_cached as f64 / sources;
    let q_cached = if total_len == 0 { 0.0 } else { total_cached as f64 / total_len as f64 };
    let params = ModelParams::new(mean_list_size.round() as usize, q_cached, scenario.positions.clone())?;
    Ok(Some(ModelComparison {
        mean_list_size,
        mean_cached,
        q_cached,
        closed_form: chr_closed_form(&params)?,
        jensen_bound: chr_jensen_bound(mean_cached, &scenario.positions, None).ok().map(|b| b.value),
    }))
}

fn run_cell(base: &ScenarioConfig, spec: &CellSpec, graph: &Arc<RelationGraph>) -> Result<(CellResult, Vec<SessionTrace>), RunnerError> {
    let config = spec.apply(base);
    let scenario = config.resolve_with_graph(graph.clone())?;
    let traces = scenario.simulate()?;
    let report = chr_sequential(&traces, &scenario.cache)?;
    let cell = CellResult {
        spec: spec.clone(),
        config_hash: config_hash(&config),
        report,
        model: model_comparison(&scenario)?,
        zero_cached: zero_cached_fraction(&traces).into_iter().map(|z| z.fraction).collect(),
    };
    Ok((cell, traces))
}

fn exploration_row(scenario: &Scenario, width: usize, depth: usize) -> Result<ExplorationRow, RunnerError> {
    let schedule = BfsSchedule::classic(width, depth).map_err(|e| RunnerError::Runtime(e.to_string()))?;
    let runs = scenario
        .initial
        .seeds
        .iter()
        .map(|s| bfs_explore(scenario.graph.as_ref(), s, &schedule))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| RunnerError::Runtime(e.to_string()))?;
    let stats = exploration_stats(&runs);
    let n = stats.len() as f64;
    Ok(ExplorationRow {
        width,
        depth,
        sources: stats.len(),
        mean_requests: stats.iter().map(|s| s.requests_issued as f64).sum::<f64>() / n,
        mean_unique: stats.iter().map(|s| s.unique_returned as f64).sum::<f64>() / n,
        bound: schedule.max_explored(),
    })
}

fn prepare(config: &ScenarioConfig) -> Result<Arc<RelationGraph>, RunnerError> {
    config.validate()?;
    Ok(Arc::new(config.load_graph()?))
}

/// The base cell of a configuration, with its traces kept.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ResultsBundle, RunnerError> {
    let graph = prepare(config)?;
    let mut bundle = ResultsBundle::new(config);
    let spec = CellSpec::base(config);
    let (cell, traces) = run_cell(config, &spec, &graph)?;
    let scenario = config.resolve_with_graph(graph)?;
    if let (Some(w), Some(d), None) = (config.recommender.width, config.recommender.depth, &config.recommender.levels) {
        if config.recommender.kind == RecommenderKind::Cabaret {
            bundle.exploration.push(exploration_row(&scenario, w, d)?);
        }
    }
    bundle.cells.push(cell);
    bundle.traces = traces;
    Ok(bundle)
}

/// Every cell of the sweep grid, run in parallel with shared session seeds.
pub fn sweep(config: &ScenarioConfig) -> Result<ResultsBundle, RunnerError> {
    let graph = prepare(config)?;
    let mut bundle = ResultsBundle::new(config);
    let cells = sweep_cells(config);
    bundle.cells = cells
        .par_iter()
        .map(|spec| run_cell(config, spec, &graph).map(|(cell, _)| cell))
        .collect::<Result<_, _>>()?;

    let sweep = config.sweep.clone().unwrap_or_default();
    let widths = if sweep.widths.is_empty() { config.recommender.width.into_iter().collect() } else { sweep.widths };
    let depths = if sweep.depths.is_empty() { config.recommender.depth.into_iter().collect() } else { sweep.depths };
    if !widths.is_empty() && !depths.is_empty() {
        let scenario = config.resolve_with_graph(graph)?;
        for d in &depths {
            for w in &widths {
                bundle.exploration.push(exploration_row(&scenario, *w, *d)?);
            }
        }
    }
    Ok(bundle)
}

/// Top-popular against greedy placement at each swept capacity, same recommender and sessions.
pub fn compare_caching(config: &ScenarioConfig) -> Result<ResultsBundle, RunnerError> {
    let graph = prepare(config)?;
    let mut bundle = ResultsBundle::new(config);
    let capacities = match &config.sweep {
        Some(s) if !s.capacities.is_empty() => s.capacities.clone(),
        _ => vec![config.cache.capacity],
    };
    let run = |capacity: usize, policy: CachePolicy| -> Result<(CellResult, f64), RunnerError> {
        let mut variant = config.clone();
        variant.sweep = None;
        variant.cache.policy = policy;
        variant.cache.items = None;
        variant.cache.items_path = None;
        variant.cache.capacity = capacity;
        let spec = CellSpec::base(&variant);
        let (cell, _) = run_cell(&variant, &spec, &graph)?;
        let scenario = variant.resolve_with_graph(graph.clone())?;
        let objective = chr_objective(&scenario.objective_context()?, &scenario.cache);
        Ok((cell, objective))
    };
    let rows = capacities
        .par_iter()
        .map(|&c| -> Result<_, RunnerError> {
            let (top, top_objective) = run(c, CachePolicy::Top)?;
            let (greedy, greedy_objective) = run(c, CachePolicy::Greedy)?;
            let row = CachingRow {
                capacity: c,
                top_chr: top.report.aggregate,
                greedy_chr: greedy.report.aggregate,
                ratio: (top.report.aggregate > 0.0).then(|| greedy.report.aggregate / top.report.aggregate),
                top_objective,
                greedy_objective,
            };
            Ok((row, [top, greedy]))
        })
        .collect::<Result<Vec<_>, _>>()?;
    for (row, cells) in rows {
        bundle.caching.push(row);
        bundle.cells.extend(cells);
    }
    Ok(bundle)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn kind_name(kind: RecommenderKind) -> &'static str {
    match kind {
        RecommenderKind::Baseline => "baseline",
        RecommenderKind::Cabaret => "cabaret",
        RecommenderKind::ReorderOnly => "reorder-only",
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()
}

/// Writes the bundle into `dir`, replacing any previous contents. Files are
/// staged in a sibling directory first so a failure leaves nothing partial.
pub fn write_bundle(bundle: &ResultsBundle, dir: impl AsRef<Path>) -> Result<PathBuf, RunnerError> {
    let dir = dir.as_ref().to_path_buf();
    let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
    let staging = parent.join(format!(".{name}.partial"));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    if let Err(e) = write_files(bundle, &staging) {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::rename(&staging, &dir)?;
    Ok(dir)
}

fn write_files(bundle: &ResultsBundle, dir: &Path) -> Result<(), RunnerError> {
    let hash = &bundle.config_hash;
    write_csv(
        &dir.join("cells.csv"),
        &[
            "config_hash", "cell", "cell_hash", "kind", "width", "depth", "capacity", "alpha", "requests", "sessions",
            "chr", "ci", "chr_truncated_as_miss", "hits_per_session", "mean_list_size", "mean_cached", "q_cached",
            "closed_form", "jensen_bound",
        ],
        bundle.cells.iter().enumerate().map(|(i, c)| {
            let m = c.model.as_ref();
            vec![
                hash.clone(),
                i.to_string(),
                c.config_hash.clone(),
                kind_name(c.spec.kind).to_string(),
                opt_usize(c.spec.width),
                opt_usize(c.spec.depth),
                c.spec.capacity.to_string(),
                opt(c.spec.alpha),
                c.spec.requests.to_string(),
                c.report.sessions.to_string(),
                c.report.aggregate.to_string(),
                c.report.aggregate_ci_half_width.to_string(),
                c.report.aggregate_truncated_as_miss.to_string(),
                c.report.hits_per_session.to_string(),
                opt(m.map(|m| m.mean_list_size)),
                opt(m.map(|m| m.mean_cached)),
                opt(m.map(|m| m.q_cached)),
                opt(m.map(|m| m.closed_form)),
                opt(m.and_then(|m| m.jensen_bound)),
            ]
        }),
    )?;
    write_csv(
        &dir.join("chr_steps.csv"),
        &["config_hash", "cell", "step", "ratio", "n", "ci", "zero_cached"],
        bundle.cells.iter().enumerate().flat_map(|(i, c)| {
            c.report.per_step.iter().map(move |s| {
                vec![
                    hash.clone(),
                    i.to_string(),
                    s.step.to_string(),
                    s.ratio.to_string(),
                    s.samples.to_string(),
                    s.ci_half_width.to_string(),
                    opt(c.zero_cached.get(s.step - 2).copied()),
                ]
            })
        }),
    )?;
    if !bundle.exploration.is_empty() {
        write_csv(
            &dir.join("exploration.csv"),
            &["config_hash", "width", "depth", "sources", "mean_requests", "mean_unique", "bound"],
            bundle.exploration.iter().map(|e| {
                vec![
                    hash.clone(),
                    e.width.to_string(),
                    e.depth.to_string(),
                    e.sources.to_string(),
                    e.mean_requests.to_string(),
                    e.mean_unique.to_string(),
                    e.bound.to_string(),
                ]
            }),
        )?;
    }
    if !bundle.caching.is_empty() {
        write_csv(
            &dir.join("compare_caching.csv"),
            &["config_hash", "capacity", "top_chr", "greedy_chr", "ratio", "top_objective", "greedy_objective"],
            bundle.caching.iter().map(|r| {
                vec![
                    hash.clone(),
                    r.capacity.to_string(),
                    r.top_chr.to_string(),
                    r.greedy_chr.to_string(),
                    opt(r.ratio),
                    r.top_objective.to_string(),
                    r.greedy_objective.to_string(),
                ]
            }),
        )?;
    }
    if !bundle.traces.is_empty() {
        let file = io::BufWriter::new(fs::File::create(dir.join("traces.jsonl"))?);
        write_traces(&bundle.traces, file)?;
    }
    fs::write(dir.join("config.toml"), bundle.config.to_toml())?;
    let summary = serde_json::to_string_pretty(bundle).map_err(|e| RunnerError::Runtime(e.to_string()))?;
    fs::write(dir.join("summary.json"), summary + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyReport {
    pub capacity: usize,
    pub items: Vec<ItemId>,
    pub gains: Vec<f64>,
    pub objective: f64,
    pub evaluations: u64,
    /// Objective of the same number of most popular demand items, for reference.
    pub top_popular_objective: f64,
}

/// Greedy placement on a stored instance.
pub fn run_greedy(instance: impl AsRef<Path>, capacity: usize) -> Result<GreedyReport, RunnerError> {
    if capacity == 0 {
        return Err(ConfigError::Invalid(vec!["--capacity must be at least 1".into()]).into());
    }
    let (_, graph, ctx) = load_instance(instance)?;
    let result = greedy_cache(&ctx, capacity).map_err(|e| RunnerError::Runtime(e.to_string()))?;
    let top = CacheSet::from_items(graph.top_popular(capacity));
    Ok(GreedyReport {
        capacity,
        items: result.cache.items().to_vec(),
        gains: result.gains,
        objective: result.objective,
        evaluations: result.evaluations as u64,
        top_popular_objective: chr_objective(&ctx, &top),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub list_size: usize,
    pub q_cached: f64,
    pub alpha: f64,
    pub n: usize,
    pub mean_cached: f64,
    pub closed_form: f64,
    pub jensen_bound: f64,
}

/// Closed form and bound for a Zipf(`alpha`) position law over `n` slots.
pub fn model_prediction(list_size: usize, q_cached: f64, alpha: f64, n: usize) -> Result<ModelReport, RunnerError> {
    let invalid = |m: String| RunnerError::Config(ConfigError::Invalid(vec![m]));
    let positions = PositionDistribution::new(PositionKind::Zipf { alpha }, n).map_err(|e| invalid(e.to_string()))?;
    let params = ModelParams::new(list_size, q_cached, positions.clone()).map_err(|e| invalid(e.to_string()))?;
    let bound = chr_jensen_bound(params.mean_cached(), &positions, None)?;
    Ok(ModelReport {
        list_size,
        q_cached,
        alpha,
        n,
        mean_cached: params.mean_cached(),
        closed_form: chr_closed_form(&params)?,
        jensen_bound: bound.value,
    })
}

/// v→[a,b,c], a→[d,e], b→[c,f], c→[g,h]; z is unreachable. Uniform popularity.
pub fn hand_trace_graph() -> RelationGraph {
    let adjacency: [(&str, &[&str]); 10] = [
        ("v", &["a", "b", "c"]),
        ("a", &["d", "e"]),
        ("b", &["c", "f"]),
        ("c", &["g", "h"]),
        ("d", &[]),
        ("e", &[]),
        ("f", &[]),
        ("g", &[]),
        ("h", &[]),
        ("z", &[]),
    ];
    RelationGraph::new(
        None,
        adjacency
            .iter()
            .map(|(v, r)| (ItemId::from(*v), 0.1, r.iter().map(|x| ItemId::from(*x)).collect())),
    )
    .expect("hand-trace graph is valid")
}

pub const EXAMPLE_SCENARIO: &str = r#"seed = 2024

[graph]
synthetic = { items = 1000, zipf_alpha = 1.0, avg_degree = 10, seed = 1 }

[cache]
policy = "top"
capacity = 50

[recommender]
kind = "cabaret"
n = 20
width = 50
depth = 2

[demand]
initial = "front-page"
position = "zipf"
alpha = 1.0
requests = 2
sessions = 10000

[sweep]
kinds = ["baseline", "cabaret"]
capacities = [10, 20, 30, 40, 50]
"#;

/// Writes the hand-trace graph, an example scenario and a greedy instance into `dir`.
pub fn export_fixtures(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, RunnerError> {
    use crate::cacheopt::{save_instance, DemandWeight, InstanceRecord};
    use crate::cacheopt::ObjectiveMode;
    use crate::graphcore::generate_synthetic;

    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let hand = dir.join("hand_trace.jsonl");
    save_graph(&hand_trace_graph(), &hand).map_err(|e| RunnerError::Runtime(e.to_string()))?;
    written.push(hand);

    let scenario = dir.join("scenario.toml");
    fs::write(&scenario, EXAMPLE_SCENARIO)?;
    written.push(scenario);

    let graph = generate_synthetic(200, 1.0, 10.0, 5).map_err(|e| RunnerError::Runtime(e.to_string()))?;
    let demand: Vec<DemandWeight> = graph
        .top_popular(50)
        .into_iter()
        .map(|id| DemandWeight { id, q: 1.0 / 50.0 })
        .collect();
    let positions = PositionDistribution::new(PositionKind::Zipf { alpha: 1.0 }, 10).expect("valid law");
    let record = InstanceRecord {
        graph: PathBuf::from("instance_graph.jsonl"),
        demand,
        positions: positions.probabilities().to_vec(),
        n: 10,
        schedule: Some(BfsSchedule::classic(5, 2).expect("valid").into()),
        mode: ObjectiveMode::CacheAware,
    };
    let instance = dir.join("instance.json");
    save_instance(&instance, "instance_graph.jsonl", &graph, &record)?;
    written.push(dir.join("instance_graph.jsonl"));
    written.push(instance);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ScenarioConfig {
        let text = EXAMPLE_SCENARIO
            .replace("items = 1000", "items = 150")
            .replace("capacity = 50", "capacity = 10")
            .replace("n = 20", "n = 5")
            .replace("width = 50", "width = 5")
            .replace("sessions = 10000", "sessions = 300")
            .replace("capacities = [10, 20, 30, 40, 50]", "capacities = [5, 10]");
        ScenarioConfig::parse(&text, ".").unwrap()
    }

    #[test]
    fn grid_order_and_size() {
        let cells = sweep_cells(&config());
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[0].kind, RecommenderKind::Baseline);
        assert_eq!(cells[3].capacity, 10);
        let mut c = config();
        c.sweep = None;
        assert_eq!(sweep_cells(&c), vec![CellSpec::base(&c)]);
    }

    #[test]
    fn single_cell_run() {
        let mut c = config();
        c.sweep = None;
        let bundle = run_scenario(&c).unwrap();
        assert_eq!(bundle.cells.len(), 1);
        assert_eq!(bundle.traces.len(), 300);
        let model = bundle.cells[0].model.as_ref().unwrap();
        assert!(model.closed_form <= model.jensen_bound.unwrap() + 1e-12);
        assert_eq!(bundle.exploration.len(), 1);
    }

    #[test]
    fn bundle_is_byte_stable() {
        let tmp = tempfile::tempdir().unwrap();
        let c = config();
        let a = write_bundle(&sweep(&c).unwrap(), tmp.path().join("a")).unwrap();
        let b = write_bundle(&sweep(&c).unwrap(), tmp.path().join("b")).unwrap();
        for file in ["cells.csv", "chr_steps.csv", "exploration.csv", "summary.json", "config.toml"] {
            assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
        }
        let cells = fs::read_to_string(a.join("cells.csv")).unwrap();
        let hash = config_hash(&c);
        assert!(cells.lines().skip(1).all(|l| l.starts_with(&hash)));
    }

    #[test]
    fn caching_comparison_edges() {
        let mut c = config();
        c.sweep.as_mut().unwrap().capacities = vec![0, 150];
        c.sweep.as_mut().unwrap().kinds.clear();
        let bundle = compare_caching(&c).unwrap();
        assert_eq!(bundle.caching[0].top_chr, 0.0);
        assert_eq!(bundle.caching[0].greedy_chr, 0.0);
        assert_eq!(bundle.caching[1].top_chr, bundle.caching[1].greedy_chr);
    }

    #[test]
    fn model_command_values() {
        let r = model_prediction(20, 0.3, 1.0, 5).unwrap();
        assert!(r.closed_form <= r.jensen_bound);
        assert_eq!(model_prediction(20, 1.5, 1.0, 5).unwrap_err().exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn exported_fixtures_load() {
        let tmp = tempfile::tempdir().unwrap();
        export_fixtures(tmp.path()).unwrap();
        let g = crate::graphcore::load_graph(tmp.path().join("hand_trace.jsonl")).unwrap();
        assert_eq!(g, hand_trace_graph());
        let report = run_greedy(tmp.path().join("instance.json"), 5).unwrap();
        assert_eq!(report.items.len(), 5);
        assert!(report.objective >= report.top_popular_objective - 1e-12);
        ScenarioConfig::load(tmp.path().join("scenario.toml")).unwrap().validate().unwrap();
    }
}
