//! Scenario configuration files (TOML) and their resolution into runnable scenarios.
//!
//! Relative paths inside a configuration resolve against `base_dir`, which
//! [`ScenarioConfig::load`] sets to the file's directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    simulate_batch, DemandError, InitialDemand, PositionDistribution, PositionKind, Recommender, RecommenderStrategy,
    SessionTrace, FRONT_PAGE_SIZE,
};
use crate::cabaret::{BfsLevel, BfsSchedule};
use crate::cacheopt::{greedy_cache, ObjectiveContext};
use crate::graphcore::{generate_synthetic, load_graph, CacheSet, ItemId, RelationGraph};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed configuration: {0}")]
    Parse(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("graph: {0}")]
    Graph(String),
    #[error("cache placement: {0}")]
    Placement(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub items: usize,
    pub zipf_alpha: f64,
    pub avg_degree: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Exactly one of `path` or `synthetic`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

impl GraphSource {
    /// Reads or generates the graph; relative paths resolve against `base_dir`.
    pub fn load(&self, base_dir: &Path) -> Result<RelationGraph, ConfigError> {
        match (&self.path, &self.synthetic) {
            (Some(p), None) => load_graph(base_dir.join(p)).map_err(|e| ConfigError::Graph(e.to_string())),
            (None, Some(s)) => {
                generate_synthetic(s.items, s.zipf_alpha, s.avg_degree, s.seed).map_err(|e| ConfigError::Graph(e.to_string()))
            }
            _ => Err(ConfigError::Invalid(vec!["graph: give exactly one of path or synthetic".into()])),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CachePolicy {
    /// The `capacity` most popular items.
    Top,
    /// An explicit list.
    List,
    /// Greedy placement for the configured recommender and demand.
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CachePolicyConfig {
    pub policy: CachePolicy,
    pub capacity: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Vec<ItemId>>,
    /// One id per line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecommenderKind {
    Baseline,
    Cabaret,
    ReorderOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommenderConfig {
    pub kind: RecommenderKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    /// Per-depth plan; overrides `width` and `depth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<BfsLevel>>,
}

impl RecommenderConfig {
    pub fn schedule(&self) -> Result<Option<BfsSchedule>, String> {
        match self.kind {
            RecommenderKind::Baseline => Ok(None),
            RecommenderKind::ReorderOnly => BfsSchedule::classic(self.n, 1).map(Some).map_err(|e| e.to_string()),
            RecommenderKind::Cabaret => {
                let schedule = match (&self.levels, self.width, self.depth) {
                    (Some(levels), _, _) => BfsSchedule::new(levels.clone()),
                    (None, Some(w), Some(d)) => BfsSchedule::classic(w, d),
                    _ => return Err("recommender.kind = \"cabaret\" needs width and depth, or levels".into()),
                };
                schedule.map(Some).map_err(|e| format!("recommender schedule: {e}"))
            }
        }
    }

    pub fn strategy(&self) -> Result<RecommenderStrategy, String> {
        Ok(match self.kind {
            RecommenderKind::Baseline => RecommenderStrategy::Baseline,
            RecommenderKind::ReorderOnly => RecommenderStrategy::ReorderOnly,
            RecommenderKind::Cabaret => RecommenderStrategy::Cabaret(self.schedule()?.expect("cabaret has a schedule")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    FrontPage,
    SearchBar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositionLaw {
    Uniform,
    Zipf,
    TopPick,
}

fn default_front_page() -> usize {
    FRONT_PAGE_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandConfig {
    pub initial: InitialKind,
    #[serde(default = "default_front_page")]
    pub front_page_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<ItemId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds_path: Option<PathBuf>,
    pub position: PositionLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Requests per session K, the initial one included.
    pub requests: usize,
    /// Number of sessions M.
    pub sessions: usize,
}

impl DemandConfig {
    pub fn position_kind(&self) -> Result<PositionKind, String> {
        match self.position {
            PositionLaw::Uniform => Ok(PositionKind::Uniform),
            PositionLaw::TopPick => Ok(PositionKind::TopPick),
            PositionLaw::Zipf => match self.alpha {
                Some(alpha) if alpha.is_finite() && alpha >= 0.0 => Ok(PositionKind::Zipf { alpha }),
                Some(alpha) => Err(format!("demand.alpha = {alpha} must be finite and non-negative")),
                None => Err("demand.position = \"zipf\" needs demand.alpha".into()),
            },
        }
    }
}

/// Axes of a parameter sweep; an empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub kinds: Vec<RecommenderKind>,
    #[serde(default)]
    pub widths: Vec<usize>,
    #[serde(default)]
    pub depths: Vec<usize>,
    #[serde(default)]
    pub capacities: Vec<usize>,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub requests: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub graph: GraphSource,
    pub cache: CachePolicyConfig,
    pub recommender: RecommenderConfig,
    pub demand: DemandConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn read_ids(path: &Path) -> Result<Vec<ItemId>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| ItemId::new(l).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display()))))
        .collect()
}

impl ScenarioConfig {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let mut config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.base_dir = base_dir.into();
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn resolve_path(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Every problem found without loading the graph, all at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        let mut file = |label: &str, path: &Option<PathBuf>| {
            if let Some(p) = path {
                if !self.resolve_path(p).is_file() {
                    problems.push(format!("{label}: file {} does not exist", p.display()));
                }
            }
        };
        file("graph.path", &self.graph.path);
        file("cache.items_path", &self.cache.items_path);
        file("demand.seeds_path", &self.demand.seeds_path);

        match (&self.graph.path, &self.graph.synthetic) {
            (Some(_), Some(_)) => problems.push("graph: give either path or synthetic, not both".into()),
            (None, None) => problems.push("graph: give path or synthetic".into()),
            (None, Some(s)) => {
                if s.items == 0 {
                    problems.push("graph.synthetic.items must be at least 1".into());
                }
                if !(s.zipf_alpha.is_finite() && s.zipf_alpha >= 0.0) {
                    problems.push("graph.synthetic.zipf_alpha must be finite and non-negative".into());
                }
                if !(s.avg_degree.is_finite() && s.avg_degree >= 0.0) || s.avg_degree > s.items.saturating_sub(1) as f64 {
                    problems.push(format!(
                        "graph.synthetic.avg_degree must lie in [0, {}]",
                        s.items.saturating_sub(1)
                    ));
                }
            }
            (Some(_), None) => {}
        }

        if self.cache.policy == CachePolicy::List {
            match (&self.cache.items, &self.cache.items_path) {
                (None, None) => problems.push("cache.policy = \"list\" needs items or items_path".into()),
                (Some(_), Some(_)) => problems.push("cache: give either items or items_path, not both".into()),
                (Some(items), None) if items.len() > self.cache.capacity => problems.push(format!(
                    "cache.items has {} entries, over capacity {}",
                    items.len(),
                    self.cache.capacity
                )),
                _ => {}
            }
        } else if self.cache.items.is_some() || self.cache.items_path.is_some() {
            problems.push("cache.items only apply to policy = \"list\"".into());
        }

        if self.recommender.n == 0 {
            problems.push("recommender.n must be at least 1".into());
        } else if let Err(e) = self.recommender.schedule() {
            problems.push(e);
        }

        if let Err(e) = self.demand.position_kind() {
            problems.push(e);
        }
        if self.demand.requests < 2 {
            problems.push(format!("demand.requests = {} must be at least 2", self.demand.requests));
        }
        if self.demand.sessions == 0 {
            problems.push("demand.sessions must be at least 1".into());
        }
        match self.demand.initial {
            InitialKind::FrontPage if self.demand.front_page_size == 0 => {
                problems.push("demand.front_page_size must be at least 1".into())
            }
            InitialKind::SearchBar => match (&self.demand.seeds, &self.demand.seeds_path) {
                (None, None) => problems.push("demand.initial = \"search-bar\" needs seeds or seeds_path".into()),
                (Some(s), None) if s.is_empty() => problems.push("demand.seeds is empty".into()),
                (Some(_), Some(_)) => problems.push("demand: give either seeds or seeds_path, not both".into()),
                _ => {}
            },
            _ => {}
        }

        if let Some(sweep) = &self.sweep {
            if sweep.widths.contains(&0) || sweep.depths.contains(&0) {
                problems.push("sweep widths and depths must be at least 1".into());
            }
            if sweep.alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                problems.push("sweep.alphas must be finite and non-negative".into());
            }
            if sweep.requests.iter().any(|k| *k < 2) {
                problems.push("sweep.requests must be at least 2".into());
            }
            let needs_schedule = !sweep.widths.is_empty() || !sweep.depths.is_empty();
            let has_cabaret = if sweep.kinds.is_empty() {
                self.recommender.kind == RecommenderKind::Cabaret
            } else {
                sweep.kinds.contains(&RecommenderKind::Cabaret)
            };
            if needs_schedule && !has_cabaret {
                problems.push("sweeping widths or depths needs a cabaret recommender".into());
            }
            if sweep.kinds.contains(&RecommenderKind::Cabaret)
                && self.recommender.levels.is_none()
                && (self.recommender.width.is_none() && sweep.widths.is_empty()
                    || self.recommender.depth.is_none() && sweep.depths.is_empty())
            {
                problems.push("a cabaret sweep needs width and depth, in recommender or sweep".into());
            }
            if needs_schedule && self.recommender.levels.is_some() {
                problems.push("sweeping widths or depths needs a classic width/depth schedule".into());
            }
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }

    /// Loads or generates the catalog graph.
    pub fn load_graph(&self) -> Result<RelationGraph, ConfigError> {
        self.graph.load(&self.base_dir)
    }

    pub fn resolve(&self) -> Result<Scenario, DemandError> {
        self.validate()?;
        let graph = Arc::new(self.load_graph()?);
        self.resolve_with_graph(graph)
    }

    /// Resolution against an already loaded graph, so sweep cells share it.
    pub fn resolve_with_graph(&self, graph: Arc<RelationGraph>) -> Result<Scenario, DemandError> {
        self.validate()?;
        let positions = PositionDistribution::new(
            self.demand.position_kind().map_err(|e| ConfigError::Invalid(vec![e]))?,
            self.recommender.n,
        )?;
        let initial = match self.demand.initial {
            InitialKind::FrontPage => InitialDemand::front_page(graph.as_ref(), self.demand.front_page_size)?,
            InitialKind::SearchBar => {
                let seeds = match (&self.demand.seeds, &self.demand.seeds_path) {
                    (Some(s), _) => s.clone(),
                    (None, Some(p)) => read_ids(&self.resolve_path(p))?,
                    (None, None) => Vec::new(),
                };
                InitialDemand::search_bar(seeds)?
            }
        };
        if let Some(unknown) = initial.seeds.iter().find(|s| !graph.contains(s)) {
            return Err(DemandError::UnknownSeed(unknown.clone()));
        }
        let strategy = self.recommender.strategy().map_err(|e| ConfigError::Invalid(vec![e]))?;
        let cache = self.place_cache(&graph, &initial, &positions)?;
        Ok(Scenario {
            graph,
            cache,
            strategy,
            n: self.recommender.n,
            initial,
            positions,
            requests: self.demand.requests,
            sessions: self.demand.sessions,
            seed: self.seed,
        })
    }

    fn place_cache(
        &self,
        graph: &RelationGraph,
        initial: &InitialDemand,
        positions: &PositionDistribution,
    ) -> Result<CacheSet, ConfigError> {
        let capacity = self.cache.capacity;
        if capacity == 0 {
            return Ok(CacheSet::empty());
        }
        let items = match self.cache.policy {
            CachePolicy::Top => graph.top_popular(capacity),
            CachePolicy::List => {
                let items = match (&self.cache.items, &self.cache.items_path) {
                    (Some(items), _) => items.clone(),
                    (None, Some(p)) => read_ids(&self.resolve_path(p))?,
                    (None, None) => Vec::new(),
                };
                let unknown: Vec<String> = items
                    .iter()
                    .filter(|i| !graph.contains(i))
                    .map(|i| format!("cache item {i} is not in the catalog"))
                    .collect();
                if !unknown.is_empty() {
                    return Err(ConfigError::Invalid(unknown));
                }
                items
            }
            CachePolicy::Greedy => {
                let strategy = self.recommender.strategy().map_err(|e| ConfigError::Invalid(vec![e]))?;
                let ctx = placement_context(graph, &strategy, self.recommender.n, initial, positions)?;
                greedy_cache(&ctx, capacity)
                    .map_err(|e| ConfigError::Placement(e.to_string()))?
                    .cache
                    .items()
                    .to_vec()
            }
        };
        CacheSet::new(items, capacity).map_err(|e| ConfigError::Invalid(vec![format!("cache: {e}")]))
    }
}

/// Placement objective for a recommender with demand uniform over the seeds.
///
/// Cache-aware recommenders get the exploration-based objective; the baseline
/// shows provider lists unchanged, so its objective is the fixed-order one.
pub fn placement_context(
    graph: &RelationGraph,
    strategy: &RecommenderStrategy,
    n: usize,
    initial: &InitialDemand,
    positions: &PositionDistribution,
) -> Result<ObjectiveContext, ConfigError> {
    let weight = 1.0 / initial.seeds.len() as f64;
    let demand: Vec<(ItemId, f64)> = initial.seeds.iter().map(|s| (s.clone(), weight)).collect();
    match strategy.schedule(n) {
        Some(schedule) => ObjectiveContext::cache_aware(graph, &demand, positions.clone(), &schedule),
        None => ObjectiveContext::fixed_order(graph, &demand, positions.clone()),
    }
    .map_err(|e| ConfigError::Placement(e.to_string()))
}

/// A validated scenario with its graph loaded and cache placed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: Arc<RelationGraph>,
    pub cache: CacheSet,
    pub strategy: RecommenderStrategy,
    pub n: usize,
    pub initial: InitialDemand,
    pub positions: PositionDistribution,
    pub requests: usize,
    pub sessions: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn recommender(&self) -> Result<Recommender<'_, RelationGraph>, DemandError> {
        Ok(Recommender::new(self.graph.as_ref(), self.strategy.clone(), self.n, &self.cache)?)
    }

    pub fn objective_context(&self) -> Result<ObjectiveContext, ConfigError> {
        placement_context(&self.graph, &self.strategy, self.n, &self.initial, &self.positions)
    }

    /// All `sessions` traces, session `i` seeded from `(seed, i)`.
    pub fn simulate(&self) -> Result<Vec<SessionTrace>, DemandError> {
        let recommender = self.recommender()?;
        simulate_batch(&recommender, &self.initial, &self.positions, self.requests, self.sessions, self.seed)
    }
}
