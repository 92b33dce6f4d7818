//! Deployment settings: the regions offered, their trending and cached items, and the recommender plan.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cabaret_core::cabaret::{BfsLevel, BfsSchedule};
use cabaret_core::demand::GraphSource;
use cabaret_core::graphcore::{generate_synthetic, CacheSet, ItemId, RelationProvider};
use serde::Deserialize;
use thiserror::Error;

/// Recommendations shown per step.
pub const LIST_SIZE: usize = 5;
/// Items watched per session; the last one is rated but shows no list.
pub const SESSION_LENGTH: usize = 5;
/// Upper bound on the exploration size of any configured schedule.
pub const MAX_EXPLORED: usize = 550;
pub const DEFAULT_REGIONS: [&str; 7] = ["GR", "US", "GB", "IN", "BR", "JP", "ZA"];
pub const DEFAULT_INITIAL_SIZE: usize = 20;
pub const DEFAULT_TRENDING_SIZE: usize = 50;
pub const DEFAULT_CACHE_SIZE: usize = 500;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse regions file: {0}")]
    Parse(String),
    #[error("invalid experiment config: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("region {region}: {message}")]
    Region { region: String, message: String },
}

pub type SharedProvider = Arc<dyn RelationProvider + Send + Sync>;

/// One region: its relation provider, trending list and cached items.
#[derive(Clone)]
pub struct Region {
    pub name: String,
    pub provider: SharedProvider,
    /// Most popular first.
    pub trending: Vec<ItemId>,
    pub cache: CacheSet,
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Region")
            .field("name", &self.name)
            .field("trending", &self.trending.len())
            .field("cache", &self.cache.len())
            .finish_non_exhaustive()
    }
}

impl Region {
    /// Trending and cached items taken from the provider's popularity ranking.
    pub fn from_provider(
        name: impl Into<String>,
        provider: SharedProvider,
        trending_size: usize,
        cache_size: usize,
    ) -> Result<Self, ConfigError> {
        let name = name.into();
        let fail = |e: cabaret_core::graphcore::ProviderError| ConfigError::Region { region: name.clone(), message: e.to_string() };
        let trending = provider.top_popular(trending_size).map_err(fail)?;
        let cache = CacheSet::from_items(provider.top_popular(cache_size).map_err(fail)?);
        Ok(Self { name, provider, trending, cache })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub regions: Vec<Region>,
    /// Trending items offered at the start of a session.
    pub initial_size: usize,
    pub trending_size: usize,
    pub cache_size: usize,
    pub schedule: BfsSchedule,
}

/// Width 50 at depth 1, then 50 related items for each of the first 10: at most 550 explored.
pub fn default_schedule() -> BfsSchedule {
    BfsSchedule::new(vec![
        BfsLevel { width: 50, expand: Some(10) },
        BfsLevel { width: 50, expand: None },
    ])
    .expect("static schedule is valid")
}

impl ExperimentConfig {
    pub fn new(regions: Vec<Region>) -> Self {
        Self {
            regions,
            initial_size: DEFAULT_INITIAL_SIZE,
            trending_size: DEFAULT_TRENDING_SIZE,
            cache_size: DEFAULT_CACHE_SIZE,
            schedule: default_schedule(),
        }
    }

    /// The seven default regions, each backed by its own synthetic catalog.
    pub fn synthetic(items: usize, seed: u64) -> Result<Self, ConfigError> {
        let regions = DEFAULT_REGIONS
            .iter()
            .zip(seed..)
            .map(|(name, s)| {
                let graph = generate_synthetic(items, 1.0, 50.0, s)
                    .map_err(|e| ConfigError::Region { region: (*name).into(), message: e.to_string() })?;
                Region::from_provider(*name, Arc::new(graph), DEFAULT_TRENDING_SIZE, DEFAULT_CACHE_SIZE)
            })
            .collect::<Result<_, _>>()?;
        let config = Self::new(regions);
        config.validate()?;
        Ok(config)
    }

    /// Regions described in a TOML file; see [`RegionsFile`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let file: RegionsFile = toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut regions = Vec::with_capacity(file.regions.len());
        for entry in &file.regions {
            let fail = |message: String| ConfigError::Region { region: entry.name.clone(), message };
            let graph = entry.graph.load(base).map_err(|e| fail(e.to_string()))?;
            let provider: SharedProvider = Arc::new(graph);
            let mut region = Region::from_provider(entry.name.clone(), provider, file.trending_size, file.cache_size)?;
            if let Some(p) = &entry.cache_path {
                let p = base.join(p);
                let text = fs::read_to_string(&p).map_err(|source| ConfigError::Io { path: p, source })?;
                let items = text
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(|l| ItemId::new(l).map_err(|e| fail(e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?;
                region.cache = CacheSet::from_items(items);
            }
            regions.push(region);
        }
        let config = Self {
            regions,
            initial_size: file.initial_size,
            trending_size: file.trending_size,
            cache_size: file.cache_size,
            schedule: default_schedule(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if self.regions.is_empty() {
            problems.push("at least one region is required".to_owned());
        }
        if self.initial_size == 0 || self.initial_size > self.trending_size {
            problems.push(format!("initial list size {} must be in 1..={}", self.initial_size, self.trending_size));
        }
        if self.schedule.max_explored() > MAX_EXPLORED {
            problems.push(format!("schedule explores up to {} items, above {MAX_EXPLORED}", self.schedule.max_explored()));
        }
        let mut names = HashSet::new();
        for r in &self.regions {
            if !names.insert(r.name.as_str()) {
                problems.push(format!("region {} listed twice", r.name));
            }
            if r.trending.len() != self.trending_size {
                problems.push(format!("region {}: {} trending items, expected {}", r.name, r.trending.len(), self.trending_size));
            }
            if r.trending.iter().collect::<HashSet<_>>().len() != r.trending.len() {
                problems.push(format!("region {}: trending list has duplicates", r.name));
            }
            if r.cache.len() != self.cache_size {
                problems.push(format!("region {}: {} cached items, expected {}", r.name, r.cache.len(), self.cache_size));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }

    pub fn region(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }
}

/// On-disk region list.
///
/// ```toml
/// [[regions]]
/// name = "GR"
/// graph = { path = "gr.jsonl" }
/// cache_path = "gr_cache.txt"   # one id per line; default: the 500 most popular
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionsFile {
    #[serde(default = "default_initial")]
    pub initial_size: usize,
    #[serde(default = "default_trending")]
    pub trending_size: usize,
    #[serde(default = "default_cache")]
    pub cache_size: usize,
    pub regions: Vec<RegionSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub name: String,
    pub graph: GraphSource,
    #[serde(default)]
    pub cache_path: Option<PathBuf>,
}

fn default_initial() -> usize {
    DEFAULT_INITIAL_SIZE
}

fn default_trending() -> usize {
    DEFAULT_TRENDING_SIZE
}

fn default_cache() -> usize {
    DEFAULT_CACHE_SIZE
}
