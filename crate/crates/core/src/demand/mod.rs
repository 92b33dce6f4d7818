//! User demand: position-selection laws, initial-request models and
//! session simulation.

mod config;
mod trace;

pub use config::{
    CachePolicy, CachePolicyConfig, ConfigError, DemandConfig, GraphSource, InitialKind, PositionLaw,
    placement_context, RecommenderConfig, RecommenderKind, Scenario, ScenarioConfig, SweepConfig, SyntheticSpec,
};
pub use trace::{read_traces, write_traces, Ratings, SessionStep, SessionTrace, TraceError};

use std::collections::HashMap;
use std::sync::RwLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cabaret::{self, BfsSchedule, CabaretError, RecommendationList};
use crate::graphcore::{CacheSet, ItemId, ProviderError, RelationProvider};

/// Default number of front-page items a session can start from.
pub const FRONT_PAGE_SIZE: usize = 50;

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("position distribution needs at least one position")]
    EmptyDistribution,
    #[error("invalid zipf exponent {0}")]
    InvalidExponent(f64),
    #[error("a session needs at least 2 requests, got {0}")]
    TooFewRequests(usize),
    #[error("initial demand has no seed items")]
    NoSeeds,
    #[error("seed item {0} is not in the catalog")]
    UnknownSeed(ItemId),
    #[error("recommender failed: {0}")]
    Recommender(#[from] CabaretError),
    #[error("provider failed: {0}")]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Shape of the position-selection law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PositionKind {
    Uniform,
    Zipf { alpha: f64 },
    /// The limit of Zipf as alpha grows: always the first position.
    TopPick,
    /// Explicit weights.
    Custom,
}

/// Probability of selecting each list position, independent of content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionDistribution {
    kind: PositionKind,
    probs: Vec<f64>,
}

pub fn position_distribution(kind: PositionKind, n: usize) -> Result<PositionDistribution, DemandError> {
    PositionDistribution::new(kind, n)
}

impl PositionDistribution {
    pub fn new(kind: PositionKind, n: usize) -> Result<Self, DemandError> {
        if n == 0 {
            return Err(DemandError::EmptyDistribution);
        }
        let weights: Vec<f64> = match kind {
            PositionKind::Uniform => vec![1.0; n],
            PositionKind::Zipf { alpha } => {
                if !alpha.is_finite() || alpha < 0.0 {
                    return Err(DemandError::InvalidExponent(alpha));
                }
                (1..=n).map(|i| (i as f64).powf(-alpha)).collect()
            }
            PositionKind::TopPick => (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
            PositionKind::Custom => return Err(DemandError::EmptyDistribution),
        };
        let total: f64 = weights.iter().sum();
        Ok(Self {
            kind,
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Arbitrary non-negative weights, normalized.
    pub fn from_weights(weights: &[f64]) -> Result<Self, DemandError> {
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || total.is_nan() || total <= 0.0 || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DemandError::EmptyDistribution);
        }
        Ok(Self {
            kind: PositionKind::Custom,
            probs: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn kind(&self) -> PositionKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// `Σ_{i≤m} p_i` for `m` clipped to the list length.
    pub fn top_mass(&self, m: usize) -> f64 {
        self.probs[..m.min(self.probs.len())].iter().sum()
    }

    /// Probabilities over the first `len` positions, renormalized.
    pub fn truncated(&self, len: usize) -> Vec<f64> {
        let head = &self.probs[..len.min(self.probs.len())];
        let total: f64 = head.iter().sum();
        if total > 0.0 {
            head.iter().map(|p| p / total).collect()
        } else {
            vec![1.0 / head.len() as f64; head.len()]
        }
    }

    /// Zero-based position drawn by inverse CDF from `u ∈ [0,1)`, over a list
    /// of `len` entries (renormalized when shorter than the distribution).
    pub fn position_for(&self, len: usize, u: f64) -> usize {
        let probs = self.truncated(len);
        let mut cumulative = 0.0;
        let mut last_positive = 0;
        for (i, p) in probs.iter().enumerate() {
            if *p > 0.0 {
                last_positive = i;
            }
            cumulative += p;
            if u < cumulative {
                return i;
            }
        }
        last_positive
    }

    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> usize {
        self.position_for(len, rng.random::<f64>())
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.probs.windows(2).all(|w| w[0] >= w[1])
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.probs.windows(2).all(|w| w[0] <= w[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialDemandKind {
    FrontPage,
    SearchBar,
}

/// Where sessions start: a uniform pick over a seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDemand {
    pub kind: InitialDemandKind,
    pub seeds: Vec<ItemId>,
}

impl InitialDemand {
    /// The `size` most popular items as reported by the provider.
    pub fn front_page<P: RelationProvider + ?Sized>(provider: &P, size: usize) -> Result<Self, DemandError> {
        let seeds = provider.top_popular(size)?;
        if seeds.is_empty() {
            return Err(DemandError::NoSeeds);
        }
        Ok(Self {
            kind: InitialDemandKind::FrontPage,
            seeds,
        })
    }

    /// An externally supplied keyword-seeded list.
    pub fn search_bar(seeds: Vec<ItemId>) -> Result<Self, DemandError> {
        if seeds.is_empty() {
            return Err(DemandError::NoSeeds);
        }
        Ok(Self {
            kind: InitialDemandKind::SearchBar,
            seeds,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &ItemId {
        &self.seeds[rng.random_range(0..self.seeds.len())]
    }
}

/// Anything that can produce the list shown while an item is watched.
pub trait Recommend {
    fn recommend_for(&self, item: &ItemId) -> Result<RecommendationList, CabaretError>;
}

/// Which list generator a scenario uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecommenderStrategy {
    /// The provider's own top-N related list.
    Baseline,
    /// Cache-aware assembly over a BFS exploration.
    Cabaret(BfsSchedule),
    /// Cache-aware reordering of the top-N related list only.
    ReorderOnly,
}

impl RecommenderStrategy {
    /// The exploration schedule whose lists the cache-aware assembly draws from.
    pub fn schedule(&self, n: usize) -> Option<BfsSchedule> {
        match self {
            Self::Baseline => None,
            Self::Cabaret(s) => Some(s.clone()),
            Self::ReorderOnly => Some(BfsSchedule::classic(n, 1).expect("n >= 1")),
        }
    }
}

/// Memoizing recommender over a shared provider and cache.
pub struct Recommender<'a, P: ?Sized> {
    provider: &'a P,
    strategy: RecommenderStrategy,
    n: usize,
    cache: &'a CacheSet,
    memo: RwLock<HashMap<ItemId, RecommendationList>>,
}

impl<'a, P: RelationProvider + ?Sized> Recommender<'a, P> {
    pub fn new(provider: &'a P, strategy: RecommenderStrategy, n: usize, cache: &'a CacheSet) -> Result<Self, CabaretError> {
        if n == 0 {
            return Err(CabaretError::ZeroLength);
        }
        Ok(Self {
            provider,
            strategy,
            n,
            cache,
            memo: RwLock::new(HashMap::new()),
        })
    }

    pub fn list_length(&self) -> usize {
        self.n
    }

    fn compute(&self, item: &ItemId) -> Result<RecommendationList, CabaretError> {
        match &self.strategy {
            RecommenderStrategy::Baseline => {
                let related = self
                    .provider
                    .related(item, self.n)
                    .map_err(|source| CabaretError::Provider { source, requests_issued: 0 })?;
                Ok(RecommendationList::flagged(related.into_iter().take(self.n), self.cache))
            }
            strategy => {
                let schedule = strategy.schedule(self.n).expect("cache-aware strategies carry a schedule");
                cabaret::recommend(self.provider, item, self.n, self.cache, &schedule)
            }
        }
    }
}

impl<P: RelationProvider + ?Sized> Recommend for Recommender<'_, P> {
    fn recommend_for(&self, item: &ItemId) -> Result<RecommendationList, CabaretError> {
        if let Some(hit) = self.memo.read().unwrap_or_else(|p| p.into_inner()).get(item) {
            return Ok(hit.clone());
        }
        let list = self.compute(item)?;
        self.memo
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(item.clone(), list.clone());
        Ok(list)
    }
}

/// Per-session generator derived from the master seed and the session index,
/// independent of execution order.
pub fn session_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// One viewing session of `requests` items: a seed pick, then `requests - 1`
/// position-based selections from the presented lists.
///
/// An empty list ends the session early with `truncated` set.
pub fn simulate_session<R: Recommend + ?Sized, G: Rng + ?Sized>(
    recommender: &R,
    initial: &InitialDemand,
    positions: &PositionDistribution,
    requests: usize,
    rng: &mut G,
) -> Result<SessionTrace, DemandError> {
    if requests < 2 {
        return Err(DemandError::TooFewRequests(requests));
    }
    if initial.seeds.is_empty() {
        return Err(DemandError::NoSeeds);
    }
    let first = initial.sample(rng).clone();
    let mut trace = SessionTrace::new(first.clone(), requests);
    let mut current = first;
    for _ in 2..=requests {
        let list = recommender.recommend_for(&current)?;
        if list.is_empty() {
            trace.truncated = true;
            break;
        }
        let position = positions.sample(list.len(), rng);
        let chosen = list.entries[position].clone();
        trace.steps.push(SessionStep {
            presented: list.entries,
            position: position + 1,
            selected: chosen.item.clone(),
            cached: chosen.cached,
            baseline: None,
            degraded: false,
            timestamp: None,
        });
        current = chosen.item;
    }
    Ok(trace)
}

/// Session `index` of a batch seeded with `master_seed`.
pub fn simulate_indexed<R: Recommend + ?Sized>(
    recommender: &R,
    initial: &InitialDemand,
    positions: &PositionDistribution,
    requests: usize,
    master_seed: u64,
    index: u64,
) -> Result<SessionTrace, DemandError> {
    let mut rng = session_rng(master_seed, index);
    let mut trace = simulate_session(recommender, initial, positions, requests, &mut rng)?;
    trace.session = index.to_string();
    trace.seed = Some(master_seed);
    Ok(trace)
}

/// `sessions` independent traces, in session-index order.
pub fn simulate_batch<R: Recommend + Sync + ?Sized>(
    recommender: &R,
    initial: &InitialDemand,
    positions: &PositionDistribution,
    requests: usize,
    sessions: usize,
    master_seed: u64,
) -> Result<Vec<SessionTrace>, DemandError> {
    (0..sessions as u64)
        .into_par_iter()
        .map(|i| simulate_indexed(recommender, initial, positions, requests, master_seed, i))
        .collect()
}

/// Runs every session described by a scenario configuration.
pub fn run_demand(config: &ScenarioConfig) -> Result<Vec<SessionTrace>, DemandError> {
    let scenario = config.resolve()?;
    scenario.simulate()
}
