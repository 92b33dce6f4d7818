//! Cache-aware recommendations over a BFS of the baseline recommender.
//!
//! The exploration list is built by querying related-item lists breadth
//! first from the item being watched. The final list puts the cached items
//! found by the exploration first, in discovery order, and fills the rest
//! from the head of the exploration list.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphcore::{CacheSet, CostVector, ItemId, ProviderError, RelationProvider};

#[derive(Debug, Error)]
pub enum CabaretError {
    #[error("provider failed after {requests_issued} requests: {source}")]
    Provider {
        #[source]
        source: ProviderError,
        requests_issued: usize,
    },
    #[error("invalid BFS schedule: {0}")]
    InvalidSchedule(&'static str),
    #[error("recommendation list length must be positive")]
    ZeroLength,
    #[error("item {0} has no related items")]
    NoRelatedItems(ItemId),
}

/// Width of one BFS level and how many of its discoveries are expanded further.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BfsLevel {
    pub width: usize,
    /// `None` expands every item discovered at this depth.
    pub expand: Option<usize>,
}

/// Per-depth plan of the exploration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<BfsLevel>", into = "Vec<BfsLevel>")]
pub struct BfsSchedule {
    levels: Vec<BfsLevel>,
}

impl BfsSchedule {
    pub fn new(levels: Vec<BfsLevel>) -> Result<Self, CabaretError> {
        if levels.is_empty() {
            return Err(CabaretError::InvalidSchedule("depth must be at least 1"));
        }
        if levels.iter().any(|l| l.width == 0) {
            return Err(CabaretError::InvalidSchedule("widths must be at least 1"));
        }
        Ok(Self { levels })
    }

    /// The same width at every depth, every discovered item expanded.
    pub fn classic(width: usize, depth: usize) -> Result<Self, CabaretError> {
        Self::new(vec![BfsLevel { width, expand: None }; depth])
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[BfsLevel] {
        &self.levels
    }

    /// Upper bound on the exploration size, `Σ_d Π_{j≤d} width_j` with
    /// expansion caps applied.
    pub fn max_explored(&self) -> usize {
        let mut total = 0usize;
        let mut frontier = 1usize;
        for (i, level) in self.levels.iter().enumerate() {
            let discovered = frontier.saturating_mul(level.width);
            total = total.saturating_add(discovered);
            if i + 1 < self.levels.len() {
                frontier = level.expand.map_or(discovered, |e| e.min(discovered));
            }
        }
        total
    }
}

impl TryFrom<Vec<BfsLevel>> for BfsSchedule {
    type Error = CabaretError;

    fn try_from(levels: Vec<BfsLevel>) -> Result<Self, Self::Error> {
        Self::new(levels)
    }
}

impl From<BfsSchedule> for Vec<BfsLevel> {
    fn from(s: BfsSchedule) -> Self {
        s.levels
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explored {
    pub item: ItemId,
    pub depth: usize,
}

/// Ordered, deduplicated BFS output.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExplorationList {
    pub entries: Vec<Explored>,
    pub requests_issued: usize,
    pub duplicates_seen: usize,
}

impl ExplorationList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = &ItemId> {
        self.entries.iter().map(|e| &e.item)
    }

    pub fn depths(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.depth).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommended {
    pub item: ItemId,
    pub cached: bool,
}

/// Final ordered list of recommendations with per-position cached flags.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RecommendationList {
    pub entries: Vec<Recommended>,
}

impl RecommendationList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn items(&self) -> Vec<ItemId> {
        self.entries.iter().map(|r| r.item.clone()).collect()
    }

    pub fn cached_flags(&self) -> Vec<bool> {
        self.entries.iter().map(|r| r.cached).collect()
    }

    pub fn cached_count(&self) -> usize {
        self.entries.iter().filter(|r| r.cached).count()
    }

    /// Cached entries form a prefix of the list.
    pub fn has_cached_prefix(&self) -> bool {
        let cached = self.cached_count();
        self.entries.iter().take(cached).all(|r| r.cached)
    }

    /// Flags every entry against `cache`, keeping the given order.
    pub fn flagged(items: impl IntoIterator<Item = ItemId>, cache: &CacheSet) -> Self {
        Self {
            entries: items
                .into_iter()
                .map(|item| Recommended {
                    cached: cache.contains(&item),
                    item,
                })
                .collect(),
        }
    }
}

/// Breadth-first exploration of related lists starting at `source`.
///
/// Depth 1 is `related(source, width_1)`. Items discovered at depth `d` are
/// expanded in discovery order (the first `expand_d` of them, or all) with
/// `width_{d+1}`. Re-encounters of an already listed item or of the source
/// are skipped and counted as duplicates.
pub fn bfs_explore<P: RelationProvider + ?Sized>(
    provider: &P,
    source: &ItemId,
    schedule: &BfsSchedule,
) -> Result<ExplorationList, CabaretError> {
    let mut out = ExplorationList::default();
    let mut seen: HashSet<ItemId> = HashSet::new();
    seen.insert(source.clone());

    let mut frontier = vec![source.clone()];
    for (i, level) in schedule.levels().iter().enumerate() {
        let depth = i + 1;
        let mut discovered = Vec::new();
        for parent in &frontier {
            let related = provider.related(parent, level.width).map_err(|source| CabaretError::Provider {
                source,
                requests_issued: out.requests_issued,
            })?;
            out.requests_issued += 1;
            for item in related.into_iter().take(level.width) {
                if seen.insert(item.clone()) {
                    out.entries.push(Explored {
                        item: item.clone(),
                        depth,
                    });
                    discovered.push(item);
                } else {
                    out.duplicates_seen += 1;
                }
            }
        }
        if let Some(limit) = level.expand {
            discovered.truncate(limit);
        }
        frontier = discovered;
    }
    Ok(out)
}

/// Assembles the recommendation list from an exploration list: up to `n`
/// cached items in exploration order, then the head of the remaining items.
pub fn assemble(exploration: &ExplorationList, n: usize, cache: &CacheSet) -> RecommendationList {
    let mut entries: Vec<Recommended> = exploration
        .items()
        .filter(|item| cache.contains(item))
        .take(n)
        .map(|item| Recommended {
            item: item.clone(),
            cached: true,
        })
        .collect();
    let fill = n - entries.len();
    entries.extend(
        exploration
            .items()
            .filter(|item| !cache.contains(item))
            .take(fill)
            .map(|item| Recommended {
                item: item.clone(),
                cached: false,
            }),
    );
    RecommendationList { entries }
}

/// Cache-aware recommendation list of up to `n` items for `source`.
pub fn recommend<P: RelationProvider + ?Sized>(
    provider: &P,
    source: &ItemId,
    n: usize,
    cache: &CacheSet,
    schedule: &BfsSchedule,
) -> Result<RecommendationList, CabaretError> {
    if n == 0 {
        return Err(CabaretError::ZeroLength);
    }
    let exploration = bfs_explore(provider, source, schedule)?;
    Ok(assemble(&exploration, n, cache))
}

/// Picks the `n` lowest-cost items of an exploration list, ties by earlier
/// discovery. Entries cheaper than the default cost are flagged as cached.
pub fn assemble_by_cost(exploration: &ExplorationList, n: usize, costs: &CostVector) -> RecommendationList {
    let mut ranked: Vec<(f64, &ItemId)> = exploration.items().map(|id| (costs.cost(id), id)).collect();
    // stable: equal costs keep exploration order
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    RecommendationList {
        entries: ranked
            .into_iter()
            .take(n)
            .map(|(cost, item)| Recommended {
                item: item.clone(),
                cached: cost < costs.default_cost(),
            })
            .collect(),
    }
}

/// Cost-generalized recommendation: the `n` cheapest explored items.
pub fn recommend_cost<P: RelationProvider + ?Sized>(
    provider: &P,
    source: &ItemId,
    n: usize,
    costs: &CostVector,
    schedule: &BfsSchedule,
) -> Result<RecommendationList, CabaretError> {
    if n == 0 {
        return Err(CabaretError::ZeroLength);
    }
    let exploration = bfs_explore(provider, source, schedule)?;
    Ok(assemble_by_cost(&exploration, n, costs))
}

/// Fraction of the depth-1 related items rediscovered among the related lists
/// of the depth-1 items.
pub fn overlap_index<P: RelationProvider + ?Sized>(
    provider: &P,
    source: &ItemId,
    width: usize,
) -> Result<f64, CabaretError> {
    let wrap = |requests_issued| move |source| CabaretError::Provider { source, requests_issued };
    let direct = provider.related(source, width).map_err(wrap(0))?;
    if direct.is_empty() {
        return Err(CabaretError::NoRelatedItems(source.clone()));
    }
    let direct: Vec<ItemId> = direct.into_iter().take(width).collect();
    let mut indirect: HashSet<ItemId> = HashSet::new();
    for (i, item) in direct.iter().enumerate() {
        indirect.extend(provider.related(item, width).map_err(wrap(i + 1))?.into_iter().take(width));
    }
    let unique_direct: HashSet<&ItemId> = direct.iter().collect();
    let shared = unique_direct.iter().filter(|id| indirect.contains(**id)).count();
    Ok(shared as f64 / unique_direct.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationStats {
    pub requests_issued: usize,
    pub unique_returned: usize,
}

pub fn exploration_stats<'a>(runs: impl IntoIterator<Item = &'a ExplorationList>) -> Vec<ExplorationStats> {
    runs.into_iter()
        .map(|run| ExplorationStats {
            requests_issued: run.requests_issued,
            unique_returned: run.len(),
        })
        .collect()
}
