use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque content identifier (a video id, a URL, a synthetic `v000123`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(String);

impl ItemId {
    pub fn new(id: impl Into<String>) -> Result<Self, GraphError> {
        let id = id.into();
        if id.is_empty() {
            return Err(GraphError::EmptyId);
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ItemId {
    /// Panics on an empty string; use [`ItemId::new`] for untrusted input.
    fn from(id: &str) -> Self {
        Self::new(id).expect("item ids must be non-empty")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("item ids must be non-empty")]
    EmptyId,
    #[error("duplicate item {0}")]
    DuplicateItem(ItemId),
    #[error("item {source_item} relates to unknown item {target}")]
    DanglingReference { source_item: ItemId, target: ItemId },
    #[error("item {0} lists itself as related")]
    SelfReference(ItemId),
    #[error("item {source_item} lists {target} more than once")]
    DuplicateRelation { source_item: ItemId, target: ItemId },
    #[error("item {0} has an invalid popularity weight")]
    InvalidPopularity(ItemId),
    #[error("popularity weights sum to {0}, expected 1")]
    PopularityNotNormalized(f64),
    #[error("cache holds {len} items but its capacity is {capacity}")]
    CacheOverCapacity { len: usize, capacity: usize },
    #[error("cache capacity must be positive")]
    ZeroCapacity,
    #[error("cost of {0} must be finite and non-negative")]
    InvalidCost(String),
}

/// Tolerance on the popularity normalization check.
const NORMALIZATION_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct CatalogEntry {
    pub(crate) popularity: f64,
    pub(crate) related: Vec<ItemId>,
}

/// Immutable catalog: per-item ordered related lists and popularity weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationGraph {
    entries: BTreeMap<ItemId, CatalogEntry>,
    region: Option<String>,
    /// Items by descending popularity, ties by id.
    by_popularity: Vec<ItemId>,
}

impl RelationGraph {
    /// Builds a catalog from `(id, popularity, related)` records, checking
    /// every structural invariant.
    pub fn new<I>(region: Option<String>, records: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (ItemId, f64, Vec<ItemId>)>,
    {
        let mut entries = BTreeMap::new();
        for (id, popularity, related) in records {
            if !popularity.is_finite() || popularity < 0.0 {
                return Err(GraphError::InvalidPopularity(id));
            }
            if entries.contains_key(&id) {
                return Err(GraphError::DuplicateItem(id));
            }
            entries.insert(id, CatalogEntry { popularity, related });
        }
        Self::from_entries(region, entries)
    }

    pub(crate) fn from_entries(
        region: Option<String>,
        entries: BTreeMap<ItemId, CatalogEntry>,
    ) -> Result<Self, GraphError> {
        for (id, entry) in &entries {
            let mut seen = HashSet::with_capacity(entry.related.len());
            for target in &entry.related {
                if target == id {
                    return Err(GraphError::SelfReference(id.clone()));
                }
                if !entries.contains_key(target) {
                    return Err(GraphError::DanglingReference {
                        source_item: id.clone(),
                        target: target.clone(),
                    });
                }
                if !seen.insert(target) {
                    return Err(GraphError::DuplicateRelation {
                        source_item: id.clone(),
                        target: target.clone(),
                    });
                }
            }
        }
        let total: f64 = entries.values().map(|e| e.popularity).sum();
        if total > 0.0 && (total - 1.0).abs() > NORMALIZATION_SLACK {
            return Err(GraphError::PopularityNotNormalized(total));
        }

        let mut by_popularity: Vec<ItemId> = entries.keys().cloned().collect();
        // BTreeMap keys are already in id order, so a stable sort keeps ties lexicographic.
        by_popularity.sort_by(|a, b| entries[b].popularity.total_cmp(&entries[a].popularity));

        Ok(Self {
            entries,
            region,
            by_popularity,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn region(&self) -> Option<&str> {
        self.region.as_deref()
    }

    pub fn contains(&self, item: &ItemId) -> bool {
        self.entries.contains_key(item)
    }

    /// Item ids in lexicographic order.
    pub fn items(&self) -> impl ExactSizeIterator<Item = &ItemId> {
        self.entries.keys()
    }

    pub fn popularity(&self, item: &ItemId) -> Option<f64> {
        self.entries.get(item).map(|e| e.popularity)
    }

    pub fn degree(&self, item: &ItemId) -> Option<usize> {
        self.entries.get(item).map(|e| e.related.len())
    }

    /// The first `min(width, degree)` entries of the stored related list.
    pub fn related(&self, item: &ItemId, width: usize) -> Option<&[ItemId]> {
        self.entries
            .get(item)
            .map(|e| &e.related[..width.min(e.related.len())])
    }

    /// The `count` most popular items, descending, ties broken by id.
    pub fn top_popular(&self, count: usize) -> Vec<ItemId> {
        self.by_popularity[..count.min(self.by_popularity.len())].to_vec()
    }

    /// Mean out-degree over the catalog.
    pub fn mean_degree(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        let edges: usize = self.entries.values().map(|e| e.related.len()).sum();
        edges as f64 / self.entries.len() as f64
    }

    pub(crate) fn entries(&self) -> &BTreeMap<ItemId, CatalogEntry> {
        &self.entries
    }
}

/// Ordered list of items deliverable at low cost.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CacheSetRecord", into = "CacheSetRecord")]
pub struct CacheSet {
    items: Vec<ItemId>,
    capacity: usize,
    members: HashSet<ItemId>,
}

#[derive(Serialize, Deserialize)]
struct CacheSetRecord {
    items: Vec<ItemId>,
    capacity: usize,
}

impl TryFrom<CacheSetRecord> for CacheSet {
    type Error = GraphError;

    fn try_from(record: CacheSetRecord) -> Result<Self, Self::Error> {
        CacheSet::new(record.items, record.capacity)
    }
}

impl From<CacheSet> for CacheSetRecord {
    fn from(cache: CacheSet) -> Self {
        Self {
            items: cache.items,
            capacity: cache.capacity,
        }
    }
}

impl CacheSet {
    /// Duplicates are dropped, keeping the first occurrence.
    pub fn new(items: impl IntoIterator<Item = ItemId>, capacity: usize) -> Result<Self, GraphError> {
        if capacity == 0 {
            return Err(GraphError::ZeroCapacity);
        }
        let mut members = HashSet::new();
        let items: Vec<ItemId> = items
            .into_iter()
            .filter(|id| members.insert(id.clone()))
            .collect();
        if items.len() > capacity {
            return Err(GraphError::CacheOverCapacity {
                len: items.len(),
                capacity,
            });
        }
        Ok(Self {
            items,
            capacity,
            members,
        })
    }

    /// A cache sized exactly to its contents (capacity at least 1).
    pub fn from_items(items: impl IntoIterator<Item = ItemId>) -> Self {
        let items: Vec<ItemId> = items.into_iter().collect();
        let capacity = items.len().max(1);
        Self::new(items, capacity).expect("capacity covers the items")
    }

    pub fn empty() -> Self {
        Self::from_items(std::iter::empty())
    }

    pub fn contains(&self, item: &ItemId) -> bool {
        self.members.contains(item)
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_subset_of(&self, other: &CacheSet) -> bool {
        self.items.iter().all(|id| other.contains(id))
    }
}

/// Per-item delivery cost with a default for unlisted items.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVector {
    costs: HashMap<ItemId, f64>,
    default_cost: f64,
}

impl CostVector {
    pub fn new(costs: HashMap<ItemId, f64>, default_cost: f64) -> Result<Self, GraphError> {
        if !default_cost.is_finite() || default_cost < 0.0 {
            return Err(GraphError::InvalidCost("default".into()));
        }
        if let Some((id, _)) = costs.iter().find(|(_, c)| !c.is_finite() || **c < 0.0) {
            return Err(GraphError::InvalidCost(id.to_string()));
        }
        Ok(Self {
            costs,
            default_cost,
        })
    }

    /// Cost 0 for cached items, 1 for everything else.
    pub fn from_cache(cache: &CacheSet) -> Self {
        Self {
            costs: cache.items().iter().map(|id| (id.clone(), 0.0)).collect(),
            default_cost: 1.0,
        }
    }

    pub fn cost(&self, item: &ItemId) -> f64 {
        self.costs.get(item).copied().unwrap_or(self.default_cost)
    }

    pub fn default_cost(&self) -> f64 {
        self.default_cost
    }
}
