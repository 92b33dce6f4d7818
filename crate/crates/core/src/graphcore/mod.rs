//! Content catalog, the black-box relation provider contract, synthetic
//! catalog generation, the JSON Lines interchange format and the remote
//! recommender adapter.

mod catalog;
mod interchange;
mod remote;
mod synthetic;

pub use catalog::{CacheSet, CostVector, GraphError, ItemId, RelationGraph};
pub use interchange::{load_graph, parse_graph, save_graph, write_graph, InterchangeError};
pub use remote::{
    AdapterConfig, FixtureTransport, HttpTransport, RemoteAdapter, RemoteError, RemoteRequest,
    Transport, TransportError,
};
pub use synthetic::{generate_synthetic, synthesize, SyntheticCatalog, SyntheticError};

use thiserror::Error;

/// Hard cap the upstream recommender applies to any single list.
pub const PROVIDER_MAX_LIST: usize = 50;

/// How expensive a single provider call is expected to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatencyClass {
    InMemory,
    Disk,
    Network,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("unknown item id {0}")]
    UnknownItem(ItemId),
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

/// Black-box access to a recommender's related-item lists.
///
/// Implementations must truncate every answer to the requested length.
pub trait RelationProvider {
    /// Up to `width` items related to `item`, in the recommender's order.
    fn related(&self, item: &ItemId, width: usize) -> Result<Vec<ItemId>, ProviderError>;

    /// Up to `count` most popular items, most popular first.
    fn top_popular(&self, count: usize) -> Result<Vec<ItemId>, ProviderError>;

    /// Remaining request budget, `None` when unmetered.
    fn quota_remaining(&self) -> Option<u64> {
        None
    }

    fn latency_class(&self) -> LatencyClass {
        LatencyClass::InMemory
    }
}

impl<P: RelationProvider + ?Sized> RelationProvider for &P {
    fn related(&self, item: &ItemId, width: usize) -> Result<Vec<ItemId>, ProviderError> {
        (**self).related(item, width)
    }

    fn top_popular(&self, count: usize) -> Result<Vec<ItemId>, ProviderError> {
        (**self).top_popular(count)
    }

    fn quota_remaining(&self) -> Option<u64> {
        (**self).quota_remaining()
    }

    fn latency_class(&self) -> LatencyClass {
        (**self).latency_class()
    }
}

impl<P: RelationProvider + ?Sized> RelationProvider for std::sync::Arc<P> {
    fn related(&self, item: &ItemId, width: usize) -> Result<Vec<ItemId>, ProviderError> {
        (**self).related(item, width)
    }

    fn top_popular(&self, count: usize) -> Result<Vec<ItemId>, ProviderError> {
        (**self).top_popular(count)
    }

    fn quota_remaining(&self) -> Option<u64> {
        (**self).quota_remaining()
    }

    fn latency_class(&self) -> LatencyClass {
        (**self).latency_class()
    }
}

impl RelationProvider for RelationGraph {
    fn related(&self, item: &ItemId, width: usize) -> Result<Vec<ItemId>, ProviderError> {
        RelationGraph::related(self, item, width)
            .map(<[ItemId]>::to_vec)
            .ok_or_else(|| ProviderError::UnknownItem(item.clone()))
    }

    fn top_popular(&self, count: usize) -> Result<Vec<ItemId>, ProviderError> {
        Ok(RelationGraph::top_popular(self, count))
    }
}
