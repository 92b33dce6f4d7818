//! Adapter for a live recommender API behind the [`RelationProvider`] contract.
//!
//! Responses are JSON documents `{"items": ["id", ...]}`. Each distinct
//! request is answered from the on-disk response cache when possible; a cache
//! miss spends one unit of quota per transport attempt.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use super::catalog::ItemId;
use super::{LatencyClass, ProviderError, RelationProvider, PROVIDER_MAX_LIST};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RemoteRequest {
    Related { item: ItemId, width: usize },
    Popular { count: usize },
}

impl RemoteRequest {
    /// File name of the cached response for this request.
    pub fn cache_key(&self) -> String {
        match self {
            Self::Related { item, width } => {
                format!("related_{}_{}.json", hex::encode(item.as_str()), width)
            }
            Self::Popular { count } => format!("popular_{count}.json"),
        }
    }

    fn limit(&self) -> usize {
        match self {
            Self::Related { width, .. } => *width,
            Self::Popular { count } => *count,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("rate limited")]
    RateLimited,
    #[error("{0}")]
    Failed(String),
}

/// Moves one request to the remote service and returns the raw body.
pub trait Transport: Send + Sync {
    fn fetch(&self, request: &RemoteRequest) -> Result<String, TransportError>;
}

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("request quota of {budget} exhausted")]
    QuotaExhausted { budget: u64 },
    #[error("still rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("response cache: {0}")]
    Cache(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct AdapterConfig {
    pub endpoint: String,
    pub credential: String,
    /// Transport attempts allowed over the adapter's lifetime.
    pub quota: u64,
    pub cache_dir: PathBuf,
    pub max_retries: u32,
    /// First backoff delay; doubles on every retry.
    pub backoff: Duration,
}

impl AdapterConfig {
    pub fn new(endpoint: impl Into<String>, credential: impl Into<String>, quota: u64, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            endpoint: endpoint.into(),
            credential: credential.into(),
            quota,
            cache_dir: cache_dir.into(),
            max_retries: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Deserialize)]
struct ListResponse {
    items: Vec<String>,
}

pub struct RemoteAdapter<T> {
    config: AdapterConfig,
    transport: T,
    spent: AtomicU64,
    write_lock: Mutex<()>,
}

impl RemoteAdapter<HttpTransport> {
    pub fn http(config: AdapterConfig) -> Self {
        let transport = HttpTransport::new(config.endpoint.clone(), config.credential.clone());
        Self::new(config, transport)
    }
}

impl<T: Transport> RemoteAdapter<T> {
    pub fn new(config: AdapterConfig, transport: T) -> Self {
        Self {
            config,
            transport,
            spent: AtomicU64::new(0),
            write_lock: Mutex::new(()),
        }
    }

    pub fn quota_spent(&self) -> u64 {
        self.spent.load(Ordering::SeqCst)
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn fetch_related_remote(&self, item: &ItemId, width: usize) -> Result<Vec<ItemId>, RemoteError> {
        self.fetch(&RemoteRequest::Related {
            item: item.clone(),
            width,
        })
    }

    pub fn fetch(&self, request: &RemoteRequest) -> Result<Vec<ItemId>, RemoteError> {
        let path = self.config.cache_dir.join(request.cache_key());
        match fs::read_to_string(&path) {
            Ok(body) => return decode(&body, request.limit()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }

        let body = self.fetch_with_retry(request)?;
        let items = decode(&body, request.limit())?;
        self.store(&path, &body)?;
        Ok(items)
    }

    fn fetch_with_retry(&self, request: &RemoteRequest) -> Result<String, RemoteError> {
        let mut delay = self.config.backoff;
        let mut attempts = 0;
        loop {
            self.spend_quota()?;
            attempts += 1;
            match self.transport.fetch(request) {
                Ok(body) => return Ok(body),
                Err(TransportError::RateLimited) if attempts <= self.config.max_retries => {
                    thread::sleep(delay);
                    delay *= 2;
                }
                Err(TransportError::RateLimited) => return Err(RemoteError::RateLimited { attempts }),
                Err(TransportError::Failed(msg)) => return Err(RemoteError::Transport(msg)),
            }
        }
    }

    fn spend_quota(&self) -> Result<(), RemoteError> {
        let budget = self.config.quota;
        self.spent
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |spent| (spent < budget).then_some(spent + 1))
            .map(|_| ())
            .map_err(|_| RemoteError::QuotaExhausted { budget })
    }

    fn store(&self, path: &Path, body: &str) -> Result<(), RemoteError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        fs::create_dir_all(&self.config.cache_dir)?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, body)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

fn decode(body: &str, limit: usize) -> Result<Vec<ItemId>, RemoteError> {
    let response: ListResponse =
        serde_json::from_str(body).map_err(|e| RemoteError::Malformed(e.to_string()))?;
    response
        .items
        .into_iter()
        .take(limit)
        .map(|id| ItemId::new(id).map_err(|e| RemoteError::Malformed(e.to_string())))
        .collect()
}

impl<T: Transport> RelationProvider for RemoteAdapter<T> {
    fn related(&self, item: &ItemId, width: usize) -> Result<Vec<ItemId>, ProviderError> {
        Ok(self.fetch_related_remote(item, width.min(PROVIDER_MAX_LIST))?)
    }

    fn top_popular(&self, count: usize) -> Result<Vec<ItemId>, ProviderError> {
        Ok(self.fetch(&RemoteRequest::Popular {
            count: count.min(PROVIDER_MAX_LIST),
        })?)
    }

    fn quota_remaining(&self) -> Option<u64> {
        Some(self.config.quota.saturating_sub(self.quota_spent()))
    }

    fn latency_class(&self) -> LatencyClass {
        LatencyClass::Network
    }
}

/// Plain HTTP GET transport: `{endpoint}/related?id=..&max=..&key=..` and
/// `{endpoint}/popular?max=..&key=..`. HTTP 429 maps to a rate-limit signal.
pub struct HttpTransport {
    endpoint: String,
    credential: String,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, credential: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_owned(),
            credential: credential.into(),
        }
    }
}

impl Transport for HttpTransport {
    fn fetch(&self, request: &RemoteRequest) -> Result<String, TransportError> {
        let call = match request {
            RemoteRequest::Related { item, width } => ureq::get(format!("{}/related", self.endpoint))
                .query("id", item.as_str())
                .query("max", width.to_string()),
            RemoteRequest::Popular { count } => {
                ureq::get(format!("{}/popular", self.endpoint)).query("max", count.to_string())
            }
        };
        match call.query("key", &self.credential).call() {
            Ok(mut response) => response
                .body_mut()
                .read_to_string()
                .map_err(|e| TransportError::Failed(e.to_string())),
            Err(ureq::Error::StatusCode(429)) => Err(TransportError::RateLimited),
            Err(e) => Err(TransportError::Failed(e.to_string())),
        }
    }
}

/// Replays recorded response files named by [`RemoteRequest::cache_key`].
pub struct FixtureTransport {
    dir: PathBuf,
    calls: AtomicUsize,
}

impl FixtureTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for FixtureTransport {
    fn fetch(&self, request: &RemoteRequest) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let path = self.dir.join(request.cache_key());
        fs::read_to_string(&path).map_err(|e| TransportError::Failed(format!("{}: {e}", path.display())))
    }
}
