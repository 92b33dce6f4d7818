//! Session lifecycle independent of HTTP: create, recommend, record, export.
//!
//! A session watches [`SESSION_LENGTH`] items. While item `k < 5` plays, a list of
//! [`LIST_SIZE`] recommendations is shown and the participant rates item `k` and picks
//! the next item from the list. Item 5 is rated without a list, which closes the session.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use cabaret_core::cabaret::{recommend, RecommendationList, Recommended};
use cabaret_core::demand::{session_rng, write_traces, Ratings, SessionStep, SessionTrace};
use cabaret_core::graphcore::ItemId;
use chrono::{DateTime, SecondsFormat, Utc};
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::config::{ExperimentConfig, Region, LIST_SIZE, SESSION_LENGTH};
use crate::store::{Event, EventLog, StoreError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error("unknown region {0}")]
    UnknownRegion(String),
    #[error("unknown session")]
    UnknownSession,
    #[error("the session is finished")]
    SessionFinished,
    #[error("{0}")]
    InvalidCurrent(String),
    #[error("recommendations for step {0} have not been requested")]
    RecommendationsRequired(usize),
    #[error("{0}")]
    InvalidPosition(String),
    #[error("{0}")]
    InvalidRatings(String),
    #[error("{0}")]
    StepConflict(String),
    #[error("recommendation provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("admin credential rejected")]
    Unauthorized,
    #[error("storage failure: {0}")]
    Storage(String),
}

impl ServiceError {
    /// Machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::UnknownRegion(_) => "unknown_region",
            Self::UnknownSession => "unknown_session",
            Self::SessionFinished => "session_finished",
            Self::InvalidCurrent(_) => "invalid_current",
            Self::RecommendationsRequired(_) => "recommendations_required",
            Self::InvalidPosition(_) => "invalid_position",
            Self::InvalidRatings(_) => "invalid_ratings",
            Self::StepConflict(_) => "step_conflict",
            Self::ProviderUnavailable(_) => "provider_unavailable",
            Self::Unauthorized => "unauthorized",
            Self::Storage(_) => "storage",
        }
    }

    /// HTTP status for the error.
    pub fn status(&self) -> u16 {
        match self {
            Self::UnknownRegion(_) | Self::UnknownSession => 404,
            Self::InvalidCurrent(_) | Self::InvalidPosition(_) | Self::InvalidRatings(_) => 400,
            Self::SessionFinished | Self::RecommendationsRequired(_) | Self::StepConflict(_) => 409,
            Self::Unauthorized => 401,
            Self::ProviderUnavailable(_) => 503,
            Self::Storage(_) => 500,
        }
    }
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        Self::Storage(e.to_string())
    }
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Clone)]
pub struct ServiceOptions {
    pub admin_token: String,
    /// Seeds the per-session trending draw; session `i` uses stream `i`.
    pub seed: Option<u64>,
    pub clock: Clock,
}

impl ServiceOptions {
    pub fn new(admin_token: impl Into<String>) -> Self {
        Self { admin_token: admin_token.into(), seed: None, clock: Arc::new(Utc::now) }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub token: String,
    pub initial: Vec<ItemId>,
}

/// What the participant sees: ids only, never cached flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShownList {
    pub step: usize,
    pub items: Vec<ItemId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSubmission {
    /// Step being answered; lets retries be recognized after the counter moved on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    /// One-based pick from the shown list; absent on the last step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    pub ratings: Ratings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAck {
    pub step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<ItemId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_step: Option<usize>,
    pub finished: bool,
}

#[derive(Debug, Clone)]
struct Served {
    current: ItemId,
    presented: Vec<Recommended>,
    baseline: Vec<ItemId>,
    degraded: bool,
}

#[derive(Debug, Clone)]
struct Record {
    position: Option<usize>,
    ratings: Ratings,
    at: String,
}

#[derive(Debug, Clone)]
struct Session {
    id: String,
    region: String,
    initial: Vec<ItemId>,
    created_at: String,
    /// `served[k - 1]` is the list shown at step `k`.
    served: Vec<Served>,
    /// `records[k - 1]` answers step `k`.
    records: Vec<Record>,
}

impl Session {
    fn step(&self) -> usize {
        self.records.len() + 1
    }

    fn closed(&self) -> bool {
        self.records.len() >= SESSION_LENGTH
    }

    /// Item picked at step `k`, i.e. the one watched at step `k + 1`.
    fn selected(&self, k: usize) -> Option<&ItemId> {
        let position = self.records.get(k - 1)?.position?;
        Some(&self.served.get(k - 1)?.presented.get(position - 1)?.item)
    }

    fn ack(&self, k: usize) -> StepAck {
        StepAck {
            step: k,
            selected: self.selected(k).cloned(),
            next_step: (k < SESSION_LENGTH).then_some(k + 1),
            finished: k >= SESSION_LENGTH,
        }
    }

    fn apply(&mut self, event: &Event) {
        match event {
            Event::Served { current, presented, baseline, degraded, .. } => self.served.push(Served {
                current: current.clone(),
                presented: presented.clone(),
                baseline: baseline.clone(),
                degraded: *degraded,
            }),
            Event::Recorded { position, ratings, at, .. } => self.records.push(Record {
                position: *position,
                ratings: *ratings,
                at: at.clone(),
            }),
            Event::Created { .. } | Event::Closed { .. } => {}
        }
    }

    fn trace(&self) -> Option<SessionTrace> {
        let initial = self.served.first()?.current.clone();
        let mut trace = SessionTrace::new(initial, SESSION_LENGTH);
        trace.session = self.id.clone();
        trace.region = Some(self.region.clone());
        trace.started_at = Some(self.created_at.clone());
        for k in 1..SESSION_LENGTH {
            let (Some(served), Some(record)) = (self.served.get(k - 1), self.records.get(k - 1)) else { break };
            let Some(position) = record.position else { break };
            let picked = &served.presented[position - 1];
            trace.steps.push(SessionStep {
                presented: served.presented.clone(),
                position,
                selected: picked.item.clone(),
                cached: picked.cached,
                baseline: Some(served.baseline.clone()),
                degraded: served.degraded,
                timestamp: Some(record.at.clone()),
            });
        }
        trace.ratings = self.records.iter().map(|r| r.ratings).collect();
        // abandoned sessions export as truncated
        trace.truncated = !self.closed();
        Some(trace)
    }
}

#[derive(Default)]
struct Table {
    sessions: HashMap<String, Arc<Mutex<Session>>>,
    /// Tokens in creation order.
    order: Vec<String>,
}

/// The experiment service state. Sessions are isolated behind their own locks;
/// the session table is only write-locked to insert.
pub struct Experiment {
    config: ExperimentConfig,
    options: ServiceOptions,
    table: RwLock<Table>,
    log: Mutex<EventLog>,
}

impl Experiment {
    /// A service that keeps its log in memory only.
    pub fn in_memory(config: ExperimentConfig, options: ServiceOptions) -> Self {
        Self { config, options, table: RwLock::new(Table::default()), log: Mutex::new(EventLog::memory()) }
    }

    /// Opens or creates the log under `data_dir` and rebuilds every session from it.
    pub fn open(config: ExperimentConfig, options: ServiceOptions, data_dir: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let (log, events) = EventLog::open(data_dir)?;
        let mut table = Table::default();
        for event in &events {
            match event {
                Event::Created { session, token, region, initial, at } => {
                    table.order.push(token.clone());
                    let s = Session {
                        id: session.clone(),
                        region: region.clone(),
                        initial: initial.clone(),
                        created_at: at.clone(),
                        served: Vec::new(),
                        records: Vec::new(),
                    };
                    table.sessions.insert(token.clone(), Arc::new(Mutex::new(s)));
                }
                Event::Served { token, .. } | Event::Recorded { token, .. } | Event::Closed { token, .. } => {
                    let s = table
                        .sessions
                        .get(token)
                        .ok_or_else(|| ServiceError::Storage(format!("event for unknown session {token}")))?;
                    s.lock().expect("session lock").apply(event);
                }
            }
        }
        Ok(Self { config, options, table: RwLock::new(table), log: Mutex::new(log) })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn regions(&self) -> Vec<String> {
        self.config.regions.iter().map(|r| r.name.clone()).collect()
    }

    pub fn session_count(&self) -> usize {
        self.table.read().expect("table lock").order.len()
    }

    fn now(&self) -> String {
        (self.options.clock)().to_rfc3339_opts(SecondsFormat::Millis, true)
    }

    fn append(&self, event: &Event) -> Result<(), ServiceError> {
        self.log.lock().expect("log lock").append(event)?;
        Ok(())
    }

    fn session(&self, token: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        self.table.read().expect("table lock").sessions.get(token).cloned().ok_or(ServiceError::UnknownSession)
    }

    fn region(&self, name: &str) -> Result<&Region, ServiceError> {
        self.config.region(name).ok_or_else(|| ServiceError::UnknownRegion(name.to_owned()))
    }

    /// Opens a session with `initial_size` distinct items drawn from the region's trending list.
    pub fn create_session(&self, region: &str) -> Result<CreatedSession, ServiceError> {
        let r = self.region(region)?;
        let token = Uuid::new_v4().simple().to_string();
        // the table write lock orders creation, which fixes the seeded stream index
        let mut table = self.table.write().expect("table lock");
        let initial: Vec<ItemId> = match self.options.seed {
            Some(seed) => {
                let mut rng = session_rng(seed, table.order.len() as u64);
                r.trending.choose_multiple(&mut rng, self.config.initial_size).cloned().collect()
            }
            None => r.trending.choose_multiple(&mut rand::rng(), self.config.initial_size).cloned().collect(),
        };
        let event = Event::Created {
            session: Uuid::new_v4().to_string(),
            token: token.clone(),
            region: region.to_owned(),
            initial: initial.clone(),
            at: self.now(),
        };
        self.append(&event)?;
        let Event::Created { session, at, .. } = event else { unreachable!() };
        table.order.push(token.clone());
        table.sessions.insert(
            token.clone(),
            Arc::new(Mutex::new(Session {
                id: session,
                region: region.to_owned(),
                initial: initial.clone(),
                created_at: at,
                served: Vec::new(),
                records: Vec::new(),
            })),
        );
        Ok(CreatedSession { token, initial })
    }

    /// The list for the current step, computed once and then replayed.
    ///
    /// `current` must be one of the initial items at step 1 and the previous pick afterwards.
    pub fn recommendations(&self, token: &str, current: &ItemId) -> Result<ShownList, ServiceError> {
        let handle = self.session(token)?;
        let mut s = handle.lock().expect("session lock");
        let step = s.step();
        if step >= SESSION_LENGTH {
            return Err(ServiceError::SessionFinished);
        }
        let expected = if step == 1 {
            s.initial.contains(current).then(|| current.clone())
        } else {
            s.selected(step - 1).cloned()
        };
        if expected.as_ref() != Some(current) {
            return Err(ServiceError::InvalidCurrent(match (step, expected) {
                (1, _) => format!("{} is not in the initial list", current.as_str()),
                (_, Some(e)) => format!("step {step} plays {}, not {}", e.as_str(), current.as_str()),
                (_, None) => format!("step {step} has no selected item"),
            }));
        }
        if let Some(served) = s.served.get(step - 1) {
            return Ok(ShownList { step, items: served.presented.iter().map(|r| r.item.clone()).collect() });
        }
        let region = self.region(&s.region)?;
        let baseline = region
            .provider
            .related(current, LIST_SIZE)
            .map_err(|e| ServiceError::ProviderUnavailable(e.to_string()))?;
        let (presented, degraded) =
            match recommend(region.provider.as_ref(), current, LIST_SIZE, &region.cache, &self.config.schedule) {
                Ok(list) => (list.entries, false),
                Err(_) => (RecommendationList::flagged(baseline.clone(), &region.cache).entries, true),
            };
        let event = Event::Served {
            token: token.to_owned(),
            step,
            current: current.clone(),
            presented,
            baseline,
            degraded,
            at: self.now(),
        };
        self.append(&event)?;
        s.apply(&event);
        let served = s.served.last().expect("just pushed");
        Ok(ShownList { step, items: served.presented.iter().map(|r| r.item.clone()).collect() })
    }

    /// Stores the ratings of the item playing at this step and, before the last step, the pick.
    ///
    /// A resubmission identical to a stored step returns the original ack; a different one
    /// for an answered step is a conflict.
    pub fn record_step(&self, token: &str, submission: &StepSubmission) -> Result<StepAck, ServiceError> {
        let handle = self.session(token)?;
        let mut s = handle.lock().expect("session lock");
        let answered = s.records.len();
        let target = match submission.step {
            Some(k) if k == 0 || k > SESSION_LENGTH => {
                return Err(ServiceError::StepConflict(format!("step {k} is outside 1..={SESSION_LENGTH}")))
            }
            Some(k) if k <= answered => return replay(&s, k, submission),
            Some(k) if k > answered + 1 => {
                return Err(ServiceError::StepConflict(format!("step {k} submitted while step {} is open", answered + 1)))
            }
            Some(k) => k,
            None => {
                // the next answer cannot look like this one until its list has been served
                let unambiguous = s.closed() || answered + 1 == SESSION_LENGTH || s.served.len() <= answered;
                if unambiguous && answered > 0 && same_answer(&s.records[answered - 1], submission) {
                    return Ok(s.ack(answered));
                }
                answered + 1
            }
        };
        if s.closed() {
            return Err(ServiceError::SessionFinished);
        }
        let ratings = submission.ratings;
        if !ratings.in_range() {
            return Err(ServiceError::InvalidRatings("ratings must be within 1..=5".into()));
        }
        if target < SESSION_LENGTH {
            let Some(served) = s.served.get(target - 1) else {
                return Err(ServiceError::RecommendationsRequired(target));
            };
            let len = served.presented.len();
            match submission.position {
                Some(p) if (1..=len).contains(&p) => {}
                Some(p) => return Err(ServiceError::InvalidPosition(format!("position {p} is outside 1..={len}"))),
                None => return Err(ServiceError::InvalidPosition(format!("step {target} needs a position"))),
            }
            if ratings.qor.is_none() {
                return Err(ServiceError::InvalidRatings(format!("step {target} needs a list rating (qor)")));
            }
        } else {
            if submission.position.is_some() {
                return Err(ServiceError::InvalidPosition("the last step shows no list".into()));
            }
            if ratings.qor.is_some() {
                return Err(ServiceError::InvalidRatings("the last step shows no list to rate (qor)".into()));
            }
        }
        let event = Event::Recorded { token: token.to_owned(), step: target, position: submission.position, ratings, at: self.now() };
        self.append(&event)?;
        s.apply(&event);
        if s.closed() {
            let cached_selections = (1..SESSION_LENGTH)
                .filter(|&k| {
                    let pick = s.records[k - 1].position.expect("recorded above");
                    s.served[k - 1].presented[pick - 1].cached
                })
                .count();
            self.append(&Event::Closed { token: token.to_owned(), steps: SESSION_LENGTH, cached_selections, at: self.now() })?;
        }
        Ok(s.ack(target))
    }

    fn check_admin(&self, credential: &str) -> Result<(), ServiceError> {
        let want = self.options.admin_token.as_bytes();
        let got = credential.as_bytes();
        let same = want.len() == got.len() && want.iter().zip(got).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0;
        if same && !want.is_empty() {
            Ok(())
        } else {
            Err(ServiceError::Unauthorized)
        }
    }

    /// Every session that has started watching, in creation order.
    pub fn export(&self, credential: &str) -> Result<Vec<SessionTrace>, ServiceError> {
        self.check_admin(credential)?;
        let table = self.table.read().expect("table lock");
        Ok(table
            .order
            .iter()
            .filter_map(|t| table.sessions[t].lock().expect("session lock").trace())
            .collect())
    }

    /// [`Experiment::export`] rendered in the trace file format.
    pub fn export_jsonl(&self, credential: &str) -> Result<Vec<u8>, ServiceError> {
        let traces = self.export(credential)?;
        let mut out = Vec::new();
        write_traces(&traces, &mut out).map_err(|e| ServiceError::Storage(e.to_string()))?;
        Ok(out)
    }
}

fn same_answer(record: &Record, submission: &StepSubmission) -> bool {
    record.position == submission.position && record.ratings == submission.ratings
}

fn replay(s: &Session, k: usize, submission: &StepSubmission) -> Result<StepAck, ServiceError> {
    if same_answer(&s.records[k - 1], submission) {
        Ok(s.ack(k))
    } else {
        Err(ServiceError::StepConflict(format!("step {k} was already recorded with different values")))
    }
}
