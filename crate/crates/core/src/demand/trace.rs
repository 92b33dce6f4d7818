//! Session traces and their line-delimited JSON file format (one session per line).

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cabaret::Recommended;
use crate::graphcore::ItemId;

/// Participant ratings of one watched item, each on a 1–5 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratings {
    /// Relevance of the recommendation list shown with the item.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qor: Option<u8>,
    pub interest: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qos: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qoe: Option<u8>,
}

impl Ratings {
    pub fn in_range(&self) -> bool {
        let ok = |r: u8| (1..=5).contains(&r);
        ok(self.interest) && [self.qor, self.qos, self.qoe].into_iter().flatten().all(ok)
    }
}

/// One recommendation-driven request: the list shown and what was picked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionStep {
    pub presented: Vec<Recommended>,
    /// One-based position of the selection in `presented`.
    pub position: usize,
    pub selected: ItemId,
    pub cached: bool,
    /// The provider's own list for the same item, when it was recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Vec<ItemId>>,
    /// The list was a fallback served while the provider was failing.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degraded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl SessionStep {
    pub fn cached_count(&self) -> usize {
        self.presented.iter().filter(|r| r.cached).count()
    }
}

/// A simulated or recorded viewing session. `steps[i]` is request `i + 2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub session: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    /// Planned number of requests K, including the initial one.
    pub requests: usize,
    pub initial: ItemId,
    pub steps: Vec<SessionStep>,
    /// An empty recommendation list ended the session early.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
    /// Per watched item, starting with the initial one (real sessions only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ratings: Vec<Ratings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<String>,
}

impl SessionTrace {
    pub fn new(initial: ItemId, requests: usize) -> Self {
        Self {
            session: String::new(),
            seed: None,
            region: None,
            requests,
            initial,
            steps: Vec::new(),
            truncated: false,
            ratings: Vec::new(),
            started_at: None,
        }
    }

    /// Item requested at step `k` (1-based, `k = 1` is the initial request).
    pub fn request(&self, k: usize) -> Option<&ItemId> {
        match k {
            0 => None,
            1 => Some(&self.initial),
            k => self.steps.get(k - 2).map(|s| &s.selected),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.requests < 2 {
            return Err(format!("session {}: fewer than 2 requests", self.session));
        }
        if self.steps.len() > self.requests - 1 {
            return Err(format!("session {}: more steps than requests", self.session));
        }
        if !self.truncated && self.steps.len() != self.requests - 1 {
            return Err(format!("session {}: missing steps without truncation", self.session));
        }
        for (i, step) in self.steps.iter().enumerate() {
            if step.position == 0 || step.position > step.presented.len() {
                return Err(format!("session {} step {}: position out of range", self.session, i + 2));
            }
            let picked = &step.presented[step.position - 1];
            if picked.item != step.selected || picked.cached != step.cached {
                return Err(format!("session {} step {}: selection disagrees with list", self.session, i + 2));
            }
        }
        if self.ratings.iter().any(|r| !r.in_range()) {
            return Err(format!("session {}: rating out of range", self.session));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn write_traces<'a>(traces: impl IntoIterator<Item = &'a SessionTrace>, mut out: impl Write) -> io::Result<()> {
    for trace in traces {
        serde_json::to_writer(&mut out, trace)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_traces(reader: impl BufRead) -> Result<Vec<SessionTrace>, TraceError> {
    let mut traces = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let trace: SessionTrace = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        trace
            .validate()
            .map_err(|message| TraceError::Parse { line: i + 1, message })?;
        traces.push(trace);
    }
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(items: &[(&str, bool)], position: usize) -> SessionStep {
        let presented: Vec<Recommended> = items
            .iter()
            .map(|(id, c)| Recommended { item: ItemId::from(*id), cached: *c })
            .collect();
        let picked = presented[position - 1].clone();
        SessionStep {
            presented,
            position,
            selected: picked.item,
            cached: picked.cached,
            baseline: None,
            degraded: false,
            timestamp: None,
        }
    }

    #[test]
    fn file_round_trip_and_validation() {
        let mut t = SessionTrace::new(ItemId::from("s"), 3);
        t.session = "7".into();
        t.steps.push(step(&[("a", true), ("b", false)], 2));
        t.steps.push(step(&[("c", true)], 1));
        let mut buf = Vec::new();
        write_traces([&t], &mut buf).unwrap();
        let back = read_traces(buf.as_slice()).unwrap();
        assert_eq!(back, vec![t.clone()]);
        assert_eq!(t.request(3), Some(&ItemId::from("c")));

        t.steps[0].position = 5;
        let mut buf = Vec::new();
        write_traces([&t], &mut buf).unwrap();
        assert!(matches!(read_traces(buf.as_slice()), Err(TraceError::Parse { line: 1, .. })));
    }

    #[test]
    fn ratings_range() {
        let r = Ratings { qor: Some(5), interest: 1, qos: None, qoe: Some(3) };
        assert!(r.in_range());
        assert!(!Ratings { qor: Some(6), ..r }.in_range());
        assert!(!Ratings { interest: 0, ..r }.in_range());
    }
}
