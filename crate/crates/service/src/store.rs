//! Append-only event log. The in-memory session table is derived from it by replay.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use cabaret_core::cabaret::Recommended;
use cabaret_core::demand::Ratings;
use cabaret_core::graphcore::ItemId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LOG_FILE: &str = "events.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        session: String,
        token: String,
        region: String,
        initial: Vec<ItemId>,
        at: String,
    },
    Served {
        token: String,
        step: usize,
        current: ItemId,
        presented: Vec<Recommended>,
        baseline: Vec<ItemId>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        degraded: bool,
        at: String,
    },
    Recorded {
        token: String,
        step: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        position: Option<usize>,
        ratings: Ratings,
        at: String,
    },
    /// Summary row written when the last item is rated.
    Closed {
        token: String,
        steps: usize,
        cached_selections: usize,
        at: String,
    },
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("event log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("event log {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

/// Writes one JSON event per line and flushes each append.
#[derive(Debug)]
pub struct EventLog {
    path: Option<PathBuf>,
    file: Option<File>,
}

impl EventLog {
    /// A log that keeps nothing on disk.
    pub fn memory() -> Self {
        Self { path: None, file: None }
    }

    /// Opens `dir/events.jsonl` for appending and returns the events already in it.
    ///
    /// A final line without a newline is a torn write and is dropped; any other
    /// unparsable line is an error.
    pub fn open(dir: impl AsRef<Path>) -> Result<(Self, Vec<Event>), StoreError> {
        let dir = dir.as_ref();
        let path = dir.join(LOG_FILE);
        let io_err = |source| StoreError::Io { path: path.clone(), source };
        std::fs::create_dir_all(dir).map_err(io_err)?;
        let mut events = Vec::new();
        let mut valid_len = 0u64;
        if path.exists() {
            let mut reader = BufReader::new(File::open(&path).map_err(io_err)?);
            let mut line = String::new();
            let mut number = 0;
            loop {
                line.clear();
                let read = reader.read_line(&mut line).map_err(io_err)?;
                if read == 0 {
                    break;
                }
                number += 1;
                let complete = line.ends_with('\n');
                match serde_json::from_str::<Event>(line.trim_end()) {
                    Ok(event) if complete => {
                        events.push(event);
                        valid_len += read as u64;
                    }
                    _ if !complete => break,
                    Ok(_) => unreachable!("complete lines are handled above"),
                    Err(e) => {
                        return Err(StoreError::Corrupt { path: path.clone(), line: number, message: e.to_string() });
                    }
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err)?;
        file.set_len(valid_len).map_err(io_err)?;
        Ok((Self { path: Some(path), file: Some(file) }, events))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&mut self, event: &Event) -> Result<(), StoreError> {
        let Some(file) = &mut self.file else { return Ok(()) };
        let mut line = serde_json::to_vec(event).expect("events serialize");
        line.push(b'\n');
        let path = self.path.clone().unwrap_or_default();
        file.write_all(&line).and_then(|()| file.flush()).map_err(|source| StoreError::Io { path, source })
    }
}
