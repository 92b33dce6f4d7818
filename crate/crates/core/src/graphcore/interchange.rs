//! JSON Lines interchange format.
//!
//! One record per item, `{"id": "...", "q": 0.1, "related": ["...", ...]}`,
//! optionally preceded by a header record `{"region": "..."}`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::catalog::{CatalogEntry, GraphError, ItemId, RelationGraph};

#[derive(Debug, Error)]
pub enum InterchangeError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate entry for item {id}")]
    Duplicate { line: usize, id: ItemId },
    #[error("invalid graph: {0}")]
    Invalid(#[from] GraphError),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderRecord {
    region: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemRecord {
    id: ItemId,
    q: f64,
    related: Vec<ItemId>,
}

#[derive(Serialize)]
struct ItemRecordRef<'a> {
    id: &'a ItemId,
    q: f64,
    related: &'a [ItemId],
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<RelationGraph, InterchangeError> {
    parse_graph(BufReader::new(File::open(path)?))
}

pub fn parse_graph(reader: impl BufRead) -> Result<RelationGraph, InterchangeError> {
    let mut region = None;
    let mut entries = BTreeMap::new();
    let mut seen_item = false;
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| InterchangeError::Parse {
            line: line_no,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if value.get("id").is_none() {
            if seen_item || region.is_some() {
                return Err(parse_err("header record must come first".into()));
            }
            let header: HeaderRecord =
                serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
            region = Some(header.region);
            continue;
        }
        let record: ItemRecord =
            serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
        if record.id.as_str().is_empty() || record.related.iter().any(|r| r.as_str().is_empty()) {
            return Err(parse_err("empty item id".into()));
        }
        if !record.q.is_finite() || record.q < 0.0 {
            return Err(parse_err(format!("invalid popularity {}", record.q)));
        }
        seen_item = true;
        if entries.contains_key(&record.id) {
            return Err(InterchangeError::Duplicate {
                line: line_no,
                id: record.id,
            });
        }
        entries.insert(
            record.id,
            CatalogEntry {
                popularity: record.q,
                related: record.related,
            },
        );
    }
    Ok(RelationGraph::from_entries(region, entries)?)
}

pub fn save_graph(graph: &RelationGraph, path: impl AsRef<Path>) -> Result<(), InterchangeError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_graph(graph, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_graph(graph: &RelationGraph, mut out: impl Write) -> io::Result<()> {
    if let Some(region) = graph.region() {
        serde_json::to_writer(&mut out, &HeaderRecord { region: region.to_owned() })?;
        out.write_all(b"\n")?;
    }
    for (id, entry) in graph.entries() {
        let record = ItemRecordRef {
            id,
            q: entry.popularity,
            related: &entry.related,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
