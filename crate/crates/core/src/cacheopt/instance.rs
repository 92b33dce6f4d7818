//! Optimization instances on disk: a graph in the interchange format plus a
//! JSON sidecar holding demand weights, position probabilities and the schedule.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CacheOptError, ObjectiveContext, ObjectiveMode};
use crate::cabaret::{BfsLevel, BfsSchedule};
use crate::demand::PositionDistribution;
use crate::graphcore::{load_graph, save_graph, InterchangeError, ItemId, RelationGraph};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
    #[error("graph: {0}")]
    Graph(#[from] InterchangeError),
    #[error("instance: {0}")]
    Invalid(String),
    #[error(transparent)]
    Objective(#[from] CacheOptError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandWeight {
    pub id: ItemId,
    pub q: f64,
}

/// Sidecar record. `graph` is resolved relative to the sidecar's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub graph: PathBuf,
    pub demand: Vec<DemandWeight>,
    pub positions: Vec<f64>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<BfsLevel>>,
    pub mode: ObjectiveMode,
}

impl InstanceRecord {
    pub fn demand_pairs(&self) -> Vec<(ItemId, f64)> {
        self.demand.iter().map(|d| (d.id.clone(), d.q)).collect()
    }

    /// Rebuilds the objective context from the graph.
    pub fn context(&self, graph: &RelationGraph) -> Result<ObjectiveContext, InstanceError> {
        if self.positions.len() != self.n {
            return Err(InstanceError::Invalid(format!(
                "{} position probabilities for list length {}",
                self.positions.len(),
                self.n
            )));
        }
        let positions = PositionDistribution::from_weights(&self.positions)
            .map_err(|e| InstanceError::Invalid(e.to_string()))?;
        if let Some(missing) = self.demand.iter().find(|d| !graph.contains(&d.id)) {
            return Err(InstanceError::Invalid(format!("demand item {} not in graph", missing.id)));
        }
        let demand = self.demand_pairs();
        let ctx = match self.mode {
            ObjectiveMode::CacheAware => {
                let levels = self
                    .schedule
                    .clone()
                    .ok_or_else(|| InstanceError::Invalid("cache-aware instance needs a schedule".into()))?;
                let schedule = BfsSchedule::new(levels).map_err(|e| InstanceError::Invalid(e.to_string()))?;
                ObjectiveContext::cache_aware(graph, &demand, positions, &schedule)?
            }
            ObjectiveMode::FixedOrder => ObjectiveContext::fixed_order(graph, &demand, positions)?,
        };
        Ok(ctx)
    }
}

/// Loads the sidecar at `path`, its graph, and the rebuilt context.
pub fn load_instance(path: impl AsRef<Path>) -> Result<(InstanceRecord, RelationGraph, ObjectiveContext), InstanceError> {
    let path = path.as_ref();
    let record: InstanceRecord = serde_json::from_str(&fs::read_to_string(path)?)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let graph = load_graph(base.join(&record.graph))?;
    let ctx = record.context(&graph)?;
    Ok((record, graph, ctx))
}

/// Writes `graph` next to the sidecar and the sidecar itself.
pub fn save_instance(
    path: impl AsRef<Path>,
    graph_file: &str,
    graph: &RelationGraph,
    record: &InstanceRecord,
) -> Result<(), InstanceError> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    save_graph(graph, base.join(graph_file))?;
    let mut record = record.clone();
    record.graph = PathBuf::from(graph_file);
    fs::write(path, serde_json::to_string_pretty(&record)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cacheopt::chr_objective;
    use crate::graphcore::{generate_synthetic, CacheSet};

    #[test]
    fn instance_round_trip_preserves_objective() {
        let dir = tempfile::tempdir().unwrap();
        let graph = generate_synthetic(40, 1.0, 3.0, 2).unwrap();
        let demand: Vec<DemandWeight> = graph
            .top_popular(5)
            .into_iter()
            .map(|id| DemandWeight { id, q: 0.2 })
            .collect();
        let record = InstanceRecord {
            graph: PathBuf::new(),
            demand,
            positions: vec![0.5, 0.3, 0.2],
            n: 3,
            schedule: Some(BfsSchedule::classic(3, 2).unwrap().into()),
            mode: ObjectiveMode::CacheAware,
        };
        let sidecar = dir.path().join("inst.json");
        save_instance(&sidecar, "inst.jsonl", &graph, &record).unwrap();
        let (back, g2, ctx) = load_instance(&sidecar).unwrap();
        assert_eq!(g2, graph);
        assert_eq!(back.graph, PathBuf::from("inst.jsonl"));
        let direct = record.context(&graph).unwrap();
        let cache = CacheSet::from_items(graph.top_popular(4));
        assert_eq!(chr_objective(&ctx, &cache), chr_objective(&direct, &cache));
    }
}
