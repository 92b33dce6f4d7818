use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use super::catalog::{CatalogEntry, ItemId, RelationGraph};

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("catalog must contain at least one item")]
    EmptyCatalog,
    #[error("average degree {avg_degree} exceeds the {max} other items in the catalog")]
    DegreeTooLarge { avg_degree: f64, max: usize },
    #[error("invalid generator parameter: {0}")]
    InvalidParameter(&'static str),
}

/// A generated catalog together with the popularity ranking the generator assigned.
#[derive(Debug, Clone)]
pub struct SyntheticCatalog {
    pub graph: RelationGraph,
    /// `ranking[0]` has rank 1 (the most popular item).
    pub ranking: Vec<ItemId>,
}

/// Synthetic catalog with Zipf popularity and popularity-biased related lists.
pub fn generate_synthetic(
    num_items: usize,
    zipf_alpha: f64,
    avg_degree: f64,
    seed: u64,
) -> Result<RelationGraph, SyntheticError> {
    synthesize(num_items, zipf_alpha, avg_degree, seed).map(|c| c.graph)
}

/// Same as [`generate_synthetic`] but also returns the rank permutation.
///
/// Popularity follows `q ∝ rank^(-alpha)` over a random permutation of the
/// items. Every item draws its out-degree from `Poisson(avg_degree)` clipped
/// to `[0, num_items - 1]` and picks that many distinct targets other than
/// itself, without replacement, with probability proportional to popularity.
/// The related list is ordered by draw order, so popular items tend to lead.
pub fn synthesize(
    num_items: usize,
    zipf_alpha: f64,
    avg_degree: f64,
    seed: u64,
) -> Result<SyntheticCatalog, SyntheticError> {
    if num_items == 0 {
        return Err(SyntheticError::EmptyCatalog);
    }
    if !zipf_alpha.is_finite() || zipf_alpha < 0.0 {
        return Err(SyntheticError::InvalidParameter("zipf_alpha must be finite and >= 0"));
    }
    if !avg_degree.is_finite() || avg_degree < 0.0 {
        return Err(SyntheticError::InvalidParameter("avg_degree must be finite and >= 0"));
    }
    if avg_degree > (num_items - 1) as f64 {
        return Err(SyntheticError::DegreeTooLarge {
            avg_degree,
            max: num_items - 1,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = ((num_items - 1).max(1).ilog10() as usize + 1).max(6);
    let ids: Vec<ItemId> = (0..num_items)
        .map(|i| ItemId::from(format!("v{i:0width$}").as_str()))
        .collect();

    let mut order: Vec<usize> = (0..num_items).collect();
    order.shuffle(&mut rng);
    let norm: f64 = (1..=num_items).map(|r| (r as f64).powf(-zipf_alpha)).sum();
    let mut popularity = vec![0.0; num_items];
    for (rank0, &item) in order.iter().enumerate() {
        popularity[item] = ((rank0 + 1) as f64).powf(-zipf_alpha) / norm;
    }

    let poisson = if avg_degree > 0.0 {
        Some(Poisson::new(avg_degree).map_err(|_| SyntheticError::InvalidParameter("avg_degree"))?)
    } else {
        None
    };

    let mut entries = BTreeMap::new();
    let mut keys: Vec<(f64, usize)> = Vec::with_capacity(num_items);
    for source in 0..num_items {
        let degree = match &poisson {
            Some(p) => (p.sample(&mut rng) as usize).min(num_items - 1),
            None => 0,
        };
        let related = if degree == 0 {
            Vec::new()
        } else {
            // Exponential-key weighted sampling without replacement: the
            // `degree` largest keys ln(u)/w form a popularity-proportional
            // successive draw, and their key order is the draw order.
            keys.clear();
            for target in (0..num_items).filter(|&t| t != source) {
                let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                keys.push((u.ln() / popularity[target], target));
            }
            let by_key_desc = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
            if degree < keys.len() {
                keys.select_nth_unstable_by(degree - 1, by_key_desc);
                keys.truncate(degree);
            }
            keys.sort_unstable_by(by_key_desc);
            keys.iter().map(|&(_, t)| ids[t].clone()).collect()
        };
        entries.insert(
            ids[source].clone(),
            CatalogEntry {
                popularity: popularity[source],
                related,
            },
        );
    }

    let graph = RelationGraph::from_entries(None, entries)
        .expect("generator output satisfies catalog invariants");
    let ranking = order.into_iter().map(|i| ids[i].clone()).collect();
    Ok(SyntheticCatalog { graph, ranking })
}
