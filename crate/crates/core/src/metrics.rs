//! Hit-ratio estimators and experiment analyses over session traces.
//!
//! Steps served in degraded mode (fallback lists while the provider was
//! failing) are excluded from every ratio.

use std::collections::{BTreeMap, HashSet};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{PositionDistribution, SessionTrace};
use crate::graphcore::CacheSet;

/// z-value of the 95% normal confidence interval.
const Z_95: f64 = 1.96;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no traces to aggregate")]
    Empty,
    #[error("trace {0} has fewer than 2 requests")]
    TooShort(String),
}

pub fn ci_half_width(ratio: f64, samples: usize) -> f64 {
    if samples == 0 {
        return 0.0;
    }
    Z_95 * (ratio * (1.0 - ratio) / samples as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepChr {
    /// Request index k (2 is the first recommendation-driven request).
    pub step: usize,
    pub hits: usize,
    pub samples: usize,
    pub ratio: f64,
    pub ci_half_width: f64,
}

impl StepChr {
    fn new(step: usize, hits: usize, samples: usize) -> Self {
        let ratio = if samples == 0 { 0.0 } else { hits as f64 / samples as f64 };
        Self {
            step,
            hits,
            samples,
            ratio,
            ci_half_width: ci_half_width(ratio, samples),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChrReport {
    /// Hits over observed requests: the per-step ratios averaged with their sample counts as weights.
    pub aggregate: f64,
    pub aggregate_ci_half_width: f64,
    /// Hits over planned requests, counting requests lost to truncation as misses.
    pub aggregate_truncated_as_miss: f64,
    /// `(1/M) Σ_i Σ_k 1[v_k(i) ∈ C]`, the per-session hit count without normalization.
    pub hits_per_session: f64,
    pub per_step: Vec<StepChr>,
    pub sessions: usize,
    pub hits: usize,
    pub samples: usize,
    /// The cache used for a replay contains items the traces saw as uncached.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub cache_exceeds_original: bool,
}

fn check(traces: &[SessionTrace]) -> Result<(), MetricsError> {
    if traces.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(t) = traces.iter().find(|t| t.requests < 2) {
        return Err(MetricsError::TooShort(t.session.clone()));
    }
    Ok(())
}

fn report(traces: &[SessionTrace], cache: &CacheSet, last_step: Option<usize>) -> ChrReport {
    let mut per_step: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut hits = 0;
    let mut samples = 0;
    let mut planned = 0;
    for trace in traces {
        let max_step = last_step.map_or(trace.requests, |k| k.min(trace.requests));
        for k in 2..=max_step {
            planned += 1;
            per_step.entry(k).or_default();
            let Some(step) = trace.steps.get(k - 2) else { continue };
            if step.degraded {
                planned -= 1;
                continue;
            }
            let hit = cache.contains(&step.selected);
            let slot = per_step.get_mut(&k).expect("inserted above");
            slot.1 += 1;
            samples += 1;
            if hit {
                slot.0 += 1;
                hits += 1;
            }
        }
    }
    let aggregate = if samples == 0 { 0.0 } else { hits as f64 / samples as f64 };
    ChrReport {
        aggregate,
        aggregate_ci_half_width: ci_half_width(aggregate, samples),
        aggregate_truncated_as_miss: if planned == 0 { 0.0 } else { hits as f64 / planned as f64 },
        hits_per_session: hits as f64 / traces.len() as f64,
        per_step: per_step
            .into_iter()
            .map(|(k, (h, n))| StepChr::new(k, h, n))
            .collect(),
        sessions: traces.len(),
        hits,
        samples,
        cache_exceeds_original: false,
    }
}

/// Fraction of second requests that are for a cached item.
pub fn chr_single(traces: &[SessionTrace], cache: &CacheSet) -> Result<ChrReport, MetricsError> {
    check(traces)?;
    let mut r = report(traces, cache, Some(2));
    // a session without a second request counts as a miss here
    r.aggregate = r.aggregate_truncated_as_miss;
    r.aggregate_ci_half_width = ci_half_width(r.aggregate, traces.len());
    Ok(r)
}

/// Per-step hit ratios for requests 2..K and their sample-weighted mean.
pub fn chr_sequential(traces: &[SessionTrace], cache: &CacheSet) -> Result<ChrReport, MetricsError> {
    check(traces)?;
    Ok(report(traces, cache, None))
}

/// Sequential hit ratio recomputed against `subset` over the logged selections.
pub fn replay_chr(traces: &[SessionTrace], subset: &CacheSet) -> Result<ChrReport, MetricsError> {
    let mut r = chr_sequential(traces, subset)?;
    r.cache_exceeds_original = traces
        .iter()
        .flat_map(|t| &t.steps)
        .flat_map(|s| &s.presented)
        .any(|entry| !entry.cached && subset.contains(&entry.item));
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalBucket {
    /// Number of cached items in the presented list.
    pub cached_in_list: usize,
    pub hits: usize,
    pub samples: usize,
    pub chr: f64,
    /// `x / N`: every position equally likely.
    pub uniform_hypothesis: f64,
    /// `Σ_{i ≤ x} p_i` under the supplied position law.
    pub positional_hypothesis: f64,
}

/// Hit ratio conditioned on how many cached items the presented list held,
/// next to the uniform and positional hypotheses for the same x.
///
/// Uses the per-step cached flags, so the cache is the one the lists were built against.
pub fn chr_conditional(traces: &[SessionTrace], hypothesis: &PositionDistribution) -> Vec<ConditionalBucket> {
    let mut buckets: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for step in traces.iter().flat_map(|t| &t.steps).filter(|s| !s.degraded) {
        let slot = buckets.entry(step.cached_count()).or_default();
        slot.1 += 1;
        if step.cached {
            slot.0 += 1;
        }
    }
    let n = hypothesis.len() as f64;
    buckets
        .into_iter()
        .map(|(x, (hits, samples))| ConditionalBucket {
            cached_in_list: x,
            hits,
            samples,
            chr: hits as f64 / samples as f64,
            uniform_hypothesis: (x as f64 / n).min(1.0),
            positional_hypothesis: hypothesis.top_mass(x),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroCachedStep {
    pub step: usize,
    pub lists: usize,
    pub without_cached: usize,
    pub fraction: f64,
}

/// Per request step, the fraction of presented lists holding no cached item.
pub fn zero_cached_fraction(traces: &[SessionTrace]) -> Vec<ZeroCachedStep> {
    let mut per_step: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for trace in traces {
        for (i, step) in trace.steps.iter().enumerate().filter(|(_, s)| !s.degraded) {
            let slot = per_step.entry(i + 2).or_default();
            slot.0 += 1;
            if step.cached_count() == 0 {
                slot.1 += 1;
            }
        }
    }
    per_step
        .into_iter()
        .map(|(step, (lists, without_cached))| ZeroCachedStep {
            step,
            lists,
            without_cached,
            fraction: without_cached as f64 / lists as f64,
        })
        .collect()
}

/// Items ever selected, for building replay caches.
pub fn selected_items(traces: &[SessionTrace]) -> HashSet<crate::graphcore::ItemId> {
    traces.iter().flat_map(|t| &t.steps).map(|s| s.selected.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSummary {
    pub cached_in_list: usize,
    pub samples: usize,
    pub mean_qor: Option<f64>,
    pub mean_interest: f64,
}

/// Mean ratings per number of cached items in the list that was shown with the rated item.
pub fn ratings_by_cached_count(traces: &[SessionTrace]) -> Vec<RatingSummary> {
    let mut buckets: BTreeMap<usize, (usize, f64, usize, f64)> = BTreeMap::new();
    for trace in traces {
        // ratings[i] belongs to the item watched while steps[i] was presented
        for (step, rating) in trace.steps.iter().zip(&trace.ratings).filter(|(s, _)| !s.degraded) {
            let slot = buckets.entry(step.cached_count()).or_default();
            slot.0 += 1;
            slot.1 += f64::from(rating.interest);
            if let Some(q) = rating.qor {
                slot.2 += 1;
                slot.3 += f64::from(q);
            }
        }
    }
    buckets
        .into_iter()
        .map(|(x, (n, interest, nq, qor))| RatingSummary {
            cached_in_list: x,
            samples: n,
            mean_qor: (nq > 0).then(|| qor / nq as f64),
            mean_interest: interest / n as f64,
        })
        .collect()
}

/// Flat CSV of per-step ratios: `step,ratio,n,ci`.
pub fn write_step_csv(report: &ChrReport, out: impl Write) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "ratio", "n", "ci"])?;
    for s in &report.per_step {
        w.write_record([
            s.step.to_string(),
            s.ratio.to_string(),
            s.samples.to_string(),
            s.ci_half_width.to_string(),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cabaret::Recommended;
    use crate::demand::{position_distribution, PositionKind, SessionStep};
    use crate::graphcore::ItemId;

    fn id(s: &str) -> ItemId {
        ItemId::from(s)
    }

    /// A session whose k-th request (k ≥ 2) selects `picks[k-2]` at position 1
    /// of a two-item list `[pick, filler]`.
    fn trace(name: &str, picks: &[&str], cache: &CacheSet) -> SessionTrace {
        let mut t = SessionTrace::new(id("start"), picks.len() + 1);
        t.session = name.into();
        for p in picks {
            let pick = id(p);
            let cached = cache.contains(&pick);
            t.steps.push(SessionStep {
                presented: vec![
                    Recommended { item: pick.clone(), cached },
                    Recommended { item: id("filler"), cached: cache.contains(&id("filler")) },
                ],
                position: 1,
                selected: pick,
                cached,
                baseline: None,
                degraded: false,
                timestamp: None,
            });
        }
        t
    }

    #[test]
    fn single_request_count() {
        let cache = CacheSet::from_items([id("h")]);
        let traces: Vec<_> = ["h", "m", "m", "m"]
            .iter()
            .enumerate()
            .map(|(i, p)| trace(&i.to_string(), &[p], &cache))
            .collect();
        let r = chr_single(&traces, &cache).unwrap();
        assert_eq!(r.aggregate, 0.25);
        let all = CacheSet::from_items([id("h"), id("m")]);
        assert_eq!(chr_single(&traces, &all).unwrap().aggregate, 1.0);
        assert_eq!(chr_single(&[], &all).unwrap_err(), MetricsError::Empty);
    }

    #[test]
    fn sequential_hand_count() {
        let cache = CacheSet::from_items([id("h")]);
        let traces = vec![trace("a", &["h", "m"], &cache), trace("b", &["h", "h"], &cache)];
        let r = chr_sequential(&traces, &cache).unwrap();
        let steps: Vec<f64> = r.per_step.iter().map(|s| s.ratio).collect();
        assert_eq!(steps, vec![1.0, 0.5]);
        assert_eq!(r.aggregate, 0.75);
        assert_eq!(r.hits_per_session, 1.5);

        let none = chr_sequential(&traces, &CacheSet::empty()).unwrap();
        assert_eq!(none.aggregate, 0.0);
        assert!(none.per_step.iter().all(|s| s.ratio == 0.0));
    }

    #[test]
    fn two_request_sequential_equals_single() {
        let cache = CacheSet::from_items([id("h")]);
        let traces = vec![trace("a", &["h"], &cache), trace("b", &["m"], &cache), trace("c", &["h"], &cache)];
        assert_eq!(
            chr_single(&traces, &cache).unwrap().aggregate,
            chr_sequential(&traces, &cache).unwrap().aggregate
        );
    }

    #[test]
    fn truncated_sessions_both_conventions() {
        let cache = CacheSet::from_items([id("h")]);
        let mut short = trace("a", &["h"], &cache);
        short.requests = 3;
        short.truncated = true;
        let traces = vec![short, trace("b", &["h", "h"], &cache)];
        let r = chr_sequential(&traces, &cache).unwrap();
        assert_eq!(r.aggregate, 1.0);
        assert_eq!(r.aggregate_truncated_as_miss, 0.75);
        assert_eq!(r.per_step[1].samples, 1);
    }

    #[test]
    fn degraded_steps_are_excluded() {
        let cache = CacheSet::from_items([id("h")]);
        let mut t = trace("a", &["m", "h"], &cache);
        t.steps[0].degraded = true;
        let r = chr_sequential(&[t], &cache).unwrap();
        assert_eq!(r.samples, 1);
        assert_eq!(r.aggregate, 1.0);
    }

    #[test]
    fn conditional_extremes() {
        let cache = CacheSet::from_items([id("h"), id("filler")]);
        let partial = CacheSet::from_items([id("h")]);
        let traces = vec![
            trace("all", &["h"], &cache),
            trace("none", &["m"], &CacheSet::empty()),
            trace("one", &["h"], &partial),
        ];
        let pd = position_distribution(PositionKind::Uniform, 2).unwrap();
        let b = chr_conditional(&traces, &pd);
        assert_eq!(b[0].cached_in_list, 0);
        assert_eq!(b[0].chr, 0.0);
        assert_eq!(b[2].cached_in_list, 2);
        assert_eq!(b[2].chr, 1.0);
        assert_eq!(b[1].uniform_hypothesis, 0.5);
    }

    #[test]
    fn zero_cached_extremes() {
        let cache = CacheSet::from_items([id("h"), id("m"), id("filler")]);
        let traces = vec![trace("a", &["h", "m"], &cache)];
        assert!(zero_cached_fraction(&traces).iter().all(|z| z.fraction == 0.0));
        let traces = vec![trace("a", &["h", "m"], &CacheSet::empty())];
        assert!(zero_cached_fraction(&traces).iter().all(|z| z.fraction == 1.0));
    }

    #[test]
    fn replay_identity_and_flag() {
        let cache = CacheSet::from_items([id("h")]);
        let traces = vec![trace("a", &["h", "m"], &cache)];
        let original = chr_sequential(&traces, &cache).unwrap();
        let replay = replay_chr(&traces, &cache).unwrap();
        assert_eq!(original, replay);
        assert_eq!(replay_chr(&traces, &CacheSet::empty()).unwrap().aggregate, 0.0);
        let wider = CacheSet::from_items([id("h"), id("m")]);
        assert!(replay_chr(&traces, &wider).unwrap().cache_exceeds_original);
    }

    #[test]
    fn csv_columns() {
        let cache = CacheSet::from_items([id("h")]);
        let r = chr_sequential(&[trace("a", &["h"], &cache)], &cache).unwrap();
        let mut buf = Vec::new();
        write_step_csv(&r, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,ratio,n,ci\n2,1,1,0\n");
    }
}
