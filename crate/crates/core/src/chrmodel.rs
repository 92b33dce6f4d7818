//! Closed-form hit-ratio prediction for cache-aware recommendations.
//!
//! With `M ~ Binomial(|L|, q_C)` cached items found by the exploration, the
//! list carries `min(M, N)` cached items on top, so
//! `CHR = Σ_m (Σ_{i ≤ min(m,N)} p_i) · P{M = m}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::PositionDistribution;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("mean cached count {0} must be finite and non-negative")]
    InvalidMean(f64),
    #[error("position probabilities are neither nonincreasing nor nondecreasing; the bound direction is undefined")]
    UndefinedDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Size of the exploration list `|L|`.
    pub list_size: usize,
    /// Probability that an explored item is cached.
    pub q_cached: f64,
    pub positions: PositionDistribution,
}

impl ModelParams {
    pub fn new(list_size: usize, q_cached: f64, positions: PositionDistribution) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&q_cached) {
            return Err(ModelError::InvalidProbability(q_cached));
        }
        Ok(Self {
            list_size,
            q_cached,
            positions,
        })
    }

    pub fn mean_cached(&self) -> f64 {
        self.list_size as f64 * self.q_cached
    }
}

/// `P{M = m}` for `m = 0..=trials`, by a log-space pmf recurrence.
pub fn binomial_pmf(trials: usize, q: f64) -> Vec<f64> {
    if q <= 0.0 {
        let mut pmf = vec![0.0; trials + 1];
        pmf[0] = 1.0;
        return pmf;
    }
    if q >= 1.0 {
        let mut pmf = vec![0.0; trials + 1];
        pmf[trials] = 1.0;
        return pmf;
    }
    let log_ratio = q.ln() - (-q).ln_1p();
    let mut log_term = trials as f64 * (-q).ln_1p();
    let mut pmf = Vec::with_capacity(trials + 1);
    pmf.push(log_term.exp());
    for m in 0..trials {
        log_term += ((trials - m) as f64).ln() - ((m + 1) as f64).ln() + log_ratio;
        pmf.push(log_term.exp());
    }
    pmf
}

/// Expected hit ratio under the binomial model, summed exactly.
pub fn chr_closed_form(params: &ModelParams) -> Result<f64, ModelError> {
    if !(0.0..=1.0).contains(&params.q_cached) {
        return Err(ModelError::InvalidProbability(params.q_cached));
    }
    let pmf = binomial_pmf(params.list_size, params.q_cached);
    let value: f64 = pmf
        .iter()
        .enumerate()
        .map(|(m, p)| params.positions.top_mass(m) * p)
        .sum();
    Ok(value.clamp(0.0, 1.0))
}

/// Which side of the exact value the bound lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundDirection {
    /// Preference for the top of the list: `Σ_{i ≤ ⌈M̄⌉} p_i` bounds from above.
    Upper,
    /// Preference for the bottom of the list: `Σ_{i ≤ ⌊M̄⌋} p_i` bounds from below.
    /// Holds only when `|L| ≤ N`; past `N` the hit curve is flat and no longer convex.
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JensenBound {
    pub value: f64,
    pub direction: BoundDirection,
}

/// Concavity bound involving only the mean cached count `M̄`.
///
/// The direction follows from the shape of `p`; pass `assumed` to force one
/// when `p` is neither nonincreasing nor nondecreasing.
pub fn chr_jensen_bound(
    mean_cached: f64,
    positions: &PositionDistribution,
    assumed: Option<BoundDirection>,
) -> Result<JensenBound, ModelError> {
    if !mean_cached.is_finite() || mean_cached < 0.0 {
        return Err(ModelError::InvalidMean(mean_cached));
    }
    let direction = match assumed {
        Some(d) => d,
        None if positions.is_nonincreasing() => BoundDirection::Upper,
        None if positions.is_nondecreasing() => BoundDirection::Lower,
        None => return Err(ModelError::UndefinedDirection),
    };
    let cutoff = match direction {
        BoundDirection::Upper => mean_cached.ceil(),
        BoundDirection::Lower => mean_cached.floor(),
    };
    let cutoff = if cutoff >= positions.len() as f64 {
        positions.len()
    } else {
        cutoff as usize
    };
    Ok(JensenBound {
        value: positions.top_mass(cutoff).min(1.0),
        direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{position_distribution, PositionKind};

    fn p73() -> PositionDistribution {
        PositionDistribution::from_weights(&[0.7, 0.3]).unwrap()
    }

    #[test]
    fn three_outcome_example() {
        let params = ModelParams::new(2, 0.5, p73()).unwrap();
        // 0.25·0 + 0.5·0.7 + 0.25·1.0
        assert!((chr_closed_form(&params).unwrap() - 0.60).abs() < 1e-15);
        let bound = chr_jensen_bound(1.0, &p73(), None).unwrap();
        assert!((bound.value - 0.7).abs() < 1e-15);
        assert_eq!(bound.direction, BoundDirection::Upper);
    }

    #[test]
    fn degenerate_probabilities() {
        let pd = position_distribution(PositionKind::Zipf { alpha: 1.0 }, 5).unwrap();
        let none = ModelParams::new(30, 0.0, pd.clone()).unwrap();
        assert_eq!(chr_closed_form(&none).unwrap(), 0.0);
        let all = ModelParams::new(30, 1.0, pd.clone()).unwrap();
        assert!((chr_closed_form(&all).unwrap() - 1.0).abs() < 1e-12);
        assert!(ModelParams::new(3, 1.5, pd).is_err());
    }

    #[test]
    fn bound_edges() {
        let pd = position_distribution(PositionKind::Uniform, 4).unwrap();
        assert_eq!(chr_jensen_bound(0.0, &pd, None).unwrap().value, 0.0);
        assert!((chr_jensen_bound(9.0, &pd, None).unwrap().value - 1.0).abs() < 1e-15);
        assert!(chr_jensen_bound(-1.0, &pd, None).is_err());

        let bumpy = PositionDistribution::from_weights(&[0.2, 0.5, 0.3]).unwrap();
        assert_eq!(chr_jensen_bound(1.0, &bumpy, None).unwrap_err(), ModelError::UndefinedDirection);
        assert!(chr_jensen_bound(1.0, &bumpy, Some(BoundDirection::Upper)).is_ok());

        let rising = PositionDistribution::from_weights(&[0.2, 0.3, 0.5]).unwrap();
        let b = chr_jensen_bound(1.5, &rising, None).unwrap();
        assert_eq!(b.direction, BoundDirection::Lower);
        assert!((b.value - 0.2).abs() < 1e-15);
    }

    #[test]
    fn pmf_is_normalized_for_large_lists() {
        for (n, q) in [(10_000usize, 0.3), (10_000, 0.001), (1, 0.5), (0, 0.4)] {
            let pmf = binomial_pmf(n, q);
            let total: f64 = pmf.iter().sum();
            assert!((total - 1.0).abs() < 1e-9, "n={n} q={q} total={total}");
            let mean: f64 = pmf.iter().enumerate().map(|(m, p)| m as f64 * p).sum();
            assert!((mean - n as f64 * q).abs() < 1e-6 * (1.0 + n as f64));
        }
    }
}
