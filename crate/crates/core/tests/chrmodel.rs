use cabaret_core::chrmodel::{binomial_pmf, chr_closed_form, chr_jensen_bound, BoundDirection, ModelParams};
use cabaret_core::demand::{position_distribution, PositionDistribution, PositionKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn nonincreasing(raw: &[f64]) -> PositionDistribution {
    let mut w: Vec<f64> = raw.iter().map(|x| x + 1e-3).collect();
    w.sort_by(|a, b| b.total_cmp(a));
    PositionDistribution::from_weights(&w).unwrap()
}

/// Binomial pmf by direct products of binomial coefficients, for small L.
fn naive_pmf(l: usize, q: f64) -> Vec<f64> {
    (0..=l)
        .map(|m| {
            let coeff: f64 = (0..m).map(|j| (l - j) as f64 / (j + 1) as f64).product();
            coeff * q.powi(m as i32) * (1.0 - q).powi((l - m) as i32)
        })
        .collect()
}

#[test]
fn recurrence_matches_naive_pmf() {
    for (l, q) in [(0, 0.3), (5, 0.5), (20, 0.1), (40, 0.77)] {
        for (a, b) in binomial_pmf(l, q).iter().zip(naive_pmf(l, q)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn generative_process_matches_closed_form() {
    let pd = position_distribution(PositionKind::Zipf { alpha: 1.0 }, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for q in [0.05, 0.2, 0.5] {
        let params = ModelParams::new(20, q, pd.clone()).unwrap();
        let exact = chr_closed_form(&params).unwrap();
        let trials = 40_000;
        let hits = (0..trials)
            .filter(|_| {
                let m = (0..20).filter(|_| rng.random_bool(q)).count();
                pd.sample(5, &mut rng) < m.min(5)
            })
            .count();
        let est = hits as f64 / trials as f64;
        let se = (exact * (1.0 - exact) / trials as f64).sqrt();
        assert!((est - exact).abs() <= 4.0 * se + 1e-9, "q={q}: {est} vs {exact}");
    }
}

proptest! {
    #[test]
    fn monotone_in_q_and_list_size(
        raw in proptest::collection::vec(0.0f64..1.0, 1..8),
        l in 0usize..60, dl in 0usize..20,
        q in 0.0f64..1.0, dq in 0.0f64..0.5,
    ) {
        let pd = PositionDistribution::from_weights(&raw.iter().map(|x| x + 1e-3).collect::<Vec<_>>()).unwrap();
        let base = chr_closed_form(&ModelParams::new(l, q, pd.clone()).unwrap()).unwrap();
        let more_q = chr_closed_form(&ModelParams::new(l, (q + dq).min(1.0), pd.clone()).unwrap()).unwrap();
        let more_l = chr_closed_form(&ModelParams::new(l + dl, q, pd).unwrap()).unwrap();
        prop_assert!(more_q >= base - 1e-12);
        prop_assert!(more_l >= base - 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn top_shift_does_not_decrease(raw in proptest::collection::vec(0.0f64..1.0, 2..8), l in 0usize..40, q in 0.0f64..1.0, from in 1usize..8, share in 0.0f64..1.0) {
        let pd = PositionDistribution::from_weights(&raw.iter().map(|x| x + 1e-3).collect::<Vec<_>>()).unwrap();
        let mut shifted = pd.probabilities().to_vec();
        let from = from % shifted.len();
        let to = from.saturating_sub(1);
        let moved = shifted[from] * share;
        shifted[from] -= moved;
        shifted[to] += moved;
        let shifted = PositionDistribution::from_weights(&shifted).unwrap();
        let a = chr_closed_form(&ModelParams::new(l, q, pd).unwrap()).unwrap();
        let b = chr_closed_form(&ModelParams::new(l, q, shifted).unwrap()).unwrap();
        prop_assert!(b >= a - 1e-12);
    }

    #[test]
    fn bound_holds_for_nonincreasing_laws(raw in proptest::collection::vec(0.0f64..1.0, 1..12), l in 0usize..200, q in 0.0f64..1.0) {
        let pd = nonincreasing(&raw);
        let params = ModelParams::new(l, q, pd.clone()).unwrap();
        let exact = chr_closed_form(&params).unwrap();
        let bound = chr_jensen_bound(params.mean_cached(), &pd, None).unwrap();
        prop_assert_eq!(bound.direction, BoundDirection::Upper);
        prop_assert!(exact <= bound.value + 1e-12, "{} > {}", exact, bound.value);
    }

    #[test]
    fn reversed_bound_for_nondecreasing_laws(raw in proptest::collection::vec(0.0f64..1.0, 1..12), l in 0usize..12, q in 0.0f64..1.0) {
        // the hit curve is convex only while m ≤ N
        let l = l.min(raw.len());
        let mut w: Vec<f64> = raw.iter().map(|x| x + 1e-3).collect();
        w.sort_by(f64::total_cmp);
        let pd = PositionDistribution::from_weights(&w).unwrap();
        let params = ModelParams::new(l, q, pd.clone()).unwrap();
        let exact = chr_closed_form(&params).unwrap();
        let bound = chr_jensen_bound(params.mean_cached(), &pd, None).unwrap();
        // a flat law is nonincreasing too and reports the upper direction
        let lower = chr_jensen_bound(params.mean_cached(), &pd, Some(BoundDirection::Lower)).unwrap();
        prop_assert!(bound.direction == BoundDirection::Lower || pd.is_nonincreasing());
        prop_assert!(exact >= lower.value - 1e-12);
    }
}

#[test]
fn reversed_bound_fails_past_the_list_length() {
    // p = [1]: exact = P{M ≥ 1} < 1 while the floor of M̄ = 1.04 already gives 1
    let pd = PositionDistribution::from_weights(&[1.0]).unwrap();
    let params = ModelParams::new(16, 0.065, pd.clone()).unwrap();
    let lower = chr_jensen_bound(params.mean_cached(), &pd, Some(BoundDirection::Lower)).unwrap();
    assert!(chr_closed_form(&params).unwrap() < lower.value);
}
