mod common;

use cabaret_core::demand::{
    position_distribution, simulate_batch, InitialDemand, PositionKind, Recommender, RecommenderStrategy,
};
use cabaret_core::graphcore::CacheSet;
use cabaret_core::metrics::{chr_conditional, chr_sequential, replay_chr, selected_items, zero_cached_fraction};
use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every node has exactly `degree` distinct neighbours.
fn regular_adjacency(rng: &mut ChaCha8Rng, nodes: usize, degree: usize) -> Adjacency {
    let names: Vec<String> = (0..nodes).map(name).collect();
    names
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut others: Vec<String> = names.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| x.clone()).collect();
            others.shuffle(rng);
            others.truncate(degree);
            (v.clone(), others)
        })
        .collect()
}

#[test]
fn conditional_hit_ratio_follows_the_uniform_hypothesis() {
    let n = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let adj = regular_adjacency(&mut rng, 300, n);
    let g = graph_of(&adj);
    let cache = CacheSet::from_items(adj.keys().filter(|_| rng.random_bool(0.5)).map(|s| id(s)));
    let rec = Recommender::new(&g, RecommenderStrategy::Baseline, n, &cache).unwrap();
    let initial = InitialDemand::search_bar(adj.keys().map(|s| id(s)).collect()).unwrap();
    let pd = position_distribution(PositionKind::Uniform, n).unwrap();
    let traces = simulate_batch(&rec, &initial, &pd, 11, 60_000, 3).unwrap();
    let buckets = chr_conditional(&traces, &pd);
    assert_eq!(buckets.len(), n + 1);
    for b in &buckets {
        assert!(b.samples >= 10_000, "bucket {} has {}", b.cached_in_list, b.samples);
        assert!((b.chr - b.uniform_hypothesis).abs() <= 0.03, "{b:?}");
        assert!((b.uniform_hypothesis - b.positional_hypothesis).abs() < 1e-12);
    }
    assert_eq!(buckets[0].chr, 0.0);
    assert_eq!(buckets[n].chr, 1.0);
}

#[test]
fn zero_cached_fraction_on_a_chain() {
    // v0 → v1 → v2 → v3 with only v1 cached: the first list holds v1, the later ones do not
    let mut adj = Adjacency::new();
    for i in 0..4 {
        adj.insert(format!("v{i}"), if i < 3 { vec![format!("v{}", i + 1)] } else { vec![] });
    }
    let g = graph_of(&adj);
    let cache = CacheSet::from_items(ids(&["v1"]));
    let rec = Recommender::new(&g, RecommenderStrategy::Baseline, 1, &cache).unwrap();
    let initial = InitialDemand::search_bar(ids(&["v0"])).unwrap();
    let pd = position_distribution(PositionKind::TopPick, 1).unwrap();
    let traces = simulate_batch(&rec, &initial, &pd, 4, 10, 0).unwrap();
    let fractions: Vec<(usize, f64)> = zero_cached_fraction(&traces).iter().map(|s| (s.step, s.fraction)).collect();
    assert_eq!(fractions, vec![(2, 0.0), (3, 1.0), (4, 1.0)]);
    let report = chr_sequential(&traces, &cache).unwrap();
    assert_eq!(report.per_step.iter().map(|s| s.ratio).collect::<Vec<_>>(), vec![1.0, 0.0, 0.0]);
}

#[test]
fn replay_with_the_original_cache_is_the_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let adj = random_adjacency(&mut rng, 60, 8);
    let g = graph_of(&adj);
    let cache = CacheSet::from_items(adj.keys().step_by(4).map(|s| id(s)));
    let rec = Recommender::new(&g, RecommenderStrategy::ReorderOnly, 4, &cache).unwrap();
    let initial = InitialDemand::search_bar(adj.keys().take(10).map(|s| id(s)).collect()).unwrap();
    let pd = position_distribution(PositionKind::Zipf { alpha: 1.0 }, 4).unwrap();
    let traces = simulate_batch(&rec, &initial, &pd, 4, 500, 1).unwrap();
    let replayed = replay_chr(&traces, &cache).unwrap();
    assert_eq!(replayed.per_step, chr_sequential(&traces, &cache).unwrap().per_step);
    assert!(!replayed.cache_exceeds_original);
    let everything = CacheSet::from_items(selected_items(&traces));
    let full = replay_chr(&traces, &everything).unwrap();
    assert_eq!(full.aggregate, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_is_monotone_on_nested_caches(seed in 0u64..1000, cut_a in 0usize..40, extra in 0usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let adj = random_adjacency(&mut rng, 40, 6);
        let g = graph_of(&adj);
        let cache = CacheSet::from_items(adj.keys().step_by(3).map(|s| id(s)));
        let rec = Recommender::new(&g, RecommenderStrategy::Cabaret(cabaret_core::cabaret::BfsSchedule::classic(3, 2).unwrap()), 4, &cache).unwrap();
        let initial = InitialDemand::search_bar(adj.keys().take(8).map(|s| id(s)).collect()).unwrap();
        let pd = position_distribution(PositionKind::Zipf { alpha: 1.0 }, 4).unwrap();
        let traces = simulate_batch(&rec, &initial, &pd, 4, 100, seed).unwrap();

        let mut order: Vec<String> = adj.keys().cloned().collect();
        order.shuffle(&mut rng);
        let small = CacheSet::from_items(order.iter().take(cut_a).map(|s| id(s)));
        let large = CacheSet::from_items(order.iter().take(cut_a + extra).map(|s| id(s)));
        let a = replay_chr(&traces, &small).unwrap();
        let b = replay_chr(&traces, &large).unwrap();
        prop_assert!(a.aggregate <= b.aggregate);
        for (x, y) in a.per_step.iter().zip(&b.per_step) {
            prop_assert!(x.hits <= y.hits);
            prop_assert_eq!(x.samples, y.samples);
        }
    }
}
