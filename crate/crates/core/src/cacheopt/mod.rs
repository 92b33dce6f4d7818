//! Cache placement under cache-aware recommendations.
//!
//! The objective is the expected hit ratio of a single recommendation-driven
//! request, `CHR(C) = Σ_v q_v Σ_{i ≤ min(|C ∩ L(v)|, N)} p_i`, where `L(v)` is
//! the exploration list of `v`. It is monotone and submodular, so greedy
//! augmentation is within `1 - 1/e` of the optimum.

mod instance;

pub use instance::{load_instance, save_instance, DemandWeight, InstanceError, InstanceRecord};

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use itertools::Itertools;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cabaret::{bfs_explore, BfsSchedule, CabaretError};
use crate::demand::PositionDistribution;
use crate::graphcore::{CacheSet, ItemId, ProviderError, RelationProvider};

/// Largest number of subsets the exhaustive search will enumerate.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

/// Arithmetic slack allowed when checking monotonicity and submodularity.
pub const STRUCTURE_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CacheOptError {
    #[error("exploration failed: {0}")]
    Exploration(#[from] CabaretError),
    #[error("provider failed: {0}")]
    Provider(#[from] ProviderError),
    #[error("demand has no item with positive weight")]
    EmptyDemand,
    #[error("candidate universe is empty")]
    EmptyUniverse,
    #[error("{combinations} subsets exceed the exhaustive search limit")]
    TooLarge { combinations: u128 },
    #[error("restriction fraction {0} must lie in (0, 1]")]
    InvalidFraction(f64),
    #[error("capacity must be positive")]
    ZeroCapacity,
}

/// How a demand item's list turns a cache into hits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveMode {
    /// Cached items found by the exploration are moved to the top positions.
    CacheAware,
    /// The list is shown as is; position `i` hits when its item is cached.
    FixedOrder,
}

#[derive(Debug, Clone)]
struct DemandEntry {
    item: u32,
    weight: f64,
    /// Exploration set (cache-aware) or the shown list in order (fixed order).
    list: Vec<u32>,
}

/// Precomputed lists and weights the objective is evaluated on.
#[derive(Debug, Clone)]
pub struct ObjectiveContext {
    ids: Vec<ItemId>,
    index: HashMap<ItemId, u32>,
    /// All demand entries, most popular first; the first `active` are V′.
    entries: Vec<DemandEntry>,
    active: usize,
    /// Weights of the active entries renormalized to sum to 1.
    weights: Vec<f64>,
    positions: PositionDistribution,
    /// `prefix[m] = Σ_{i≤m} p_i` for `m = 0..=N`.
    prefix: Vec<f64>,
    mode: ObjectiveMode,
    schedule: Option<BfsSchedule>,
}

impl ObjectiveContext {
    /// Cache-aware objective: every `L(v)` is explored once with `schedule`.
    pub fn cache_aware<P: RelationProvider + ?Sized>(
        provider: &P,
        demand: &[(ItemId, f64)],
        positions: PositionDistribution,
        schedule: &BfsSchedule,
    ) -> Result<Self, CacheOptError> {
        let mut lists = Vec::with_capacity(demand.len());
        for (item, _) in demand {
            let explored = bfs_explore(provider, item, schedule)?;
            lists.push(explored.items().cloned().collect());
        }
        Self::from_lists(demand, lists, positions, ObjectiveMode::CacheAware, Some(schedule.clone()))
    }

    /// Fixed-order objective over the provider's top-N related lists.
    pub fn fixed_order<P: RelationProvider + ?Sized>(
        provider: &P,
        demand: &[(ItemId, f64)],
        positions: PositionDistribution,
    ) -> Result<Self, CacheOptError> {
        let n = positions.len();
        let mut lists = Vec::with_capacity(demand.len());
        for (item, _) in demand {
            lists.push(provider.related(item, n)?.into_iter().take(n).collect());
        }
        Self::from_lists(demand, lists, positions, ObjectiveMode::FixedOrder, None)
    }

    /// Context from explicit per-item lists, `lists[i]` belonging to `demand[i]`.
    pub fn from_lists(
        demand: &[(ItemId, f64)],
        lists: Vec<Vec<ItemId>>,
        positions: PositionDistribution,
        mode: ObjectiveMode,
        schedule: Option<BfsSchedule>,
    ) -> Result<Self, CacheOptError> {
        assert_eq!(demand.len(), lists.len(), "one list per demand item");
        let mut ids: Vec<ItemId> = demand
            .iter()
            .map(|(id, _)| id.clone())
            .chain(lists.iter().flatten().cloned())
            .collect();
        ids.sort();
        ids.dedup();
        let index: HashMap<ItemId, u32> = ids.iter().enumerate().map(|(i, id)| (id.clone(), i as u32)).collect();

        let mut entries: Vec<DemandEntry> = demand
            .iter()
            .zip(lists)
            .filter(|((_, w), _)| *w > 0.0)
            .map(|((id, w), list)| {
                let mut seen = HashSet::new();
                DemandEntry {
                    item: index[id],
                    weight: *w,
                    list: list.iter().map(|x| index[x]).filter(|x| seen.insert(*x)).collect(),
                }
            })
            .collect();
        if entries.is_empty() {
            return Err(CacheOptError::EmptyDemand);
        }
        entries.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.item.cmp(&b.item)));

        let prefix = std::iter::once(0.0)
            .chain(positions.probabilities().iter().scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            }))
            .collect();
        let active = entries.len();
        let mut ctx = Self {
            ids,
            index,
            entries,
            active,
            weights: Vec::new(),
            positions,
            prefix,
            mode,
            schedule,
        };
        ctx.renormalize();
        Ok(ctx)
    }

    fn renormalize(&mut self) {
        let total: f64 = self.entries[..self.active].iter().map(|e| e.weight).sum();
        self.weights = self.entries[..self.active].iter().map(|e| e.weight / total).collect();
    }

    pub fn mode(&self) -> ObjectiveMode {
        self.mode
    }

    pub fn positions(&self) -> &PositionDistribution {
        &self.positions
    }

    pub fn list_length(&self) -> usize {
        self.positions.len()
    }

    pub fn schedule(&self) -> Option<&BfsSchedule> {
        self.schedule.as_ref()
    }

    /// Active demand items V′ with their renormalized weights, most popular first.
    pub fn demand(&self) -> Vec<(ItemId, f64)> {
        self.entries[..self.active]
            .iter()
            .zip(&self.weights)
            .map(|(e, w)| (self.ids[e.item as usize].clone(), *w))
            .collect()
    }

    /// Number of demand items before any restriction.
    pub fn catalog_demand_size(&self) -> usize {
        self.entries.len()
    }

    /// The precomputed list of an active demand item.
    pub fn list_of(&self, item: &ItemId) -> Option<Vec<ItemId>> {
        let ix = *self.index.get(item)?;
        self.entries[..self.active]
            .iter()
            .find(|e| e.item == ix)
            .map(|e| e.list.iter().map(|x| self.ids[*x as usize].clone()).collect())
    }

    /// Items the greedy may cache: active demand items and everything in their lists,
    /// in id order.
    pub fn candidate_universe(&self) -> Vec<ItemId> {
        self.universe_indices().into_iter().map(|i| self.ids[i as usize].clone()).collect()
    }

    fn universe_indices(&self) -> Vec<u32> {
        let mut u: Vec<u32> = self.entries[..self.active]
            .iter()
            .flat_map(|e| std::iter::once(e.item).chain(e.list.iter().copied()))
            .collect();
        u.sort_unstable();
        u.dedup();
        u
    }

    fn member_mask(&self, cache: &CacheSet) -> Vec<bool> {
        let mut mask = vec![false; self.ids.len()];
        for id in cache.items() {
            if let Some(&i) = self.index.get(id) {
                mask[i as usize] = true;
            }
        }
        mask
    }

    fn value_of_mask(&self, mask: &[bool]) -> f64 {
        let n = self.positions.len();
        let probs = self.positions.probabilities();
        self.entries[..self.active]
            .iter()
            .zip(&self.weights)
            .map(|(e, w)| {
                let hit = match self.mode {
                    ObjectiveMode::CacheAware => {
                        let cached = e.list.iter().filter(|x| mask[**x as usize]).count();
                        self.prefix[cached.min(n)]
                    }
                    ObjectiveMode::FixedOrder => e
                        .list
                        .iter()
                        .zip(probs)
                        .filter(|(x, _)| mask[**x as usize])
                        .map(|(_, p)| p)
                        .sum(),
                };
                w * hit
            })
            .sum()
    }

    fn value_of_indices(&self, set: &[u32]) -> f64 {
        let mut mask = vec![false; self.ids.len()];
        for &i in set {
            mask[i as usize] = true;
        }
        self.value_of_mask(&mask)
    }
}

/// Exact objective value of `cache`.
pub fn chr_objective(ctx: &ObjectiveContext, cache: &CacheSet) -> f64 {
    ctx.value_of_mask(&ctx.member_mask(cache))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyResult {
    pub cache: CacheSet,
    /// Marginal gain of each pick, in pick order.
    pub gains: Vec<f64>,
    pub objective: f64,
    /// Marginal-gain evaluations performed.
    pub evaluations: usize,
}

/// Incremental marginal gains: per demand item, how many of its list entries are cached.
struct GainState<'a> {
    ctx: &'a ObjectiveContext,
    /// item → (active entry, position in its list)
    postings: HashMap<u32, Vec<(usize, usize)>>,
    cached_in_list: Vec<usize>,
    evaluations: usize,
}

impl<'a> GainState<'a> {
    fn new(ctx: &'a ObjectiveContext) -> Self {
        let mut postings: HashMap<u32, Vec<(usize, usize)>> = HashMap::new();
        for (e, entry) in ctx.entries[..ctx.active].iter().enumerate() {
            for (pos, x) in entry.list.iter().enumerate() {
                postings.entry(*x).or_default().push((e, pos));
            }
        }
        Self {
            ctx,
            postings,
            cached_in_list: vec![0; ctx.active],
            evaluations: 0,
        }
    }

    fn gain(&mut self, item: u32) -> f64 {
        self.evaluations += 1;
        let Some(posts) = self.postings.get(&item) else {
            return 0.0;
        };
        let probs = self.ctx.positions.probabilities();
        let n = probs.len();
        posts
            .iter()
            .map(|&(e, pos)| {
                let w = self.ctx.weights[e];
                match self.ctx.mode {
                    ObjectiveMode::CacheAware => {
                        let c = self.cached_in_list[e];
                        if c < n {
                            w * probs[c]
                        } else {
                            0.0
                        }
                    }
                    ObjectiveMode::FixedOrder => w * probs.get(pos).copied().unwrap_or(0.0),
                }
            })
            .sum()
    }

    fn add(&mut self, item: u32) {
        if let Some(posts) = self.postings.get(&item) {
            for &(e, _) in posts {
                self.cached_in_list[e] += 1;
            }
        }
    }
}

fn finish(ctx: &ObjectiveContext, picks: Vec<u32>, gains: Vec<f64>, evaluations: usize, capacity: usize) -> GreedyResult {
    let cache = CacheSet::new(picks.iter().map(|i| ctx.ids[*i as usize].clone()), capacity.max(1))
        .expect("greedy never exceeds capacity");
    let objective = chr_objective(ctx, &cache);
    GreedyResult {
        cache,
        gains,
        objective,
        evaluations,
    }
}

/// Greedy augmentation: `capacity` times add the candidate with the largest
/// marginal gain, ties to the smallest id. A capacity larger than the
/// candidate universe caches the whole universe.
pub fn greedy_cache(ctx: &ObjectiveContext, capacity: usize) -> Result<GreedyResult, CacheOptError> {
    if capacity == 0 {
        return Err(CacheOptError::ZeroCapacity);
    }
    let universe = ctx.universe_indices();
    if universe.is_empty() {
        return Err(CacheOptError::EmptyUniverse);
    }
    let mut state = GainState::new(ctx);
    let mut remaining = universe;
    let mut picks = Vec::new();
    let mut gains = Vec::new();
    while picks.len() < capacity && !remaining.is_empty() {
        let mut best = 0usize;
        let mut best_gain = f64::NEG_INFINITY;
        for (slot, &item) in remaining.iter().enumerate() {
            let g = state.gain(item);
            if g > best_gain {
                best_gain = g;
                best = slot;
            }
        }
        let item = remaining.remove(best);
        state.add(item);
        picks.push(item);
        gains.push(best_gain);
    }
    let evaluations = state.evaluations;
    Ok(finish(ctx, picks, gains, evaluations, capacity))
}

#[derive(PartialEq)]
struct Bound {
    gain: f64,
    item: u32,
    round: usize,
}

impl Eq for Bound {}

impl Ord for Bound {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.item.cmp(&self.item))
    }
}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lazy greedy over stale upper bounds; picks exactly what [`greedy_cache`] picks.
pub fn lazy_greedy_cache(ctx: &ObjectiveContext, capacity: usize) -> Result<GreedyResult, CacheOptError> {
    if capacity == 0 {
        return Err(CacheOptError::ZeroCapacity);
    }
    let universe = ctx.universe_indices();
    if universe.is_empty() {
        return Err(CacheOptError::EmptyUniverse);
    }
    let mut state = GainState::new(ctx);
    let mut heap: BinaryHeap<Bound> = universe
        .iter()
        .map(|&item| Bound {
            gain: state.gain(item),
            item,
            round: 0,
        })
        .collect();
    let mut picks = Vec::new();
    let mut gains = Vec::new();
    while picks.len() < capacity {
        let Some(top) = heap.pop() else { break };
        if top.round == picks.len() {
            state.add(top.item);
            picks.push(top.item);
            gains.push(top.gain);
        } else {
            heap.push(Bound {
                gain: state.gain(top.item),
                item: top.item,
                round: picks.len(),
            });
        }
    }
    let evaluations = state.evaluations;
    Ok(finish(ctx, picks, gains, evaluations, capacity))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

/// True optimum by enumerating every subset of the candidate universe of size
/// `min(capacity, |universe|)`; the first maximum in lexicographic order wins.
pub fn exhaustive_opt(ctx: &ObjectiveContext, capacity: usize) -> Result<CacheSet, CacheOptError> {
    if capacity == 0 {
        return Err(CacheOptError::ZeroCapacity);
    }
    let universe = ctx.universe_indices();
    if universe.is_empty() {
        return Err(CacheOptError::EmptyUniverse);
    }
    let k = capacity.min(universe.len());
    let combinations = binomial(universe.len(), k);
    if combinations > EXHAUSTIVE_LIMIT {
        return Err(CacheOptError::TooLarge { combinations });
    }
    let mut best: Option<(f64, Vec<u32>)> = None;
    for combo in universe.iter().copied().combinations(k) {
        let value = ctx.value_of_indices(&combo);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, combo));
        }
    }
    let (_, picks) = best.expect("at least one combination");
    Ok(CacheSet::new(picks.iter().map(|i| ctx.ids[*i as usize].clone()), capacity)
        .expect("k <= capacity"))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StructureReport {
    pub trials: usize,
    pub monotone_violations: usize,
    pub submodular_violations: usize,
    /// Largest `gain(B) - gain(A)` observed for `A ⊆ B`.
    pub worst_submodular_excess: f64,
}

/// Checks monotonicity and diminishing returns on random `A ⊆ B`, `x ∉ B`.
pub fn check_structure<R: Rng + ?Sized>(ctx: &ObjectiveContext, trials: usize, rng: &mut R) -> StructureReport {
    let universe = ctx.universe_indices();
    let mut report = StructureReport {
        trials,
        worst_submodular_excess: f64::NEG_INFINITY,
        ..Default::default()
    };
    if universe.len() < 2 {
        report.worst_submodular_excess = 0.0;
        return report;
    }
    for _ in 0..trials {
        let mut shuffled = universe.clone();
        shuffled.shuffle(rng);
        let x = shuffled[0];
        let b_len = rng.random_range(0..shuffled.len());
        let b: Vec<u32> = shuffled[1..=b_len].to_vec();
        let a: Vec<u32> = b.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        let with = |set: &[u32]| {
            let mut s = set.to_vec();
            s.push(x);
            s
        };
        let fa = ctx.value_of_indices(&a);
        let fax = ctx.value_of_indices(&with(&a));
        let fb = ctx.value_of_indices(&b);
        let fbx = ctx.value_of_indices(&with(&b));
        if fa > fax + STRUCTURE_SLACK || fb > fbx + STRUCTURE_SLACK || fa > fb + STRUCTURE_SLACK {
            report.monotone_violations += 1;
        }
        let excess = (fbx - fb) - (fax - fa);
        report.worst_submodular_excess = report.worst_submodular_excess.max(excess);
        if excess > STRUCTURE_SLACK {
            report.submodular_violations += 1;
        }
    }
    report
}

/// Keeps the `⌈fraction · |V|⌉` most popular demand items as V′ and
/// renormalizes their weights. Lists are untouched; the candidate universe
/// narrows to the kept items and their lists.
pub fn restrict_candidates(ctx: &ObjectiveContext, fraction: f64) -> Result<ObjectiveContext, CacheOptError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CacheOptError::InvalidFraction(fraction));
    }
    let keep = ((fraction * ctx.entries.len() as f64).ceil() as usize).min(ctx.entries.len());
    if keep == 0 {
        return Err(CacheOptError::EmptyDemand);
    }
    let mut restricted = ctx.clone();
    restricted.active = keep;
    restricted.renormalize();
    Ok(restricted)
}

/// Uniform weight over the `count` most popular items.
pub fn front_page_demand<P: RelationProvider + ?Sized>(provider: &P, count: usize) -> Result<Vec<(ItemId, f64)>, CacheOptError> {
    let top = provider.top_popular(count)?;
    if top.is_empty() {
        return Err(CacheOptError::EmptyDemand);
    }
    let w = 1.0 / top.len() as f64;
    Ok(top.into_iter().map(|id| (id, w)).collect())
}

/// Random subset of the candidate universe, for baselines.
pub fn random_cache<R: Rng + ?Sized>(ctx: &ObjectiveContext, capacity: usize, rng: &mut R) -> CacheSet {
    let universe = ctx.candidate_universe();
    let picks: Vec<ItemId> = universe.choose_multiple(rng, capacity).cloned().collect();
    CacheSet::new(picks, capacity.max(1)).expect("sample fits capacity")
}
