//! Reference implementations written independently of the library, for use
//! as test oracles. They work on plain strings and adjacency maps.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet, VecDeque};

use cabaret_core::graphcore::{ItemId, RelationGraph};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

pub type Adjacency = BTreeMap<String, Vec<String>>;

pub fn name(i: usize) -> String {
    format!("n{i:03}")
}

pub fn id(s: &str) -> ItemId {
    ItemId::from(s)
}

pub fn ids(s: &[&str]) -> Vec<ItemId> {
    s.iter().map(|x| id(x)).collect()
}

pub fn strings(items: impl IntoIterator<Item = ItemId>) -> Vec<String> {
    items.into_iter().map(|i| i.as_str().to_owned()).collect()
}

/// Graph with uniform popularity from an adjacency map.
pub fn graph_of(adj: &Adjacency) -> RelationGraph {
    let q = 1.0 / adj.len() as f64;
    RelationGraph::new(
        None,
        adj.iter()
            .map(|(k, v)| (id(k), q, v.iter().map(|x| id(x)).collect())),
    )
    .unwrap()
}

pub fn hand_trace_adjacency() -> Adjacency {
    let mut adj = Adjacency::new();
    for (k, v) in [
        ("v", vec!["a", "b", "c"]),
        ("a", vec!["d", "e"]),
        ("b", vec!["c", "f"]),
        ("c", vec!["g", "h"]),
    ] {
        adj.insert(k.into(), v.into_iter().map(String::from).collect());
    }
    for leaf in ["d", "e", "f", "g", "h", "z"] {
        adj.insert(leaf.into(), Vec::new());
    }
    adj
}

/// Random adjacency on `n` nodes, degrees uniform in `0..=max_degree`.
pub fn random_adjacency<R: Rng>(rng: &mut R, n: usize, max_degree: usize) -> Adjacency {
    let nodes: Vec<String> = (0..n).map(name).collect();
    let mut adj = Adjacency::new();
    for (i, node) in nodes.iter().enumerate() {
        let degree = rng.random_range(0..=max_degree.min(n - 1));
        let mut others: Vec<&String> = nodes.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| s).collect();
        others.shuffle(rng);
        adj.insert(node.clone(), others.into_iter().take(degree).cloned().collect());
    }
    adj
}

/// Full `width`-ary tree of the given depth, every node distinct.
pub fn tree_adjacency(width: usize, depth: usize) -> (Adjacency, String) {
    let mut adj = Adjacency::new();
    let mut counter = 0usize;
    let root = name(counter);
    let mut frontier = vec![root.clone()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for parent in &frontier {
            let children: Vec<String> = (0..width)
                .map(|_| {
                    counter += 1;
                    name(counter)
                })
                .collect();
            next.extend(children.iter().cloned());
            adj.insert(parent.clone(), children);
        }
        frontier = next;
    }
    for leaf in frontier {
        adj.insert(leaf, Vec::new());
    }
    (adj, root)
}

pub fn arb_adjacency(max_nodes: usize, max_degree: usize) -> impl Strategy<Value = Adjacency> {
    (2..=max_nodes).prop_flat_map(move |n| {
        let lists = proptest::collection::vec(
            proptest::collection::vec(0..n, 0..=max_degree.min(n - 1)),
            n,
        );
        lists.prop_map(move |raw| {
            let mut adj = Adjacency::new();
            for (i, targets) in raw.into_iter().enumerate() {
                let mut seen = HashSet::new();
                let list: Vec<String> = targets
                    .into_iter()
                    .filter(|t| *t != i && seen.insert(*t))
                    .map(name)
                    .collect();
                adj.insert(name(i), list);
            }
            adj
        })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleExploration {
    pub items: Vec<String>,
    pub depths: Vec<usize>,
    pub requests: usize,
    pub duplicates: usize,
}

/// Queue-driven BFS. `levels[d] = (width, expand)` for depth `d + 1`.
pub fn oracle_bfs(adj: &Adjacency, source: &str, levels: &[(usize, Option<usize>)]) -> OracleExploration {
    let mut out = OracleExploration { items: vec![], depths: vec![], requests: 0, duplicates: 0 };
    let mut seen: HashSet<String> = HashSet::from([source.to_owned()]);
    let mut expanded_at = vec![0usize; levels.len() + 1];
    let mut queue = VecDeque::from([(source.to_owned(), 0usize)]);
    while let Some((node, depth)) = queue.pop_front() {
        if depth == levels.len() {
            continue;
        }
        if depth > 0 {
            if let Some(limit) = levels[depth - 1].1 {
                if expanded_at[depth] >= limit {
                    continue;
                }
            }
        }
        expanded_at[depth] += 1;
        out.requests += 1;
        let width = levels[depth].0;
        for next in adj[&node].iter().take(width) {
            if seen.contains(next) {
                out.duplicates += 1;
                continue;
            }
            seen.insert(next.clone());
            out.items.push(next.clone());
            out.depths.push(depth + 1);
            queue.push_back((next.clone(), depth + 1));
        }
    }
    out
}

pub fn classic(width: usize, depth: usize) -> Vec<(usize, Option<usize>)> {
    vec![(width, None); depth]
}

/// Algorithm 1 lines 4–15 as written: cached items of `L` first, then `L \ R`.
pub fn oracle_assemble(list: &[String], n: usize, cache: &HashSet<String>) -> Vec<(String, bool)> {
    let mut r: Vec<(String, bool)> = Vec::new();
    for c in list {
        if cache.contains(c) && r.len() < n {
            r.push((c.clone(), true));
        }
    }
    for c in list {
        if r.len() >= n {
            break;
        }
        if !r.iter().any(|(x, _)| x == c) {
            r.push((c.clone(), false));
        }
    }
    r
}

/// Position probabilities renormalized over a list of `len` entries.
pub fn renormalized(p: &[f64], len: usize) -> Vec<f64> {
    let head = &p[..len.min(p.len())];
    let total: f64 = head.iter().sum();
    head.iter().map(|x| x / total).collect()
}

/// Expected hit ratio over requests `2..=K` by full enumeration of seed and
/// position choices, with `lists(item)` giving the presented list.
pub fn exact_session_chr(
    seeds: &[String],
    p: &[f64],
    requests: usize,
    lists: &dyn Fn(&str) -> Vec<(String, bool)>,
) -> f64 {
    fn walk(item: &str, remaining: usize, p: &[f64], lists: &dyn Fn(&str) -> Vec<(String, bool)>) -> f64 {
        if remaining == 0 {
            return 0.0;
        }
        let list = lists(item);
        if list.is_empty() {
            return 0.0;
        }
        let probs = renormalized(p, list.len());
        list.iter()
            .zip(probs)
            .map(|((next, cached), pr)| pr * (f64::from(u8::from(*cached)) + walk(next, remaining - 1, p, lists)))
            .sum()
    }
    let per_seed = 1.0 / seeds.len() as f64;
    let expected_hits: f64 = seeds.iter().map(|s| per_seed * walk(s, requests - 1, p, lists)).sum();
    expected_hits / (requests - 1) as f64
}
