#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet, VecDeque};

use netchoice_core::graph::Edge;
use netchoice_core::ids::AuthorId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `m` distinct directed non-loop edges over `n` nodes, edge `i` at time `i + 1`.
pub fn random_stream(seed: u64, n: u32, m: usize) -> Vec<Edge> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(m);
    while out.len() < m {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b && seen.insert((a, b)) {
            out.push(Edge {
                source: AuthorId(a),
                target: AuthorId(b),
                first_time: out.len() as i64 + 1,
                interaction_count: 1,
            });
        }
    }
    out
}

/// Undirected adjacency over the edge prefix.
pub fn adjacency(edges: &[Edge], n: usize) -> Vec<BTreeSet<u32>> {
    let mut adj = vec![BTreeSet::new(); n];
    for e in edges {
        adj[e.source.index()].insert(e.target.0);
        adj[e.target.index()].insert(e.source.0);
    }
    adj
}

/// Component label per node by BFS, or `None` for nodes with no edge.
pub fn bfs_components(adj: &[BTreeSet<u32>]) -> Vec<Option<usize>> {
    let mut label = vec![None; adj.len()];
    let mut next = 0;
    for start in 0..adj.len() {
        if label[start].is_some() || adj[start].is_empty() {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        label[start] = Some(next);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if label[w as usize].is_none() {
                    label[w as usize] = Some(next);
                    queue.push_back(w as usize);
                }
            }
        }
        next += 1;
    }
    label
}

pub fn component_size(labels: &[Option<usize>], v: usize) -> usize {
    match labels[v] {
        None => 1,
        Some(l) => labels.iter().filter(|x| **x == Some(l)).count(),
    }
}
