//! Directed temporal author network.
//!
//! [`NetworkState`] is the live graph: adjacency, the edge set and an
//! incremental union-find over the undirected view. [`TemporalGraph`] owns
//! the full time-sorted edge stream and replays it into a `NetworkState`
//! behind a monotone cursor. After `advance_to(t)` the state contains
//! exactly the nodes activated and edges formed strictly before `t`.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ids::{AuthorId, Timestamp};
use crate::ingest::{DirectedInteraction, UpdateEvent};

#[inline]
fn pair_key(a: AuthorId, b: AuthorId) -> u64 {
    (u64::from(a.0) << 32) | u64::from(b.0)
}

/// Union by size with path halving on writes. Reads never mutate, so
/// queries can run concurrently between unions.
#[derive(Debug, Clone, Default)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn grow(&mut self, n: usize) {
        let old = self.parent.len();
        if n > old {
            self.parent.extend(old as u32..n as u32);
            self.size.resize(n, 1);
        }
    }

    pub fn find(&self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            x = self.parent[x as usize];
        }
        x
    }

    fn find_mut(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    /// Merge the sets of `a` and `b`; returns the new root when they differed.
    pub fn union(&mut self, a: u32, b: u32) -> Option<u32> {
        let (mut ra, mut rb) = (self.find_mut(a), self.find_mut(b));
        if ra == rb {
            return None;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        Some(ra)
    }

    pub fn set_size(&self, x: u32) -> u32 {
        self.size[self.find(x) as usize]
    }
}

/// Graph state at one moment: only activated nodes and applied edges.
#[derive(Debug, Clone, Default)]
pub struct NetworkState {
    active: Vec<bool>,
    activated: Vec<AuthorId>,
    out_adj: Vec<Vec<AuthorId>>,
    in_adj: Vec<Vec<AuthorId>>,
    undirected: Vec<Vec<AuthorId>>,
    edges: HashSet<u64>,
    components: UnionFind,
    largest_size: u32,
    largest_root: Option<u32>,
}

impl NetworkState {
    pub fn new(capacity: usize) -> Self {
        let mut s = NetworkState::default();
        s.ensure(capacity);
        s
    }

    fn ensure(&mut self, n: usize) {
        if n > self.active.len() {
            self.active.resize(n, false);
            self.out_adj.resize_with(n, Vec::new);
            self.in_adj.resize_with(n, Vec::new);
            self.undirected.resize_with(n, Vec::new);
            self.components.grow(n);
        }
    }

    /// Mark a node active; idempotent.
    pub fn activate(&mut self, a: AuthorId) {
        self.ensure(a.index() + 1);
        if !self.active[a.index()] {
            self.active[a.index()] = true;
            self.activated.push(a);
            if self.largest_size == 0 {
                self.largest_size = 1;
                self.largest_root = Some(a.0);
            }
        }
    }

    /// Insert edge `a→b`, activating both endpoints. Returns false when the
    /// edge already existed.
    pub fn add_edge(&mut self, a: AuthorId, b: AuthorId) -> Result<bool> {
        if a == b {
            return Err(Error::InvalidEdge(format!("self edge on {a}")));
        }
        self.activate(a);
        self.activate(b);
        if !self.edges.insert(pair_key(a, b)) {
            return Ok(false);
        }
        self.out_adj[a.index()].push(b);
        self.in_adj[b.index()].push(a);
        if !self.edges.contains(&pair_key(b, a)) {
            self.undirected[a.index()].push(b);
            self.undirected[b.index()].push(a);
        }
        if let Some(root) = self.components.union(a.0, b.0) {
            let size = self.components.size[root as usize];
            if size >= self.largest_size {
                self.largest_size = size;
                self.largest_root = Some(root);
            }
        }
        Ok(true)
    }

    pub fn capacity(&self) -> usize {
        self.active.len()
    }

    pub fn is_activated(&self, a: AuthorId) -> bool {
        self.active.get(a.index()).copied().unwrap_or(false)
    }

    /// Activated nodes in activation order.
    pub fn activated(&self) -> &[AuthorId] {
        &self.activated
    }

    pub fn n_activated(&self) -> usize {
        self.activated.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn out_degree(&self, a: AuthorId) -> usize {
        self.out_adj.get(a.index()).map_or(0, Vec::len)
    }

    pub fn in_degree(&self, a: AuthorId) -> usize {
        self.in_adj.get(a.index()).map_or(0, Vec::len)
    }

    pub fn out_neighbors(&self, a: AuthorId) -> &[AuthorId] {
        self.out_adj.get(a.index()).map_or(&[], Vec::as_slice)
    }

    pub fn in_neighbors(&self, a: AuthorId) -> &[AuthorId] {
        self.in_adj.get(a.index()).map_or(&[], Vec::as_slice)
    }

    /// Distinct neighbors ignoring direction.
    pub fn undirected_neighbors(&self, a: AuthorId) -> &[AuthorId] {
        self.undirected.get(a.index()).map_or(&[], Vec::as_slice)
    }

    pub fn has_edge(&self, a: AuthorId, b: AuthorId) -> bool {
        a != b && self.edges.contains(&pair_key(a, b))
    }

    fn linked(&self, a: AuthorId, b: AuthorId) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    pub fn same_wcc(&self, a: AuthorId, b: AuthorId) -> bool {
        if a == b {
            return true;
        }
        if a.index() >= self.capacity() || b.index() >= self.capacity() {
            return false;
        }
        self.components.find(a.0) == self.components.find(b.0)
    }

    /// Size of the weak component containing `a` (1 for isolates, 0 if unknown).
    pub fn component_size(&self, a: AuthorId) -> u32 {
        if a.index() >= self.capacity() {
            return 0;
        }
        self.components.set_size(a.0)
    }

    /// Whether some third node is an undirected neighbor of both.
    pub fn is_friend_of_friend(&self, a: AuthorId, b: AuthorId) -> bool {
        if a == b {
            return false;
        }
        let (na, nb) = (self.undirected_neighbors(a), self.undirected_neighbors(b));
        let (small, other) = if na.len() <= nb.len() { (na, b) } else { (nb, a) };
        small
            .iter()
            .any(|&c| c != a && c != b && self.linked(c, other))
    }

    pub fn largest_wcc_size(&self) -> u32 {
        self.largest_size
    }

    /// Root id of the current largest weak component.
    pub fn largest_wcc_root(&self) -> Option<AuthorId> {
        self.largest_root
            .map(|r| AuthorId(self.components.find(r)))
    }

    pub fn largest_wcc_share(&self) -> Result<f64> {
        if self.activated.is_empty() {
            return Err(Error::NoActivatedNodes);
        }
        Ok(f64::from(self.largest_size) / self.activated.len() as f64)
    }

    /// Strongly connected component sizes over activated nodes, descending.
    pub fn scc_sizes(&self) -> Vec<usize> {
        let mut sizes = tarjan_scc(self.capacity(), &self.activated, &self.out_adj);
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes
    }
}

/// Iterative Tarjan; returns component sizes over `nodes`.
fn tarjan_scc(capacity: usize, nodes: &[AuthorId], adj: &[Vec<AuthorId>]) -> Vec<usize> {
    const UNVISITED: u32 = u32::MAX;
    let mut index = vec![UNVISITED; capacity];
    let mut low = vec![0u32; capacity];
    let mut on_stack = vec![false; capacity];
    let mut stack: Vec<u32> = Vec::new();
    let mut call: Vec<(u32, usize)> = Vec::new();
    let mut next_index = 0u32;
    let mut sizes = Vec::new();

    for &start in nodes {
        if index[start.index()] != UNVISITED {
            continue;
        }
        call.push((start.0, 0));
        while let Some(&mut (v, ref mut child)) = call.last_mut() {
            let vi = v as usize;
            if *child == 0 && index[vi] == UNVISITED {
                index[vi] = next_index;
                low[vi] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[vi] = true;
            }
            if let Some(&w) = adj[vi].get(*child) {
                *child += 1;
                let wi = w.index();
                if index[wi] == UNVISITED {
                    call.push((w.0, 0));
                } else if on_stack[wi] {
                    low[vi] = low[vi].min(index[wi]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                let p = parent as usize;
                low[p] = low[p].min(low[vi]);
            }
            if low[vi] == index[vi] {
                let mut size = 0;
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w as usize] = false;
                    size += 1;
                    if w == v {
                        break;
                    }
                }
                sizes.push(size);
            }
        }
    }
    sizes
}

/// One unique directed edge: the first interaction of an ordered pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub source: AuthorId,
    pub target: AuthorId,
    pub first_time: Timestamp,
    pub interaction_count: u32,
}

/// Snapshot of the weak-component structure at the cursor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentSnapshot {
    pub time: Timestamp,
    pub activated: usize,
    pub largest_size: u32,
    pub largest_share: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TemporalGraph {
    edges: Vec<Edge>,
    edge_lookup: HashMap<u64, u32>,
    activations: Vec<(Timestamp, AuthorId)>,
    activation_by_node: Vec<Option<Timestamp>>,
    capacity: usize,
    state: NetworkState,
    next_edge: usize,
    next_activation: usize,
    cursor: Timestamp,
}

impl TemporalGraph {
    /// Collapse interactions to unique edges; nodes activate at their first
    /// interaction (as source or target).
    pub fn build(interactions: &[DirectedInteraction]) -> Self {
        Self::build_with_activity(interactions, &[])
    }

    /// As [`build`](Self::build), with node activation at the earlier of the
    /// first update or first interaction.
    pub fn build_with_activity(interactions: &[DirectedInteraction], updates: &[UpdateEvent]) -> Self {
        let mut first: HashMap<u64, (Timestamp, u32)> = HashMap::new();
        for d in interactions {
            if d.source == d.target {
                continue;
            }
            first
                .entry(pair_key(d.source, d.target))
                .and_modify(|(t, c)| {
                    *t = (*t).min(d.timestamp);
                    *c += 1;
                })
                .or_insert((d.timestamp, 1));
        }
        let edges = first
            .into_iter()
            .map(|(key, (t, count))| Edge {
                source: AuthorId((key >> 32) as u32),
                target: AuthorId(key as u32),
                first_time: t,
                interaction_count: count,
            })
            .collect();
        let activity = updates.iter().map(|u| (u.author, u.timestamp));
        Self::from_edges(edges, activity)
    }

    /// Build from unique edges plus extra `(author, time)` activity marks.
    pub fn from_edges<I>(mut edges: Vec<Edge>, activity: I) -> Self
    where
        I: IntoIterator<Item = (AuthorId, Timestamp)>,
    {
        edges.sort_unstable_by_key(|e| (e.first_time, e.source, e.target));
        let mut activation: HashMap<AuthorId, Timestamp> = HashMap::new();
        let mut mark = |a: AuthorId, t: Timestamp| {
            activation
                .entry(a)
                .and_modify(|cur| *cur = (*cur).min(t))
                .or_insert(t);
        };
        for e in &edges {
            mark(e.source, e.first_time);
            mark(e.target, e.first_time);
        }
        for (a, t) in activity {
            mark(a, t);
        }
        let mut activations: Vec<(Timestamp, AuthorId)> =
            activation.into_iter().map(|(a, t)| (t, a)).collect();
        activations.sort_unstable();
        let capacity = activations.iter().map(|(_, a)| a.index() + 1).max().unwrap_or(0);
        let mut activation_by_node = vec![None; capacity];
        for &(t, a) in &activations {
            activation_by_node[a.index()] = Some(t);
        }
        let edge_lookup = edges
            .iter()
            .enumerate()
            .map(|(i, e)| (pair_key(e.source, e.target), i as u32))
            .collect();
        TemporalGraph {
            edges,
            edge_lookup,
            activations,
            activation_by_node,
            capacity,
            state: NetworkState::new(capacity),
            next_edge: 0,
            next_activation: 0,
            cursor: Timestamp::MIN,
        }
    }

    /// Unique edges sorted by `(first_time, source, target)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `(activation time, author)` sorted by time then id.
    pub fn activations(&self) -> &[(Timestamp, AuthorId)] {
        &self.activations
    }

    pub fn activation_time(&self, a: AuthorId) -> Option<Timestamp> {
        self.activation_by_node.get(a.index()).copied().flatten()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// First time of edge `a→b` anywhere in the stream, ignoring the cursor.
    pub fn edge_time(&self, a: AuthorId, b: AuthorId) -> Option<Timestamp> {
        self.edge_lookup
            .get(&pair_key(a, b))
            .map(|&i| self.edges[i as usize].first_time)
    }

    pub fn cursor(&self) -> Timestamp {
        self.cursor
    }

    /// Apply all activations and edges with time strictly before `t`.
    pub fn advance_to(&mut self, t: Timestamp) -> Result<()> {
        if t < self.cursor {
            return Err(Error::CursorRegression {
                requested: t,
                current: self.cursor,
            });
        }
        while let Some(&(at, a)) = self.activations.get(self.next_activation) {
            if at >= t {
                break;
            }
            self.state.activate(a);
            self.next_activation += 1;
        }
        while let Some(e) = self.edges.get(self.next_edge) {
            if e.first_time >= t {
                break;
            }
            self.state.add_edge(e.source, e.target)?;
            self.next_edge += 1;
        }
        self.cursor = t;
        Ok(())
    }

    /// Apply everything.
    pub fn advance_to_end(&mut self) -> Result<()> {
        self.advance_to(Timestamp::MAX)
    }

    /// Rewind to an empty state.
    pub fn reset(&mut self) {
        self.state = NetworkState::new(self.capacity);
        self.next_edge = 0;
        self.next_activation = 0;
        self.cursor = Timestamp::MIN;
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn out_degree(&self, a: AuthorId) -> usize {
        self.state.out_degree(a)
    }

    pub fn in_degree(&self, a: AuthorId) -> usize {
        self.state.in_degree(a)
    }

    pub fn has_edge(&self, a: AuthorId, b: AuthorId) -> bool {
        self.state.has_edge(a, b)
    }

    pub fn same_wcc(&self, a: AuthorId, b: AuthorId) -> bool {
        self.state.same_wcc(a, b)
    }

    pub fn is_friend_of_friend(&self, a: AuthorId, b: AuthorId) -> bool {
        self.state.is_friend_of_friend(a, b)
    }

    pub fn largest_wcc_share(&self) -> Result<f64> {
        self.state.largest_wcc_share()
    }

    pub fn scc_snapshot(&self) -> Vec<usize> {
        self.state.scc_sizes()
    }

    pub fn snapshot(&self) -> ComponentSnapshot {
        ComponentSnapshot {
            time: self.cursor,
            activated: self.state.n_activated(),
            largest_size: self.state.largest_wcc_size(),
            largest_share: self.state.largest_wcc_share().ok(),
        }
    }

    /// Largest-WCC series at each of `times` (which must be nondecreasing
    /// and not behind the cursor).
    pub fn largest_wcc_series(&mut self, times: &[Timestamp]) -> Result<Vec<ComponentSnapshot>> {
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            self.advance_to(t)?;
            out.push(self.snapshot());
        }
        Ok(out)
    }

    /// CSV `source,target,first_time,interaction_count` with names from `name`.
    pub fn write_edge_list<W, F>(&self, mut out: W, name: F) -> std::io::Result<()>
    where
        W: Write,
        F: Fn(AuthorId) -> String,
    {
        writeln!(out, "source,target,first_time,interaction_count")?;
        for e in &self.edges {
            writeln!(
                out,
                "{},{},{},{}",
                name(e.source),
                name(e.target),
                e.first_time,
                e.interaction_count
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::SiteId;
    use crate::ingest::InteractionKind;

    fn di(s: u32, t: u32, time: i64) -> DirectedInteraction {
        DirectedInteraction {
            source: AuthorId(s),
            target: AuthorId(t),
            timestamp: time,
            kind: InteractionKind::Guestbook,
            via_site: SiteId(0),
        }
    }

    const A: AuthorId = AuthorId(0);
    const B: AuthorId = AuthorId(1);
    const C: AuthorId = AuthorId(2);

    #[test]
    fn build_keeps_first_occurrence_with_count() {
        let g = TemporalGraph::build(&[di(0, 1, 7), di(0, 1, 3)]);
        assert_eq!(
            g.edges(),
            &[Edge {
                source: A,
                target: B,
                first_time: 3,
                interaction_count: 2
            }]
        );
        assert!(TemporalGraph::build(&[]).edges().is_empty());
    }

    #[test]
    fn cursor_is_strict_and_monotone() {
        let mut g = TemporalGraph::build(&[di(1, 0, 5)]);
        g.advance_to(5).unwrap();
        assert!(!g.has_edge(B, A));
        g.advance_to(6).unwrap();
        assert!(g.has_edge(B, A));
        assert!(!g.has_edge(A, B));
        assert!(matches!(g.advance_to(2), Err(Error::CursorRegression { .. })));
    }

    #[test]
    fn degrees_star() {
        let edges: Vec<_> = (1..=5).map(|i| di(i, 0, i as i64)).collect();
        let mut g = TemporalGraph::build(&edges);
        g.advance_to_end().unwrap();
        assert_eq!(g.in_degree(A), 5);
        assert_eq!(g.out_degree(A), 0);
        assert_eq!(g.out_degree(AuthorId(3)), 1);
        assert_eq!(g.in_degree(AuthorId(99)), 0);
    }

    #[test]
    fn wcc_and_friend_of_friend() {
        // a→c, b→c
        let mut g = TemporalGraph::build(&[di(0, 2, 1), di(1, 2, 2)]);
        g.advance_to_end().unwrap();
        assert!(g.same_wcc(A, B));
        assert!(g.is_friend_of_friend(A, B));
        assert!(!g.is_friend_of_friend(A, C));
        let mut g = TemporalGraph::build(&[di(0, 1, 1)]);
        g.advance_to_end().unwrap();
        assert!(!g.is_friend_of_friend(A, B));
        let mut g = TemporalGraph::build(&[di(0, 1, 1), di(2, 3, 1)]);
        g.advance_to_end().unwrap();
        assert!(!g.same_wcc(A, C));
        assert!(g.same_wcc(C, C));
    }

    #[test]
    fn largest_share_triangle_plus_isolate() {
        let mut g = TemporalGraph::from_edges(
            vec![
                Edge { source: A, target: B, first_time: 1, interaction_count: 1 },
                Edge { source: B, target: C, first_time: 1, interaction_count: 1 },
                Edge { source: C, target: A, first_time: 1, interaction_count: 1 },
            ],
            [(AuthorId(3), 0)],
        );
        assert!(matches!(g.largest_wcc_share(), Err(Error::NoActivatedNodes)));
        g.advance_to_end().unwrap();
        assert_eq!(g.largest_wcc_share().unwrap(), 0.75);
        assert_eq!(g.scc_snapshot(), vec![3, 1]);
    }

    #[test]
    fn all_isolates_share_is_one_over_n() {
        let mut g = TemporalGraph::from_edges(vec![], (0..4).map(|i| (AuthorId(i), 0)));
        g.advance_to(1).unwrap();
        assert_eq!(g.largest_wcc_share().unwrap(), 0.25);
        assert_eq!(g.state().largest_wcc_size(), 1);
    }

    #[test]
    fn scc_two_cycle_and_dag() {
        let mut g = TemporalGraph::build(&[di(0, 1, 1), di(1, 0, 2), di(1, 2, 3)]);
        g.advance_to_end().unwrap();
        assert_eq!(g.scc_snapshot(), vec![2, 1]);
        let mut dag = TemporalGraph::build(&[di(0, 1, 1), di(1, 2, 2), di(0, 2, 3)]);
        dag.advance_to_end().unwrap();
        assert_eq!(dag.scc_snapshot(), vec![1, 1, 1]);
    }

    #[test]
    fn self_edge_rejected_and_has_edge_irreflexive() {
        let mut s = NetworkState::new(2);
        assert!(s.add_edge(A, A).is_err());
        s.add_edge(A, B).unwrap();
        assert!(!s.add_edge(A, B).unwrap());
        assert!(!s.has_edge(A, A));
        assert_eq!(s.undirected_neighbors(A), &[B]);
        s.add_edge(B, A).unwrap();
        assert_eq!(s.undirected_neighbors(A), &[B]);
    }

    #[test]
    fn activation_uses_updates_when_earlier() {
        use crate::ids::UpdateId;
        use crate::ingest::RoleLabel;
        let updates = [UpdateEvent {
            author: C,
            site: SiteId(0),
            update: UpdateId(0),
            timestamp: 2,
            role: RoleLabel::CG,
        }];
        let mut g = TemporalGraph::build_with_activity(&[di(0, 1, 10)], &updates);
        g.advance_to(3).unwrap();
        assert_eq!(g.state().activated(), &[C]);
        assert_eq!(g.activation_time(A), Some(10));
    }

    #[test]
    fn edge_list_export() {
        let g = TemporalGraph::build(&[di(0, 1, 3), di(0, 1, 9)]);
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf, |a| format!("n{}", a.0)).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "source,target,first_time,interaction_count\nn0,n1,3,2\n"
        );
    }
}
