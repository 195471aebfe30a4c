//! Path planning over the mission map under the three tactical modes, plus
//! the probability-weighted non-dominated node filter that defines the
//! policy's destination set.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pareto::nondominated_filter_min;
use crate::sim::map::{MapGraph, NodeId};
use crate::sim::scenario::{AdversaryKind, AdversaryState};

/// Route risk posture. Aggressive ignores adversaries, normal avoids deadly
/// ones (bombs, live dynamic adversaries), cautious avoids every annotated
/// edge including smoke.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMode {
    Aggressive,
    Normal,
    Cautious,
}

impl PathMode {
    pub const ALL: [PathMode; 3] = [PathMode::Aggressive, PathMode::Normal, PathMode::Cautious];

    pub fn label(self) -> &'static str {
        match self {
            PathMode::Aggressive => "aggressive",
            PathMode::Normal => "normal",
            PathMode::Cautious => "cautious",
        }
    }
}

/// A planned route: the node sequence including both endpoints and its
/// total length in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPlan {
    pub nodes: Vec<NodeId>,
    pub length: f64,
}

/// Whether `mode` may traverse an edge given the live adversaries on it.
/// Consumed bombs and neutralized dynamic adversaries no longer block.
pub fn edge_admissible(
    mode: PathMode,
    edge_adversaries: &std::collections::BTreeSet<u32>,
    adversaries: &[AdversaryState],
) -> bool {
    if edge_adversaries.is_empty() {
        return true;
    }
    for &id in edge_adversaries {
        let adv = &adversaries[id as usize];
        if !adv.alive {
            continue;
        }
        match (mode, adv.kind) {
            (PathMode::Aggressive, _) => {}
            (PathMode::Normal, AdversaryKind::Bomb | AdversaryKind::Dynamic) => return false,
            (PathMode::Normal, AdversaryKind::Smoke) => {}
            (PathMode::Cautious, _) => return false,
        }
    }
    true
}

#[derive(PartialEq)]
struct QueueEntry {
    dist: f64,
    path: Vec<NodeId>,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert so the smallest (dist, path) pops
        // first. Ties on distance break toward the lexicographically smaller
        // node sequence.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.path.cmp(&self.path))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest admissible path from `from` to `to` under `mode`. Returns
/// `None` when no admissible path exists. Equal-length routes tie-break by
/// lexicographic node sequence.
pub fn plan_path(
    map: &MapGraph,
    adversaries: &[AdversaryState],
    from: NodeId,
    to: NodeId,
    mode: PathMode,
) -> Result<Option<PathPlan>> {
    if from.index() >= map.node_count() || to.index() >= map.node_count() {
        return Err(Error::Sim(format!("plan_path endpoints {from}/{to} not in map")));
    }
    let adj = map.adjacency();
    let mut done = vec![false; map.node_count()];
    let mut heap = BinaryHeap::new();
    heap.push(QueueEntry {
        dist: 0.0,
        path: vec![from],
    });
    while let Some(QueueEntry { dist, path }) = heap.pop() {
        let u = *path.last().unwrap();
        if done[u.index()] {
            continue;
        }
        done[u.index()] = true;
        if u == to {
            return Ok(Some(PathPlan {
                nodes: path,
                length: dist,
            }));
        }
        for &(edge_idx, v) in &adj[u.index()] {
            if done[v.index()] {
                continue;
            }
            let edge = &map.edges[edge_idx];
            if !edge_admissible(mode, &edge.adversaries, adversaries) {
                continue;
            }
            let mut next = path.clone();
            next.push(v);
            heap.push(QueueEntry {
                dist: dist + edge.length,
                path: next,
            });
        }
    }
    Ok(None)
}

/// Shortest-path distances from `source` to every node over all edges
/// (aggressive metric); unreachable nodes get infinity.
pub fn distances_from(map: &MapGraph, source: NodeId) -> Vec<f64> {
    let adj = map.adjacency();
    let mut dist = vec![f64::INFINITY; map.node_count()];
    let mut done = vec![false; map.node_count()];
    dist[source.index()] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push((std::cmp::Reverse(ordered(0.0)), source));
    while let Some((std::cmp::Reverse(d), u)) = heap.pop() {
        if done[u.index()] {
            continue;
        }
        done[u.index()] = true;
        let du = d.0;
        for &(edge_idx, v) in &adj[u.index()] {
            let nd = du + map.edges[edge_idx].length;
            if nd < dist[v.index()] {
                dist[v.index()] = nd;
                heap.push((std::cmp::Reverse(ordered(nd)), v));
            }
        }
    }
    dist
}

#[derive(PartialEq, PartialOrd)]
struct OrderedF64(f64);
impl Eq for OrderedF64 {}
#[allow(clippy::derive_ord_xor_partial_ord)]
impl Ord for OrderedF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}
fn ordered(v: f64) -> OrderedF64 {
    OrderedF64(v)
}

/// Critical-location filter: for each map node, build the objective vector
/// of probability-weighted travel distances to every active target (one
/// component per target, minimization), keep the non-dominated nodes, and
/// union in each active target's own entrance node. Returns node ids in
/// ascending order.
///
/// Travel time is proportional to distance at a common speed, so distances
/// stand in for times without changing dominance.
pub fn pareto_nodes(map: &MapGraph, targets: &[(NodeId, f64)]) -> Result<Vec<NodeId>> {
    let active: Vec<(NodeId, f64)> = targets.iter().copied().filter(|(_, p)| *p > 0.0).collect();
    if active.is_empty() {
        return Err(Error::Sim("pareto_nodes: no active targets".into()));
    }
    let per_target_dist: Vec<Vec<f64>> = active
        .iter()
        .map(|&(t, _)| distances_from(map, t))
        .collect();
    let objectives: Vec<Vec<f64>> = (0..map.node_count())
        .map(|k| {
            active
                .iter()
                .enumerate()
                .map(|(ti, &(_, p))| {
                    let d = per_target_dist[ti][k];
                    if d.is_finite() {
                        p * d
                    } else {
                        f64::INFINITY
                    }
                })
                .collect()
        })
        .collect();
    let mut kept: Vec<NodeId> = nondominated_filter_min(&objectives)?
        .into_iter()
        .map(|i| NodeId(i as u32))
        .collect();
    for &(t, _) in &active {
        if !kept.contains(&t) {
            kept.push(t);
        }
    }
    kept.sort();
    Ok(kept)
}
