//! Topological mission map: intersections, buildings, and a depot joined by
//! street edges. Buildings carry the perimeter and floor count that define
//! search workloads; edges carry the ids of adversaries crossing them.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAP_SCHEMA_VERSION: u32 = 1;

/// Dense node identifier (0..node_count).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NodeKind {
    Intersection,
    Building { perimeter: f64, floors: u32 },
    Depot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapNode {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    #[serde(flatten)]
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEdge {
    pub a: NodeId,
    pub b: NodeId,
    pub length: f64,
    /// Ids of adversaries crossing this edge (smoke/bomb placement or a
    /// dynamic patrol passing through).
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub adversaries: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapGraph {
    pub schema_version: u32,
    #[serde(rename = "node")]
    pub nodes: Vec<MapNode>,
    #[serde(rename = "edge")]
    pub edges: Vec<MapEdge>,
}

impl MapGraph {
    pub fn node(&self, id: NodeId) -> &MapNode {
        &self.nodes[id.index()]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depot(&self) -> NodeId {
        self.nodes
            .iter()
            .find(|n| matches!(n.kind, NodeKind::Depot))
            .map(|n| n.id)
            .expect("validated map has a depot")
    }

    pub fn is_building(&self, id: NodeId) -> bool {
        matches!(self.node(id).kind, NodeKind::Building { .. })
    }

    /// Outdoor/indoor search workload of a building: floors times perimeter,
    /// in meters of coverage.
    pub fn building_workload(&self, id: NodeId) -> Option<f64> {
        match self.node(id).kind {
            NodeKind::Building { perimeter, floors } => Some(perimeter * floors as f64),
            _ => None,
        }
    }

    pub fn euclid(&self, a: NodeId, b: NodeId) -> f64 {
        let (na, nb) = (self.node(a), self.node(b));
        ((na.x - nb.x).powi(2) + (na.y - nb.y).powi(2)).sqrt()
    }

    /// Adjacency list: for each node, (edge index, neighbor) pairs sorted by
    /// neighbor id for deterministic traversal.
    pub fn adjacency(&self) -> Vec<Vec<(usize, NodeId)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            adj[e.a.index()].push((i, e.b));
            adj[e.b.index()].push((i, e.a));
        }
        for list in &mut adj {
            list.sort_by_key(|&(_, n)| n);
        }
        adj
    }

    pub fn edge_between(&self, a: NodeId, b: NodeId) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
    }

    /// Bounding-box extent used for feature normalization; at least 1 m.
    pub fn extent(&self) -> (f64, f64) {
        let (mut w, mut h) = (0.0f64, 0.0f64);
        for n in &self.nodes {
            w = w.max(n.x.abs());
            h = h.max(n.y.abs());
        }
        (w.max(1.0), h.max(1.0))
    }

    /// Checks every structural invariant and names the first violation.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| -> Result<()> {
            Err(Error::InvalidFile {
                path: "<map>".into(),
                reason,
            })
        };
        if self.schema_version != MAP_SCHEMA_VERSION {
            return fail(format!(
                "unsupported map schema version {}",
                self.schema_version
            ));
        }
        if self.nodes.is_empty() {
            return fail("map has no nodes".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id.index() != i {
                return fail(format!(
                    "node ids must be dense and ordered: position {i} holds {}",
                    n.id
                ));
            }
            if let NodeKind::Building { perimeter, floors } = n.kind {
                if perimeter <= 0.0 || floors == 0 {
                    return fail(format!(
                        "building {} needs positive perimeter and floors",
                        n.id
                    ));
                }
            }
        }
        let depots = self
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Depot))
            .count();
        if depots != 1 {
            return fail(format!("map must have exactly one depot, found {depots}"));
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if e.a.index() >= self.nodes.len() || e.b.index() >= self.nodes.len() {
                return fail(format!("edge {}-{} references unknown node", e.a, e.b));
            }
            if e.a == e.b {
                return fail(format!("self-loop on {}", e.a));
            }
            let key = (e.a.min(e.b), e.a.max(e.b));
            if !seen.insert(key) {
                return fail(format!("duplicate edge {}-{}", e.a, e.b));
            }
            let straight = self.euclid(e.a, e.b);
            if e.length < straight - 1e-9 {
                return fail(format!(
                    "edge {}-{} length {} below straight-line distance {straight}",
                    e.a, e.b, e.length
                ));
            }
            if e.length <= 0.0 {
                return fail(format!("edge {}-{} needs positive length", e.a, e.b));
            }
        }
        // Connectivity by BFS from node 0.
        let adj = self.adjacency();
        let mut visited = vec![false; self.nodes.len()];
        let mut queue = std::collections::VecDeque::from([0usize]);
        visited[0] = true;
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &(_, v) in &adj[u] {
                if !visited[v.index()] {
                    visited[v.index()] = true;
                    reached += 1;
                    queue.push_back(v.index());
                }
            }
        }
        if reached != self.nodes.len() {
            return fail(format!(
                "map is disconnected: reached {reached} of {} nodes",
                self.nodes.len()
            ));
        }
        Ok(())
    }
}

pub fn save_map(map: &MapGraph, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(map)
        .map_err(|e| Error::InvalidConfig(format!("map serialization: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_map(path: &Path) -> Result<MapGraph> {
    let text = std::fs::read_to_string(path)?;
    let map: MapGraph = toml::from_str(&text).map_err(|e| Error::TomlParse {
        path: path.display().to_string(),
        source: e,
    })?;
    map.validate().map_err(|e| match e {
        Error::InvalidFile { reason, .. } => Error::InvalidFile {
            path: path.display().to_string(),
            reason,
        },
        other => other,
    })?;
    Ok(map)
}

/// Convenience builder for handcrafted maps in tests and examples.
pub struct MapBuilder {
    nodes: Vec<MapNode>,
    edges: Vec<MapEdge>,
}

impl MapBuilder {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn node(&mut self, x: f64, y: f64, kind: NodeKind) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(MapNode { id, x, y, kind });
        id
    }

    pub fn intersection(&mut self, x: f64, y: f64) -> NodeId {
        self.node(x, y, NodeKind::Intersection)
    }

    pub fn building(&mut self, x: f64, y: f64, perimeter: f64, floors: u32) -> NodeId {
        self.node(x, y, NodeKind::Building { perimeter, floors })
    }

    pub fn depot(&mut self, x: f64, y: f64) -> NodeId {
        self.node(x, y, NodeKind::Depot)
    }

    pub fn edge(&mut self, a: NodeId, b: NodeId, length: f64) -> &mut Self {
        self.edges.push(MapEdge {
            a,
            b,
            length,
            adversaries: BTreeSet::new(),
        });
        self
    }

    /// Edge with exact straight-line length.
    pub fn straight_edge(&mut self, a: NodeId, b: NodeId) -> &mut Self {
        let len = {
            let (na, nb) = (&self.nodes[a.index()], &self.nodes[b.index()]);
            ((na.x - nb.x).powi(2) + (na.y - nb.y).powi(2)).sqrt()
        };
        self.edge(a, b, len)
    }

    pub fn annotate(&mut self, a: NodeId, b: NodeId, adversary: u32) -> &mut Self {
        let e = self
            .edges
            .iter_mut()
            .find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
            .expect("annotate: edge not found");
        e.adversaries.insert(adversary);
        self
    }

    pub fn build(self) -> Result<MapGraph> {
        let map = MapGraph {
            schema_version: MAP_SCHEMA_VERSION,
            nodes: self.nodes,
            edges: self.edges,
        };
        map.validate()?;
        Ok(map)
    }
}

impl Default for MapBuilder {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_map() -> MapGraph {
        let mut b = MapBuilder::new();
        let depot = b.depot(0.0, 0.0);
        let i1 = b.intersection(100.0, 0.0);
        let bld = b.building(200.0, 0.0, 40.0, 2);
        b.straight_edge(depot, i1);
        b.straight_edge(i1, bld);
        b.build().unwrap()
    }

    #[test]
    fn valid_map_roundtrips_through_file() {
        let map = line_map();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.toml");
        save_map(&map, &path).unwrap();
        let back = load_map(&path).unwrap();
        assert_eq!(map, back);
    }

    #[test]
    fn short_edge_rejected() {
        let mut b = MapBuilder::new();
        let depot = b.depot(0.0, 0.0);
        let i1 = b.intersection(100.0, 0.0);
        b.edge(depot, i1, 50.0);
        let err = b.build().unwrap_err();
        assert!(err.to_string().contains("straight-line"), "{err}");
    }

    #[test]
    fn two_depots_rejected() {
        let mut b = MapBuilder::new();
        let d1 = b.depot(0.0, 0.0);
        let d2 = b.depot(100.0, 0.0);
        b.straight_edge(d1, d2);
        let err = b.build().unwrap_err();
        assert!(err.to_string().contains("depot"), "{err}");
    }

    #[test]
    fn disconnected_map_rejected() {
        let mut b = MapBuilder::new();
        let d = b.depot(0.0, 0.0);
        let i1 = b.intersection(100.0, 0.0);
        let _lonely = b.intersection(500.0, 500.0);
        b.straight_edge(d, i1);
        let err = b.build().unwrap_err();
        assert!(err.to_string().contains("disconnected"), "{err}");
    }

    #[test]
    fn workload_is_floors_times_perimeter() {
        let map = line_map();
        assert_eq!(map.building_workload(NodeId(2)), Some(80.0));
        assert_eq!(map.building_workload(NodeId(0)), None);
    }
}
