//! Seeded generator for synthetic street maps and mission scenarios: a
//! lattice with optional diagonals, buildings and a depot hung off
//! intersections, and adversaries scattered over street edges.
//!
//! A map is generated once; any number of scenarios (targets, goal, roster,
//! adversaries) can be generated on top of it, mirroring a mission pool on a
//! fixed piece of city.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::map::{MapBuilder, MapGraph, NodeId, NodeKind};
use crate::sim::scenario::{
    AdversaryKind, AdversaryState, PlatoonKind, PlatoonSpec, Scenario, SCENARIO_SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub grid_width: usize,
    pub grid_height: usize,
    /// Street block size, meters.
    pub spacing: f64,
    /// Probability of adding a diagonal street per block.
    pub diagonal_prob: f64,
    pub buildings: usize,
    pub targets: usize,
    pub smoke: usize,
    pub bombs: usize,
    pub dynamic: usize,
    pub uav_platoons: usize,
    pub uav_units: u32,
    pub ugv_platoons: usize,
    pub ugv_units: u32,
    /// Mission time limit, seconds.
    pub time_limit: f64,
    pub perimeter_range: (f64, f64),
    pub floors_range: (u32, u32),
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            grid_width: 4,
            grid_height: 3,
            spacing: 150.0,
            diagonal_prob: 0.3,
            buildings: 6,
            targets: 4,
            smoke: 1,
            bombs: 1,
            dynamic: 1,
            uav_platoons: 2,
            uav_units: 2,
            ugv_platoons: 2,
            ugv_units: 2,
            time_limit: 600.0,
            perimeter_range: (40.0, 100.0),
            floors_range: (1, 3),
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if self.grid_width < 2 || self.grid_height < 2 {
            return Err(Error::InvalidConfig("grid must be at least 2x2".into()));
        }
        if self.buildings < self.targets || self.targets == 0 {
            return Err(Error::InvalidConfig(format!(
                "need targets in 1..=buildings, got {} targets, {} buildings",
                self.targets, self.buildings
            )));
        }
        if self.buildings > self.grid_width * self.grid_height {
            return Err(Error::InvalidConfig(
                "more buildings than intersections".into(),
            ));
        }
        if self.ugv_platoons == 0 {
            return Err(Error::InvalidConfig(
                "roster needs at least one UGV platoon".into(),
            ));
        }
        if !(self.time_limit > 0.0) {
            return Err(Error::InvalidConfig("time_limit must be positive".into()));
        }
        Ok(())
    }
}

fn shuffle<T, R: Rng>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Generates the street lattice, buildings and depot. No adversary
/// annotations; those are scenario data.
pub fn generate_map(seed: u64, params: &GenParams) -> Result<MapGraph> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h, s) = (params.grid_width, params.grid_height, params.spacing);

    let mut b = MapBuilder::new();
    let depot = b.depot(-0.35 * s, -0.35 * s);
    let mut grid = vec![vec![NodeId(0); h]; w];
    for (i, col) in grid.iter_mut().enumerate() {
        for (j, cell) in col.iter_mut().enumerate() {
            *cell = b.intersection(i as f64 * s, j as f64 * s);
        }
    }
    b.straight_edge(depot, grid[0][0]);
    for i in 0..w {
        for j in 0..h {
            if i + 1 < w {
                b.straight_edge(grid[i][j], grid[i + 1][j]);
            }
            if j + 1 < h {
                b.straight_edge(grid[i][j], grid[i][j + 1]);
            }
        }
    }
    for i in 0..w - 1 {
        for j in 0..h - 1 {
            if rng.random::<f64>() < params.diagonal_prob {
                if rng.random::<f64>() < 0.5 {
                    b.straight_edge(grid[i][j], grid[i + 1][j + 1]);
                } else {
                    b.straight_edge(grid[i + 1][j], grid[i][j + 1]);
                }
            }
        }
    }

    let mut spots: Vec<(usize, usize)> =
        (0..w).flat_map(|i| (0..h).map(move |j| (i, j))).collect();
    shuffle(&mut rng, &mut spots);
    for &(i, j) in spots.iter().take(params.buildings) {
        let anchor = grid[i][j];
        let dx = if i == 0 { -0.3 } else { 0.3 } * s;
        let dy = if j == 0 { -0.3 } else { 0.3 } * s;
        let perimeter = rng.random_range(params.perimeter_range.0..=params.perimeter_range.1);
        let floors = rng.random_range(params.floors_range.0..=params.floors_range.1);
        let node = b.building(
            i as f64 * s + dx,
            j as f64 * s + dy,
            (perimeter * 10.0).round() / 10.0,
            floors,
        );
        b.straight_edge(anchor, node);
    }
    b.build()
}

/// Places targets, a goal, adversaries, and the roster onto an existing map.
pub fn generate_scenario_on(
    map: &MapGraph,
    seed: u64,
    params: &GenParams,
) -> Result<Scenario> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut buildings: Vec<NodeId> = map
        .nodes
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::Building { .. }))
        .map(|n| n.id)
        .collect();
    if buildings.len() < params.targets {
        return Err(Error::InvalidConfig(format!(
            "map has {} buildings but {} targets requested",
            buildings.len(),
            params.targets
        )));
    }
    shuffle(&mut rng, &mut buildings);
    let mut targets: Vec<NodeId> = buildings.into_iter().take(params.targets).collect();
    targets.sort();
    let goal = targets[rng.random_range(0..targets.len())];

    // Street edges joining two intersections are hazard candidates.
    let is_interchange = |id: NodeId| matches!(map.node(id).kind, NodeKind::Intersection);
    let mut street_edges: Vec<(NodeId, NodeId)> = map
        .edges
        .iter()
        .filter(|e| is_interchange(e.a) && is_interchange(e.b))
        .map(|e| (e.a, e.b))
        .collect();
    shuffle(&mut rng, &mut street_edges);
    let mut edge_iter = street_edges.into_iter();

    let mut adversaries = Vec::new();
    for kind in [AdversaryKind::Smoke, AdversaryKind::Bomb] {
        let count = match kind {
            AdversaryKind::Smoke => params.smoke,
            _ => params.bombs,
        };
        for _ in 0..count {
            let Some((u, v)) = edge_iter.next() else { break };
            adversaries.push(AdversaryState {
                id: adversaries.len() as u32,
                kind,
                edge: Some((u, v)),
                patrol: vec![],
                alive: true,
            });
        }
    }

    // Dynamic adversaries walk the intersection subgraph.
    let intersections: Vec<NodeId> = map
        .nodes
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::Intersection))
        .map(|n| n.id)
        .collect();
    let adj = map.adjacency();
    for _ in 0..params.dynamic {
        if intersections.is_empty() {
            break;
        }
        let start = intersections[rng.random_range(0..intersections.len())];
        let mut patrol = vec![start];
        for _ in 0..rng.random_range(2..=3usize) {
            let cur = *patrol.last().unwrap();
            let options: Vec<NodeId> = adj[cur.index()]
                .iter()
                .map(|&(_, v)| v)
                .filter(|&v| is_interchange(v))
                .filter(|&v| patrol.len() < 2 || patrol[patrol.len() - 2] != v)
                .collect();
            if options.is_empty() {
                break;
            }
            patrol.push(options[rng.random_range(0..options.len())]);
        }
        if patrol.len() >= 2 {
            adversaries.push(AdversaryState {
                id: adversaries.len() as u32,
                kind: AdversaryKind::Dynamic,
                edge: None,
                patrol,
                alive: true,
            });
        }
    }

    let mut platoons = Vec::new();
    for _ in 0..params.uav_platoons {
        platoons.push(PlatoonSpec {
            kind: PlatoonKind::Uav,
            units: params.uav_units,
        });
    }
    for _ in 0..params.ugv_platoons {
        platoons.push(PlatoonSpec {
            kind: PlatoonKind::Ugv,
            units: params.ugv_units,
        });
    }

    let scenario = Scenario {
        schema_version: SCENARIO_SCHEMA_VERSION,
        targets,
        goal,
        time_limit: params.time_limit,
        adversaries,
        platoons,
    };
    scenario.validate_against(map)?;
    Ok(scenario)
}

/// One map with one scenario; the returned map carries the scenario's edge
/// annotations.
pub fn generate(seed: u64, params: &GenParams) -> Result<(MapGraph, Scenario)> {
    let map = generate_map(seed, params)?;
    let scenario = generate_scenario_on(&map, seed.wrapping_mul(0x9E37).wrapping_add(1), params)?;
    let annotated = scenario.annotate_map(&map)?;
    Ok((annotated, scenario))
}

/// One clean map plus `count` scenarios over it (seeds `seed+1..`).
pub fn generate_pool(
    seed: u64,
    params: &GenParams,
    count: usize,
) -> Result<(MapGraph, Vec<Scenario>)> {
    let map = generate_map(seed, params)?;
    let scenarios: Result<Vec<Scenario>> = (0..count)
        .map(|k| generate_scenario_on(&map, seed.wrapping_add(1 + k as u64), params))
        .collect();
    Ok((map, scenarios?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_output() {
        let params = GenParams::default();
        let a = generate(42, &params).unwrap();
        let b = generate(42, &params).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn generated_pairs_are_valid() {
        for seed in 0..20 {
            let (map, scenario) = generate(seed, &GenParams::default()).unwrap();
            map.validate().unwrap();
            scenario.validate_against(&map).unwrap();
        }
    }

    #[test]
    fn pool_shares_one_map() {
        let (map, scenarios) = generate_pool(7, &GenParams::default(), 6).unwrap();
        assert_eq!(scenarios.len(), 6);
        for s in &scenarios {
            s.validate_against(&map).unwrap();
            s.annotate_map(&map).unwrap();
        }
        // Scenario variety: not all goals equal.
        let goals: std::collections::BTreeSet<_> = scenarios.iter().map(|s| s.goal).collect();
        assert!(goals.len() > 1, "pool goals all identical");
    }

    #[test]
    fn too_many_targets_rejected() {
        let params = GenParams {
            buildings: 2,
            targets: 5,
            ..GenParams::default()
        };
        assert!(generate(0, &params).is_err());
    }
}
