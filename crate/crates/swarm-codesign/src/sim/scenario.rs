//! Mission scenario: suspect buildings, the true goal, adversaries, the
//! platoon roster, and the time limit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::map::{MapGraph, NodeId};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryKind {
    Smoke,
    Bomb,
    Dynamic,
}

/// One adversary. Smoke and bombs sit on a single edge; dynamic adversaries
/// patrol a fixed node path and threaten every edge along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryState {
    pub id: u32,
    pub kind: AdversaryKind,
    /// Edge endpoints for smoke/bomb.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<(NodeId, NodeId)>,
    /// Patrol node sequence for dynamic adversaries (>= 2 nodes).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub patrol: Vec<NodeId>,
    #[serde(default = "default_alive")]
    pub alive: bool,
}

fn default_alive() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlatoonKind {
    Uav,
    Ugv,
}

/// Roster entry: one platoon of `units` same-type robots commanded as a unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatoonSpec {
    pub kind: PlatoonKind,
    pub units: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    /// Suspect buildings; the victim is in exactly one of them.
    pub targets: Vec<NodeId>,
    pub goal: NodeId,
    pub time_limit: f64,
    #[serde(rename = "adversary", default)]
    pub adversaries: Vec<AdversaryState>,
    #[serde(rename = "platoon")]
    pub platoons: Vec<PlatoonSpec>,
}

impl Scenario {
    /// Scenario-local invariants (no map required).
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| -> Result<()> {
            Err(Error::InvalidFile {
                path: "<scenario>".into(),
                reason,
            })
        };
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return fail(format!(
                "unsupported scenario schema version {}",
                self.schema_version
            ));
        }
        if self.targets.is_empty() {
            return fail("scenario needs at least one target building".into());
        }
        if !self.targets.contains(&self.goal) {
            return fail(format!(
                "goal {} is not among the target buildings",
                self.goal
            ));
        }
        let mut sorted = self.targets.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.targets.len() {
            return fail("duplicate target buildings".into());
        }
        if !(self.time_limit > 0.0) {
            return fail(format!("time_limit must be positive, got {}", self.time_limit));
        }
        for (i, a) in self.adversaries.iter().enumerate() {
            if a.id as usize != i {
                return fail(format!(
                    "adversary ids must be dense and ordered: position {i} holds {}",
                    a.id
                ));
            }
            match a.kind {
                AdversaryKind::Smoke | AdversaryKind::Bomb => {
                    if a.edge.is_none() {
                        return fail(format!("static adversary {} needs an edge", a.id));
                    }
                    if !a.patrol.is_empty() {
                        return fail(format!("static adversary {} cannot patrol", a.id));
                    }
                }
                AdversaryKind::Dynamic => {
                    if a.patrol.len() < 2 {
                        return fail(format!(
                            "dynamic adversary {} needs a patrol path of >= 2 nodes",
                            a.id
                        ));
                    }
                    if a.edge.is_some() {
                        return fail(format!(
                            "dynamic adversary {} cannot sit on a single edge",
                            a.id
                        ));
                    }
                }
            }
        }
        if self.platoons.is_empty() {
            return fail("scenario needs at least one platoon".into());
        }
        if self.platoons.iter().any(|p| p.units == 0) {
            return fail("platoons need at least one unit".into());
        }
        Ok(())
    }

    /// Edge annotation sets this scenario's adversaries imply, indexed like
    /// `map.edges`. Fails if a placement references a missing edge.
    fn derived_annotations(
        &self,
        map: &MapGraph,
    ) -> Result<Vec<std::collections::BTreeSet<u32>>> {
        let mut expected: Vec<std::collections::BTreeSet<u32>> =
            vec![Default::default(); map.edges.len()];
        let fail = |reason: String| Error::InvalidFile {
            path: "<scenario>".into(),
            reason,
        };
        for a in &self.adversaries {
            match a.kind {
                AdversaryKind::Smoke | AdversaryKind::Bomb => {
                    let (u, v) = a.edge.unwrap();
                    let e = map.edge_between(u, v).ok_or_else(|| {
                        fail(format!("adversary {} sits on missing edge {u}-{v}", a.id))
                    })?;
                    expected[e].insert(a.id);
                }
                AdversaryKind::Dynamic => {
                    for w in a.patrol.windows(2) {
                        let e = map.edge_between(w[0], w[1]).ok_or_else(|| {
                            fail(format!(
                                "adversary {} patrol uses missing edge {}-{}",
                                a.id, w[0], w[1]
                            ))
                        })?;
                        expected[e].insert(a.id);
                    }
                }
            }
        }
        Ok(expected)
    }

    /// Cross-validates against a map: targets are buildings and adversary
    /// placements reference existing edges. Pre-existing map annotations, if
    /// any, must agree with the placements.
    pub fn validate_against(&self, map: &MapGraph) -> Result<()> {
        self.validate()?;
        let fail = |reason: String| -> Result<()> {
            Err(Error::InvalidFile {
                path: "<scenario>".into(),
                reason,
            })
        };
        for &t in &self.targets {
            if t.index() >= map.node_count() {
                return fail(format!("target {t} not in map"));
            }
            if !map.is_building(t) {
                return fail(format!("target {t} is not a building"));
            }
        }
        let expected = self.derived_annotations(map)?;
        let has_annotations = map.edges.iter().any(|e| !e.adversaries.is_empty());
        if has_annotations {
            for (i, e) in map.edges.iter().enumerate() {
                if e.adversaries != expected[i] {
                    return fail(format!(
                        "edge {}-{} annotations {:?} disagree with adversary placements {:?}",
                        e.a, e.b, e.adversaries, expected[i]
                    ));
                }
            }
        }
        Ok(())
    }

    /// A copy of `map` carrying exactly this scenario's edge annotations.
    pub fn annotate_map(&self, map: &MapGraph) -> Result<MapGraph> {
        self.validate_against(map)?;
        let expected = self.derived_annotations(map)?;
        let mut out = map.clone();
        for (e, ann) in out.edges.iter_mut().zip(expected) {
            e.adversaries = ann;
        }
        Ok(out)
    }

    pub fn total_units(&self) -> u32 {
        self.platoons.iter().map(|p| p.units).sum()
    }

    pub fn platoon_count(&self, kind: PlatoonKind) -> usize {
        self.platoons.iter().filter(|p| p.kind == kind).count()
    }
}

pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(scenario)
        .map_err(|e| Error::InvalidConfig(format!("scenario serialization: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let scenario: Scenario = toml::from_str(&text).map_err(|e| Error::TomlParse {
        path: path.display().to_string(),
        source: e,
    })?;
    scenario.validate().map_err(|e| match e {
        Error::InvalidFile { reason, .. } => Error::InvalidFile {
            path: path.display().to_string(),
            reason,
        },
        other => other,
    })?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basic() -> Scenario {
        Scenario {
            schema_version: SCENARIO_SCHEMA_VERSION,
            targets: vec![NodeId(2), NodeId(3)],
            goal: NodeId(2),
            time_limit: 600.0,
            adversaries: vec![],
            platoons: vec![
                PlatoonSpec {
                    kind: PlatoonKind::Uav,
                    units: 3,
                },
                PlatoonSpec {
                    kind: PlatoonKind::Ugv,
                    units: 3,
                },
            ],
        }
    }

    #[test]
    fn valid_scenario_roundtrips() {
        let s = basic();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.toml");
        save_scenario(&s, &path).unwrap();
        assert_eq!(load_scenario(&path).unwrap(), s);
    }

    #[test]
    fn goal_outside_targets_rejected() {
        let mut s = basic();
        s.goal = NodeId(9);
        let err = s.validate().unwrap_err();
        assert!(err.to_string().contains("goal"), "{err}");
    }

    #[test]
    fn dynamic_needs_patrol() {
        let mut s = basic();
        s.adversaries.push(AdversaryState {
            id: 0,
            kind: AdversaryKind::Dynamic,
            edge: None,
            patrol: vec![NodeId(1)],
            alive: true,
        });
        let err = s.validate().unwrap_err();
        assert!(err.to_string().contains("patrol"), "{err}");
    }

    #[test]
    fn file_rejection_names_path_and_invariant() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        let mut s = basic();
        s.goal = NodeId(99);
        let text = toml::to_string_pretty(&s).unwrap();
        std::fs::write(&path, text).unwrap();
        let err = load_scenario(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.toml") && msg.contains("goal"), "{msg}");
    }
}
