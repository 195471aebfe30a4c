//! Event-driven mission simulator.
//!
//! The episode alternates decision steps and continuous-time advancement:
//! a decision assigns the acting platoon a destination and path mode, then
//! the clock advances through exact event times (edge arrivals, search
//! completions, wake-ups, range exhaustion, expiry) until another platoon
//! needs orders or the episode ends. All bookkeeping is deterministic given
//! the seed; randomness only enters through the optional stochastic
//! engagement rule.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::TalentVector;
use crate::sim::map::{MapGraph, NodeId};
use crate::sim::path::{pareto_nodes, plan_path, PathMode};
use crate::sim::scenario::{AdversaryKind, PlatoonKind, Scenario};

/// Simulator constants that are not morphology-driven. UGVs are not part of
/// the design optimization, so their speed and search rate are fixed here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Ground platoon speed, m/s.
    pub ugv_speed: f64,
    /// Indoor search rate per UGV unit, m/s of workload coverage.
    pub indoor_search_rate: f64,
    /// Multiplier on UAV speed while traversing a smoke edge.
    pub smoke_slowdown: f64,
    /// UGV drivable range, meters.
    pub ugv_range: f64,
    /// Idle wait after a wasted decision (unreachable path or nothing to do).
    pub decision_wait: f64,
    /// Minimum event granularity; the episode is capped at
    /// `ceil(time_limit / min_event_granularity)` decision steps.
    pub min_event_granularity: f64,
    /// Seeded coin-flip engagements instead of the deterministic rule.
    pub stochastic_engagement: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            ugv_speed: 5.0,
            indoor_search_rate: 2.0,
            smoke_slowdown: 0.5,
            ugv_range: 1.0e9,
            decision_wait: 5.0,
            min_event_granularity: 0.25,
            stochastic_engagement: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlatoonStatus {
    Idle,
    Waiting { until: f64 },
    Moving,
    Searching,
    Lost,
}

/// A group of same-type robots commanded as one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Platoon {
    pub kind: PlatoonKind,
    pub units_initial: u32,
    pub units: u32,
    pub range_initial: f64,
    pub range_remaining: f64,
    /// Last node reached.
    pub at: NodeId,
    /// Edge currently being traversed, if any.
    pub edge_to: Option<NodeId>,
    pub edge_offset: f64,
    /// Nodes still to visit after `edge_to`.
    pub route: VecDeque<NodeId>,
    pub goal: Option<NodeId>,
    pub status: PlatoonStatus,
    pub distance_traveled: f64,
}

impl Platoon {
    pub fn lost(&self) -> bool {
        matches!(self.status, PlatoonStatus::Lost)
    }

    /// Surviving fraction of the initial roster (UGV health in the state).
    pub fn health(&self) -> f64 {
        self.units as f64 / self.units_initial as f64
    }

    /// Interpolated map position.
    pub fn position(&self, map: &MapGraph) -> (f64, f64) {
        let a = map.node(self.at);
        match self.edge_to {
            None => (a.x, a.y),
            Some(to) => {
                let b = map.node(to);
                let edge = map
                    .edge_between(self.at, to)
                    .map(|i| map.edges[i].length)
                    .unwrap_or(1.0);
                let f = (self.edge_offset / edge).clamp(0.0, 1.0);
                (a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    /// Victim rescued within the time limit.
    Success { elapsed: f64 },
    /// Time exhausted, all UGVs lost, or the decision cap hit.
    Failure,
}

/// Mission reward: success pays remaining-time fraction plus survival
/// fraction, failure pays -1.
pub fn compute_reward(outcome: Outcome, time_limit: f64, surviving: u32, initial: u32) -> f64 {
    match outcome {
        Outcome::Success { elapsed } => {
            let tau = 1.0 - elapsed / time_limit;
            let survival = surviving as f64 / initial as f64;
            tau + survival
        }
        Outcome::Failure => -1.0,
    }
}

/// Renormalized target probabilities after a completed search of `building`.
/// Finding the victim makes it one-hot; an empty building is zeroed and the
/// remaining unsearched targets are set uniform.
pub fn update_probabilities(
    probs: &BTreeMap<NodeId, f64>,
    building: NodeId,
    is_goal: bool,
) -> BTreeMap<NodeId, f64> {
    let mut out = BTreeMap::new();
    if is_goal {
        for (&b, _) in probs {
            out.insert(b, if b == building { 1.0 } else { 0.0 });
        }
        return out;
    }
    let survivors: Vec<NodeId> = probs
        .iter()
        .filter(|&(&b, &p)| b != building && p > 0.0)
        .map(|(&b, _)| b)
        .collect();
    let share = 1.0 / survivors.len().max(1) as f64;
    for (&b, _) in probs {
        out.insert(b, if survivors.contains(&b) { share } else { 0.0 });
    }
    out
}

/// The full tactical MDP state.
#[derive(Debug, Clone)]
pub struct MissionState {
    pub time: f64,
    pub platoons: Vec<Platoon>,
    /// Victim probability per target building; zero once eliminated.
    pub probabilities: BTreeMap<NodeId, f64>,
    pub outdoor_progress: BTreeMap<NodeId, f64>,
    pub indoor_progress: BTreeMap<NodeId, f64>,
    pub outdoor_done: BTreeSet<NodeId>,
    pub indoor_done: BTreeSet<NodeId>,
    pub adversaries_alive: Vec<bool>,
    pub acting_platoon: Option<usize>,
    pub talents: Option<TalentVector>,
    pub victim_localized: bool,
    pub outcome: Option<Outcome>,
    pub decision_steps: usize,
    pub destroyed_units: u32,
}

impl MissionState {
    pub fn surviving_units(&self) -> u32 {
        self.platoons.iter().filter(|p| !p.lost()).map(|p| p.units).sum()
    }

    pub fn alive_platoons(&self, kind: PlatoonKind) -> usize {
        self.platoons
            .iter()
            .filter(|p| p.kind == kind && !p.lost())
            .count()
    }
}

/// One tactical decision: which critical node to visit and how.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TacticalAction {
    pub pareto_node: NodeId,
    pub path_mode: PathMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
}

/// Everything the policy needs at a decision step, in raw (unnormalized)
/// units. Action index `mode_idx * n + node_idx` addresses
/// `pareto_nodes[node_idx]` under `PathMode::ALL[mode_idx]`.
#[derive(Debug, Clone)]
pub struct DecisionPoint {
    pub pareto_nodes: Vec<NodeId>,
    /// Per pareto node: x, y, probability, outdoor fraction, indoor fraction.
    pub node_feats: Vec<[f64; 5]>,
    /// Per UAV platoon: x, y, range fraction, alive flag, goal fraction.
    pub uav_feats: Vec<[f64; 5]>,
    /// Per UGV platoon: x, y, range fraction, health, alive flag, goal fraction.
    pub ugv_feats: Vec<[f64; 6]>,
    /// Per adversary: x, y, kind code (0 when dead).
    pub adv_feats: Vec<[f64; 3]>,
    /// Acting platoon: x, y, kind flag, range fraction.
    pub act_feats: [f64; 4],
    /// Remaining time fraction, alive UAV platoon fraction, alive UGV fraction.
    pub mission: [f64; 3],
    /// Active talents (zeros until set).
    pub talents: [f64; 3],
    /// Validity of each of the `3 * pareto_nodes.len()` actions.
    pub mask: Vec<bool>,
    pub acting_platoon: usize,
}

impl DecisionPoint {
    pub fn action_count(&self) -> usize {
        3 * self.pareto_nodes.len()
    }

    pub fn action_from_index(&self, index: usize) -> Result<TacticalAction> {
        let n = self.pareto_nodes.len();
        if index >= 3 * n {
            return Err(Error::Sim(format!(
                "action index {index} out of range for {n} pareto nodes"
            )));
        }
        Ok(TacticalAction {
            pareto_node: self.pareto_nodes[index % n],
            path_mode: PathMode::ALL[index / n],
        })
    }
}

#[derive(Debug, Clone)]
pub struct Event {
    pub time: f64,
    pub kind: &'static str,
    pub platoon: Option<usize>,
    pub node: Option<NodeId>,
    pub detail: String,
}

pub struct Simulator {
    map: MapGraph,
    scenario: Scenario,
    config: SimConfig,
    state: MissionState,
    events: Vec<Event>,
    rng: ChaCha8Rng,
    initial_units: u32,
    max_decisions: usize,
    pareto_cache: Option<Vec<NodeId>>,
}

impl Simulator {
    pub fn new(
        map: MapGraph,
        scenario: Scenario,
        config: SimConfig,
        seed: u64,
    ) -> Result<Self> {
        map.validate()?;
        // The working map carries exactly this scenario's annotations.
        let map = scenario.annotate_map(&map)?;
        let depot = map.depot();
        let platoons: Vec<Platoon> = scenario
            .platoons
            .iter()
            .map(|spec| Platoon {
                kind: spec.kind,
                units_initial: spec.units,
                units: spec.units,
                range_initial: match spec.kind {
                    PlatoonKind::Uav => 0.0,
                    PlatoonKind::Ugv => config.ugv_range,
                },
                range_remaining: match spec.kind {
                    PlatoonKind::Uav => 0.0,
                    PlatoonKind::Ugv => config.ugv_range,
                },
                at: depot,
                edge_to: None,
                edge_offset: 0.0,
                route: VecDeque::new(),
                goal: None,
                status: PlatoonStatus::Idle,
                distance_traveled: 0.0,
            })
            .collect();
        let share = 1.0 / scenario.targets.len() as f64;
        let probabilities: BTreeMap<NodeId, f64> =
            scenario.targets.iter().map(|&t| (t, share)).collect();
        let progress: BTreeMap<NodeId, f64> =
            scenario.targets.iter().map(|&t| (t, 0.0)).collect();
        let max_decisions =
            (scenario.time_limit / config.min_event_granularity).ceil() as usize;
        let initial_units = scenario.total_units();
        let adversaries_alive = scenario.adversaries.iter().map(|a| a.alive).collect();
        let state = MissionState {
            time: 0.0,
            platoons,
            probabilities,
            outdoor_progress: progress.clone(),
            indoor_progress: progress,
            outdoor_done: BTreeSet::new(),
            indoor_done: BTreeSet::new(),
            adversaries_alive,
            acting_platoon: Some(0),
            talents: None,
            victim_localized: false,
            outcome: None,
            decision_steps: 0,
            destroyed_units: 0,
        };
        Ok(Self {
            map,
            scenario,
            config,
            state,
            events: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            initial_units,
            max_decisions,
            pareto_cache: None,
        })
    }

    pub fn map(&self) -> &MapGraph {
        &self.map
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn state(&self) -> &MissionState {
        &self.state
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.state.outcome
    }

    pub fn initial_units(&self) -> u32 {
        self.initial_units
    }

    /// Instantiates the UAV platoons with decoded talents. Must be called
    /// before the first step.
    pub fn set_talents(&mut self, talents: TalentVector) {
        for p in &mut self.state.platoons {
            if p.kind == PlatoonKind::Uav {
                p.range_initial = talents.flight_range;
                p.range_remaining = talents.flight_range;
            }
        }
        self.state.talents = Some(talents);
    }

    fn log(&mut self, kind: &'static str, platoon: Option<usize>, node: Option<NodeId>, detail: String) {
        self.events.push(Event {
            time: self.state.time,
            kind,
            platoon,
            node,
            detail,
        });
    }

    /// Live adversary states (scenario definitions + current alive flags).
    fn adversary_states(&self) -> Vec<crate::sim::scenario::AdversaryState> {
        self.scenario
            .adversaries
            .iter()
            .zip(&self.state.adversaries_alive)
            .map(|(a, &alive)| {
                let mut a = a.clone();
                a.alive = alive;
                a
            })
            .collect()
    }

    /// Current critical-node set (cached until probabilities change).
    pub fn current_pareto_nodes(&mut self) -> Result<Vec<NodeId>> {
        if let Some(cache) = &self.pareto_cache {
            return Ok(cache.clone());
        }
        let targets: Vec<(NodeId, f64)> = self
            .state
            .probabilities
            .iter()
            .map(|(&b, &p)| (b, p))
            .collect();
        let nodes = pareto_nodes(&self.map, &targets)?;
        self.pareto_cache = Some(nodes.clone());
        Ok(nodes)
    }

    /// Snapshot of the decision problem for the acting platoon.
    pub fn decision(&mut self) -> Result<DecisionPoint> {
        if self.state.outcome.is_some() {
            return Err(Error::Sim("decision requested on a terminal state".into()));
        }
        let acting = self
            .state
            .acting_platoon
            .ok_or_else(|| Error::Sim("no platoon awaiting orders".into()))?;
        let nodes = self.current_pareto_nodes()?;
        let (ext_x, ext_y) = self.map.extent();
        let state = &self.state;
        let map = &self.map;
        let scenario = &self.scenario;

        let node_feats: Vec<[f64; 5]> = nodes
            .iter()
            .map(|&n| {
                let nd = map.node(n);
                let p = state.probabilities.get(&n).copied().unwrap_or(0.0);
                let w = map.building_workload(n).unwrap_or(1.0);
                let outdoor = state.outdoor_progress.get(&n).copied().unwrap_or(0.0) / w;
                let indoor = state.indoor_progress.get(&n).copied().unwrap_or(0.0) / w;
                [nd.x / ext_x, nd.y / ext_y, p, outdoor, indoor]
            })
            .collect();

        let goal_frac = |p: &Platoon| -> f64 {
            p.goal
                .map(|g| (g.0 as f64 + 1.0) / (map.node_count() as f64 + 1.0))
                .unwrap_or(0.0)
        };
        let mut uav_feats = Vec::new();
        let mut ugv_feats = Vec::new();
        for p in &state.platoons {
            let (x, y) = p.position(map);
            let range_frac = if p.range_initial > 0.0 {
                (p.range_remaining / p.range_initial).max(0.0)
            } else {
                0.0
            };
            let alive = if p.lost() { 0.0 } else { 1.0 };
            match p.kind {
                PlatoonKind::Uav => uav_feats.push(if p.lost() {
                    [0.0; 5]
                } else {
                    [x / ext_x, y / ext_y, range_frac, alive, goal_frac(p)]
                }),
                PlatoonKind::Ugv => ugv_feats.push(if p.lost() {
                    [0.0; 6]
                } else {
                    [x / ext_x, y / ext_y, range_frac, p.health(), alive, goal_frac(p)]
                }),
            }
        }

        let adv_feats: Vec<[f64; 3]> = scenario
            .adversaries
            .iter()
            .zip(&state.adversaries_alive)
            .map(|(a, &alive)| {
                if !alive {
                    return [0.0; 3];
                }
                let (x, y) = match a.kind {
                    AdversaryKind::Smoke | AdversaryKind::Bomb => {
                        let (u, v) = a.edge.unwrap();
                        let (nu, nv) = (map.node(u), map.node(v));
                        (0.5 * (nu.x + nv.x), 0.5 * (nu.y + nv.y))
                    }
                    AdversaryKind::Dynamic => {
                        let n = map.node(a.patrol[0]);
                        (n.x, n.y)
                    }
                };
                let code = match a.kind {
                    AdversaryKind::Smoke => 1.0 / 3.0,
                    AdversaryKind::Bomb => 2.0 / 3.0,
                    AdversaryKind::Dynamic => 1.0,
                };
                [x / ext_x, y / ext_y, code]
            })
            .collect();

        let act = &state.platoons[acting];
        let (ax, ay) = act.position(map);
        let act_feats = [
            ax / ext_x,
            ay / ext_y,
            match act.kind {
                PlatoonKind::Uav => 1.0,
                PlatoonKind::Ugv => 0.0,
            },
            if act.range_initial > 0.0 {
                (act.range_remaining / act.range_initial).max(0.0)
            } else {
                0.0
            },
        ];

        let mission = [
            1.0 - state.time / scenario.time_limit,
            state.alive_platoons(PlatoonKind::Uav) as f64
                / scenario.platoon_count(PlatoonKind::Uav).max(1) as f64,
            state.alive_platoons(PlatoonKind::Ugv) as f64
                / scenario.platoon_count(PlatoonKind::Ugv).max(1) as f64,
        ];

        let talents = state
            .talents
            .map(|t| t.as_array())
            .unwrap_or([0.0, 0.0, 0.0]);

        // Entrances of eliminated targets are invalid destinations; they can
        // still sit in the set via other targets' objectives.
        let node_valid: Vec<bool> = nodes
            .iter()
            .map(|n| {
                !(scenario.targets.contains(n)
                    && state.probabilities.get(n).copied().unwrap_or(0.0) == 0.0)
            })
            .collect();
        let mut mask = Vec::with_capacity(3 * nodes.len());
        for _mode in 0..3 {
            mask.extend_from_slice(&node_valid);
        }

        Ok(DecisionPoint {
            pareto_nodes: nodes,
            node_feats,
            uav_feats,
            ugv_feats,
            adv_feats,
            act_feats,
            mission,
            talents,
            mask,
            acting_platoon: acting,
        })
    }

    // -- step --------------------------------------------------------------

    pub fn step(&mut self, action: &TacticalAction) -> Result<StepResult> {
        if self.state.outcome.is_some() {
            return Err(Error::Sim("step on terminal state".into()));
        }
        if self.state.talents.is_none() {
            return Err(Error::Sim("talents must be set before stepping".into()));
        }
        let acting = self
            .state
            .acting_platoon
            .ok_or_else(|| Error::Sim("no platoon awaiting orders".into()))?;
        let nodes = self.current_pareto_nodes()?;
        if !nodes.contains(&action.pareto_node) {
            return Err(Error::Sim(format!(
                "action node {} not in the current pareto set",
                action.pareto_node
            )));
        }
        self.state.decision_steps += 1;
        if self.state.decision_steps > self.max_decisions {
            self.log("decision_cap", None, None, format!("cap {}", self.max_decisions));
            return Ok(self.finish(Outcome::Failure));
        }

        // Assign the order.
        let from = self.state.platoons[acting].at;
        let plan = plan_path(
            &self.map,
            &self.adversary_states(),
            from,
            action.pareto_node,
            action.path_mode,
        )?;
        match plan {
            None => {
                self.state.platoons[acting].status = PlatoonStatus::Waiting {
                    until: self.state.time + self.config.decision_wait,
                };
                self.log(
                    "wasted_decision",
                    Some(acting),
                    Some(action.pareto_node),
                    format!("unreachable via {}", action.path_mode.label()),
                );
            }
            Some(plan) if plan.nodes.len() == 1 => {
                // Already at the destination.
                self.state.platoons[acting].goal = Some(action.pareto_node);
                if !self.try_begin_work(acting) {
                    self.state.platoons[acting].status = PlatoonStatus::Waiting {
                        until: self.state.time + self.config.decision_wait,
                    };
                    self.log(
                        "wasted_decision",
                        Some(acting),
                        Some(action.pareto_node),
                        "nothing to do here".into(),
                    );
                }
            }
            Some(plan) => {
                let p = &mut self.state.platoons[acting];
                p.goal = Some(action.pareto_node);
                p.route = plan.nodes[1..].iter().copied().collect();
                p.status = PlatoonStatus::Moving;
                self.log(
                    "depart",
                    Some(acting),
                    Some(action.pareto_node),
                    format!("{} via {}", plan.length, action.path_mode.label()),
                );
                self.enter_next_edge(acting);
            }
        }
        if self.state.outcome.is_some() {
            // Rescue on arrival at the current node, or loss during entry.
            let outcome = self.state.outcome.unwrap();
            return Ok(self.finish(outcome));
        }

        // Advance until another platoon needs orders or the episode ends.
        loop {
            if let Some(outcome) = self.state.outcome {
                return Ok(self.finish(outcome));
            }
            if self
                .state
                .platoons
                .iter()
                .all(|p| p.lost() || matches!(p.status, PlatoonStatus::Waiting { .. }))
                && self
                    .state
                    .platoons
                    .iter()
                    .all(|p| !matches!(p.status, PlatoonStatus::Idle))
            {
                // Everyone alive is waiting: fall through to time advance.
            }
            if let Some(idle) = self
                .state
                .platoons
                .iter()
                .position(|p| matches!(p.status, PlatoonStatus::Idle))
            {
                self.state.acting_platoon = Some(idle);
                return Ok(StepResult {
                    reward: 0.0,
                    done: false,
                });
            }
            self.advance_to_next_event()?;
        }
    }

    fn finish(&mut self, outcome: Outcome) -> StepResult {
        self.state.outcome = Some(outcome);
        self.state.acting_platoon = None;
        let reward = compute_reward(
            outcome,
            self.scenario.time_limit,
            self.state.surviving_units(),
            self.initial_units,
        );
        self.log("episode_end", None, None, format!("reward {reward}"));
        StepResult { reward, done: true }
    }

    /// Effective speed of a platoon on the edge it is traversing.
    fn platoon_speed(&self, p: &Platoon) -> f64 {
        match p.kind {
            PlatoonKind::Ugv => self.config.ugv_speed,
            PlatoonKind::Uav => {
                let talents = self.state.talents.expect("talents set");
                let mut speed = talents.cruising_speed;
                if let Some(to) = p.edge_to {
                    if let Some(e) = self.map.edge_between(p.at, to) {
                        let smoky = self.map.edges[e].adversaries.iter().any(|&id| {
                            self.state.adversaries_alive[id as usize]
                                && self.scenario.adversaries[id as usize].kind
                                    == AdversaryKind::Smoke
                        });
                        if smoky {
                            speed *= self.config.smoke_slowdown;
                        }
                    }
                }
                speed
            }
        }
    }

    /// Starts traversing the next route edge, applying entry interactions.
    fn enter_next_edge(&mut self, idx: usize) {
        let Some(next) = self.state.platoons[idx].route.pop_front() else {
            return;
        };
        let at = self.state.platoons[idx].at;
        let edge_idx = self
            .map
            .edge_between(at, next)
            .expect("route follows existing edges");
        // Entry interactions touch UGVs only.
        if self.state.platoons[idx].kind == PlatoonKind::Ugv {
            let adversary_ids: Vec<u32> =
                self.map.edges[edge_idx].adversaries.iter().copied().collect();
            for id in adversary_ids {
                if !self.state.adversaries_alive[id as usize] {
                    continue;
                }
                match self.scenario.adversaries[id as usize].kind {
                    AdversaryKind::Smoke => {}
                    AdversaryKind::Bomb => {
                        self.state.adversaries_alive[id as usize] = false;
                        self.lose_unit(idx, "bomb_hit", Some(next));
                    }
                    AdversaryKind::Dynamic => {
                        if self.config.stochastic_engagement {
                            if self.rng.random::<f64>() < 0.5 {
                                self.state.adversaries_alive[id as usize] = false;
                                self.log(
                                    "engagement",
                                    Some(idx),
                                    Some(next),
                                    format!("adversary {id} neutralized"),
                                );
                            } else {
                                self.lose_unit(idx, "engagement", Some(next));
                            }
                        } else {
                            // Deterministic rule: both sides pay.
                            self.state.adversaries_alive[id as usize] = false;
                            self.log(
                                "engagement",
                                Some(idx),
                                Some(next),
                                format!("adversary {id} neutralized"),
                            );
                            self.lose_unit(idx, "engagement", Some(next));
                        }
                    }
                }
                if self.state.platoons[idx].lost() {
                    return;
                }
            }
        }
        let p = &mut self.state.platoons[idx];
        if p.lost() {
            return;
        }
        p.edge_to = Some(next);
        p.edge_offset = 0.0;
        p.status = PlatoonStatus::Moving;
    }

    fn lose_unit(&mut self, idx: usize, cause: &'static str, node: Option<NodeId>) {
        {
            let p = &mut self.state.platoons[idx];
            p.units -= 1;
            self.state.destroyed_units += 1;
        }
        self.log(cause, Some(idx), node, "unit destroyed".into());
        if self.state.platoons[idx].units == 0 {
            self.state.platoons[idx].status = PlatoonStatus::Lost;
            self.log("platoon_lost", Some(idx), node, "no units remain".into());
            self.check_force_failure();
        }
    }

    fn lose_platoon_to_range(&mut self, idx: usize) {
        let remaining = self.state.platoons[idx].units;
        self.state.destroyed_units += remaining;
        let p = &mut self.state.platoons[idx];
        p.units = 0;
        p.range_remaining = 0.0;
        p.status = PlatoonStatus::Lost;
        self.log("range_exhausted", Some(idx), None, format!("{remaining} units stranded"));
        self.check_force_failure();
    }

    fn check_force_failure(&mut self) {
        if self.state.outcome.is_none()
            && self.state.alive_platoons(PlatoonKind::Ugv) == 0
        {
            self.state.outcome = Some(Outcome::Failure);
            self.log("mission_failed", None, None, "all UGV platoons lost".into());
        }
    }

    /// Work available for a platoon standing at its goal node. Returns true
    /// if it transitioned to searching or completed the rescue.
    fn try_begin_work(&mut self, idx: usize) -> bool {
        let at = self.state.platoons[idx].at;
        let kind = self.state.platoons[idx].kind;
        let p_b = self.state.probabilities.get(&at).copied().unwrap_or(0.0);
        if !self.scenario.targets.contains(&at) || p_b == 0.0 {
            return false;
        }
        match kind {
            PlatoonKind::Uav => {
                if !self.state.victim_localized && !self.state.outdoor_done.contains(&at) {
                    self.state.platoons[idx].status = PlatoonStatus::Searching;
                    self.log("search_start", Some(idx), Some(at), "outdoor".into());
                    true
                } else {
                    false
                }
            }
            PlatoonKind::Ugv => {
                if self.state.victim_localized && at == self.scenario.goal {
                    // Victim already localized: bypass indoor exploration.
                    self.rescue(idx, at);
                    true
                } else if !self.state.indoor_done.contains(&at) {
                    self.state.platoons[idx].status = PlatoonStatus::Searching;
                    self.log("search_start", Some(idx), Some(at), "indoor".into());
                    true
                } else {
                    false
                }
            }
        }
    }

    fn rescue(&mut self, idx: usize, node: NodeId) {
        self.log("rescue", Some(idx), Some(node), "victim rescued".into());
        self.state.outcome = Some(Outcome::Success {
            elapsed: self.state.time,
        });
    }

    fn searchers(&self, building: NodeId, kind: PlatoonKind) -> Vec<usize> {
        self.state
            .platoons
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                p.kind == kind && p.status == PlatoonStatus::Searching && p.at == building
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn outdoor_rate(&self, building: NodeId) -> f64 {
        let talents = self.state.talents.expect("talents set");
        self.searchers(building, PlatoonKind::Uav)
            .iter()
            .map(|&i| self.state.platoons[i].units as f64 * talents.search_speed)
            .sum()
    }

    fn indoor_rate(&self, building: NodeId) -> f64 {
        self.searchers(building, PlatoonKind::Ugv)
            .iter()
            .map(|&i| self.state.platoons[i].units as f64 * self.config.indoor_search_rate)
            .sum()
    }

    /// Advances the clock to the next event and processes everything due.
    fn advance_to_next_event(&mut self) -> Result<()> {
        let now = self.state.time;
        let mut dt = self.scenario.time_limit - now;
        if dt < 0.0 {
            dt = 0.0;
        }

        for p in &self.state.platoons {
            match p.status {
                PlatoonStatus::Moving => {
                    let speed = self.platoon_speed(p);
                    if speed <= 0.0 {
                        return Err(Error::Sim("platoon moving at zero speed".into()));
                    }
                    let to = p.edge_to.expect("moving platoon is on an edge");
                    let len = self.map.edges
                        [self.map.edge_between(p.at, to).unwrap()]
                    .length;
                    let dt_arrival = (len - p.edge_offset) / speed;
                    dt = dt.min(dt_arrival);
                    if p.kind == PlatoonKind::Uav {
                        let dt_range = p.range_remaining / speed;
                        dt = dt.min(dt_range);
                    }
                }
                PlatoonStatus::Waiting { until } => {
                    dt = dt.min(until - now);
                }
                _ => {}
            }
        }
        for (&b, &progress) in &self.state.outdoor_progress {
            if self.state.outdoor_done.contains(&b) {
                continue;
            }
            let rate = self.outdoor_rate(b);
            if rate > 0.0 {
                let w = self.map.building_workload(b).unwrap();
                dt = dt.min((w - progress) / rate);
            }
        }
        for (&b, &progress) in &self.state.indoor_progress {
            if self.state.indoor_done.contains(&b) {
                continue;
            }
            let rate = self.indoor_rate(b);
            if rate > 0.0 {
                let w = self.map.building_workload(b).unwrap();
                dt = dt.min((w - progress) / rate);
            }
        }
        let dt = dt.max(0.0);

        // Move platoons and accumulate search progress.
        let mut arrivals = Vec::new();
        let mut exhausted = Vec::new();
        for i in 0..self.state.platoons.len() {
            match self.state.platoons[i].status {
                PlatoonStatus::Moving => {
                    let speed = self.platoon_speed(&self.state.platoons[i]);
                    let step = speed * dt;
                    let p = &mut self.state.platoons[i];
                    p.edge_offset += step;
                    p.distance_traveled += step;
                    p.range_remaining -= step;
                    let to = p.edge_to.unwrap();
                    let len = self.map.edges[self.map.edge_between(p.at, to).unwrap()].length;
                    if p.kind == PlatoonKind::Uav && p.range_remaining <= 1e-9 {
                        if p.edge_offset >= len - 1e-9 {
                            arrivals.push(i);
                        } else {
                            exhausted.push(i);
                        }
                    } else if p.edge_offset >= len - 1e-9 {
                        arrivals.push(i);
                    }
                }
                PlatoonStatus::Searching => {}
                _ => {}
            }
        }
        let mut outdoor_gain: Vec<(NodeId, f64)> = Vec::new();
        for (&b, _) in &self.state.outdoor_progress {
            if !self.state.outdoor_done.contains(&b) {
                let rate = self.outdoor_rate(b);
                if rate > 0.0 {
                    outdoor_gain.push((b, rate * dt));
                }
            }
        }
        for (b, gain) in outdoor_gain {
            *self.state.outdoor_progress.get_mut(&b).unwrap() += gain;
        }
        let mut indoor_gain: Vec<(NodeId, f64)> = Vec::new();
        for (&b, _) in &self.state.indoor_progress {
            if !self.state.indoor_done.contains(&b) {
                let rate = self.indoor_rate(b);
                if rate > 0.0 {
                    indoor_gain.push((b, rate * dt));
                }
            }
        }
        for (b, gain) in indoor_gain {
            *self.state.indoor_progress.get_mut(&b).unwrap() += gain;
        }
        self.state.time = now + dt;

        // Wake waiting platoons.
        for i in 0..self.state.platoons.len() {
            if let PlatoonStatus::Waiting { until } = self.state.platoons[i].status {
                if until <= self.state.time + 1e-9 {
                    self.state.platoons[i].status = PlatoonStatus::Idle;
                }
            }
        }

        // Arrivals: snap to the node, continue the route or begin work.
        for i in arrivals {
            let to = self.state.platoons[i].edge_to.unwrap();
            {
                let p = &mut self.state.platoons[i];
                p.at = to;
                p.edge_to = None;
                p.edge_offset = 0.0;
            }
            self.log("arrive", Some(i), Some(to), String::new());
            if self.state.platoons[i].route.is_empty() {
                if !self.try_begin_work(i) {
                    self.state.platoons[i].status = PlatoonStatus::Idle;
                }
                if self.state.outcome.is_some() {
                    return Ok(());
                }
            } else {
                self.enter_next_edge(i);
                if self.state.outcome.is_some() {
                    return Ok(());
                }
            }
        }

        // Mid-edge range exhaustion.
        for i in exhausted {
            self.lose_platoon_to_range(i);
        }
        if self.state.outcome.is_some() {
            return Ok(());
        }

        // Search completions, outdoor before indoor per building id order.
        let buildings: Vec<NodeId> = self.state.outdoor_progress.keys().copied().collect();
        for b in buildings {
            if self.state.outcome.is_some() {
                return Ok(());
            }
            let w = self.map.building_workload(b).unwrap();
            if !self.state.outdoor_done.contains(&b)
                && self.state.outdoor_progress[&b] >= w - 1e-9
                && self.outdoor_rate(b) > 0.0
            {
                self.complete_outdoor(b);
            }
            if self.state.outcome.is_some() {
                return Ok(());
            }
            if !self.state.indoor_done.contains(&b)
                && self.state.indoor_progress[&b] >= w - 1e-9
                && self.indoor_rate(b) > 0.0
            {
                self.complete_indoor(b);
            }
        }
        if self.state.outcome.is_some() {
            return Ok(());
        }

        // Expiry last, so a same-instant rescue wins.
        if self.state.time >= self.scenario.time_limit - 1e-9 {
            self.state.outcome = Some(Outcome::Failure);
            self.log("mission_failed", None, None, "time limit reached".into());
        }
        Ok(())
    }

    fn idle_searchers(&mut self, building: NodeId, kind: PlatoonKind) {
        for i in self.searchers(building, kind) {
            self.state.platoons[i].status = PlatoonStatus::Idle;
        }
    }

    fn complete_outdoor(&mut self, b: NodeId) {
        self.state.outdoor_done.insert(b);
        self.log("outdoor_search_complete", None, Some(b), String::new());
        self.idle_searchers(b, PlatoonKind::Uav);
        if b == self.scenario.goal {
            self.localize_victim();
        } else {
            self.eliminate(b);
            self.idle_searchers(b, PlatoonKind::Ugv);
        }
    }

    fn complete_indoor(&mut self, b: NodeId) {
        self.state.indoor_done.insert(b);
        self.log("indoor_search_complete", None, Some(b), String::new());
        if b == self.scenario.goal {
            // The victim is found by exploration; the first searching platoon
            // performs the rescue.
            if let Some(i) = self.searchers(b, PlatoonKind::Ugv).first().copied() {
                self.rescue(i, b);
            }
            return;
        }
        self.idle_searchers(b, PlatoonKind::Ugv);
        self.eliminate(b);
        self.idle_searchers(b, PlatoonKind::Uav);
    }

    fn localize_victim(&mut self) {
        if self.state.victim_localized {
            return;
        }
        self.state.victim_localized = true;
        self.state.probabilities =
            update_probabilities(&self.state.probabilities, self.scenario.goal, true);
        self.pareto_cache = None;
        self.log(
            "victim_localized",
            None,
            Some(self.scenario.goal),
            String::new(),
        );
        // UAVs still sweeping other perimeters have nothing left to find.
        let others: Vec<NodeId> = self
            .scenario
            .targets
            .iter()
            .copied()
            .filter(|&t| t != self.scenario.goal)
            .collect();
        for b in others {
            self.idle_searchers(b, PlatoonKind::Uav);
            self.idle_searchers(b, PlatoonKind::Ugv);
        }
        // UGVs already inside (or standing at) the goal rescue immediately.
        let goal = self.scenario.goal;
        let candidate = self.state.platoons.iter().position(|p| {
            p.kind == PlatoonKind::Ugv
                && !p.lost()
                && p.edge_to.is_none()
                && p.at == goal
                && matches!(p.status, PlatoonStatus::Searching | PlatoonStatus::Idle)
        });
        if let Some(i) = candidate {
            self.rescue(i, goal);
        }
    }

    fn eliminate(&mut self, b: NodeId) {
        self.state.probabilities = update_probabilities(&self.state.probabilities, b, false);
        self.pareto_cache = None;
        self.log("building_eliminated", None, Some(b), String::new());
        // Localization by elimination: only the goal remains.
        if self
            .state
            .probabilities
            .get(&self.scenario.goal)
            .copied()
            .unwrap_or(0.0)
            >= 1.0 - 1e-12
        {
            self.localize_victim();
        }
    }

    /// Writes the episode event log as a CSV table.
    pub fn write_event_log(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["schema_version", "time", "kind", "platoon", "node", "detail"])?;
        for e in &self.events {
            w.write_record([
                "1".to_string(),
                format!("{}", e.time),
                e.kind.to_string(),
                e.platoon.map(|p| p.to_string()).unwrap_or_default(),
                e.node.map(|n| n.to_string()).unwrap_or_default(),
                e.detail.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::map::MapBuilder;
    use crate::sim::scenario::{PlatoonSpec, SCENARIO_SCHEMA_VERSION};

    fn talents() -> TalentVector {
        TalentVector {
            search_speed: 2.0,
            cruising_speed: 10.0,
            flight_range: 5000.0,
        }
    }

    /// depot(0) -- 100m -- i(1) -- 100m -- building(2), W = 80.
    fn line_setup() -> (MapGraph, Scenario) {
        let mut b = MapBuilder::new();
        let depot = b.depot(0.0, 0.0);
        let i1 = b.intersection(100.0, 0.0);
        let bld = b.building(200.0, 0.0, 40.0, 2);
        b.straight_edge(depot, i1);
        b.straight_edge(i1, bld);
        let map = b.build().unwrap();
        let scenario = Scenario {
            schema_version: SCENARIO_SCHEMA_VERSION,
            targets: vec![bld],
            goal: bld,
            time_limit: 600.0,
            adversaries: vec![],
            platoons: vec![
                PlatoonSpec {
                    kind: PlatoonKind::Uav,
                    units: 2,
                },
                PlatoonSpec {
                    kind: PlatoonKind::Ugv,
                    units: 2,
                },
            ],
        };
        (map, scenario)
    }

    #[test]
    fn initial_probabilities_uniform() {
        let mut b = MapBuilder::new();
        let depot = b.depot(0.0, 0.0);
        let mut blds = Vec::new();
        for k in 0..4 {
            let bl = b.building(100.0 * (k + 1) as f64, 0.0, 40.0, 1);
            blds.push(bl);
        }
        b.straight_edge(depot, blds[0]);
        for k in 1..4 {
            b.straight_edge(blds[k - 1], blds[k]);
        }
        let map = b.build().unwrap();
        let scenario = Scenario {
            schema_version: SCENARIO_SCHEMA_VERSION,
            targets: blds.clone(),
            goal: blds[2],
            time_limit: 600.0,
            adversaries: vec![],
            platoons: vec![PlatoonSpec {
                kind: PlatoonKind::Ugv,
                units: 1,
            }],
        };
        let sim = Simulator::new(map, scenario, SimConfig::default(), 0).unwrap();
        for (_, &p) in &sim.state().probabilities {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn update_probabilities_elimination_and_goal() {
        let probs: BTreeMap<NodeId, f64> = [
            (NodeId(1), 0.25),
            (NodeId(2), 0.25),
            (NodeId(3), 0.25),
            (NodeId(4), 0.25),
        ]
        .into_iter()
        .collect();
        let after = update_probabilities(&probs, NodeId(2), false);
        assert_eq!(after[&NodeId(2)], 0.0);
        for id in [1u32, 3, 4] {
            assert!((after[&NodeId(id)] - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((after.values().sum::<f64>() - 1.0).abs() < 1e-12);

        let found = update_probabilities(&probs, NodeId(3), true);
        assert_eq!(found[&NodeId(3)], 1.0);
        assert_eq!(found.values().sum::<f64>(), 1.0);
    }

    #[test]
    fn single_uav_outdoor_timeline() {
        let (map, scenario) = line_setup();
        let mut sim = Simulator::new(map, scenario, SimConfig::default(), 0).unwrap();
        sim.set_talents(talents());
        // UAV to the building, aggressive.
        let d = sim.decision().unwrap();
        assert_eq!(d.acting_platoon, 0);
        let r = sim
            .step(&TacticalAction {
                pareto_node: NodeId(2),
                path_mode: PathMode::Aggressive,
            })
            .unwrap();
        assert!(!r.done);
        // Next decision is the UGV at t = 0 (still idle at the depot).
        let d = sim.decision().unwrap();
        assert_eq!(d.acting_platoon, 1);
        assert_eq!(sim.state().time, 0.0);
        let r = sim
            .step(&TacticalAction {
                pareto_node: NodeId(2),
                path_mode: PathMode::Aggressive,
            })
            .unwrap();
        // UAV arrives at t = 20 (200 m at 10 m/s), searches W = 80 at
        // 2 units x 2 m/s => done at t = 40, localized; UGV arrives at t = 40
        // (200 m at 5 m/s) and rescues on entry. Arrivals are processed before
        // completions, so the UGV enters as a searcher and rescues when the
        // outdoor sweep finishes in the same instant.
        assert!(r.done);
        match sim.outcome().unwrap() {
            Outcome::Success { elapsed } => assert!((elapsed - 40.0).abs() < 1e-6),
            other => panic!("expected success, got {other:?}"),
        }
        // Reward: tau = 1 - 40/600, survival = 1.
        let expected = 1.0 - 40.0 / 600.0 + 1.0;
        assert!((r.reward - expected).abs() < 1e-9);
        let events = sim.events();
        let arrive_uav = events
            .iter()
            .find(|e| e.kind == "arrive" && e.platoon == Some(0) && e.node == Some(NodeId(2)))
            .unwrap();
        assert!((arrive_uav.time - 20.0).abs() < 1e-6);
        let complete = events
            .iter()
            .find(|e| e.kind == "outdoor_search_complete")
            .unwrap();
        assert!((complete.time - 40.0).abs() < 1e-6);
    }

    #[test]
    fn range_accounting_matches_distance() {
        let (map, scenario) = line_setup();
        let mut sim = Simulator::new(map, scenario, SimConfig::default(), 0).unwrap();
        sim.set_talents(talents());
        sim.step(&TacticalAction {
            pareto_node: NodeId(2),
            path_mode: PathMode::Aggressive,
        })
        .unwrap();
        sim.step(&TacticalAction {
            pareto_node: NodeId(2),
            path_mode: PathMode::Aggressive,
        })
        .unwrap();
        let uav = &sim.state().platoons[0];
        assert!(
            (uav.range_initial - uav.range_remaining - uav.distance_traveled).abs() < 1e-6
        );
        assert!((uav.distance_traveled - 200.0).abs() < 1e-6);
    }

    #[test]
    fn time_exhaustion_fails_with_minus_one() {
        let (map, mut scenario) = line_setup();
        scenario.time_limit = 25.0; // UAV arrives at 20, search needs 20 more.
        let mut sim = Simulator::new(map, scenario, SimConfig::default(), 0).unwrap();
        sim.set_talents(talents());
        sim.step(&TacticalAction {
            pareto_node: NodeId(2),
            path_mode: PathMode::Aggressive,
        })
        .unwrap();
        let r = sim
            .step(&TacticalAction {
                pareto_node: NodeId(2),
                path_mode: PathMode::Cautious,
            })
            .unwrap();
        assert!(r.done);
        assert_eq!(r.reward, -1.0);
        assert_eq!(sim.outcome(), Some(Outcome::Failure));
    }

    #[test]
    fn invalid_action_node_rejected() {
        let (map, scenario) = line_setup();
        let mut sim = Simulator::new(map, scenario, SimConfig::default(), 0).unwrap();
        sim.set_talents(talents());
        let err = sim
            .step(&TacticalAction {
                pareto_node: NodeId(0),
                path_mode: PathMode::Aggressive,
            })
            .unwrap_err();
        assert!(err.to_string().contains("pareto set"), "{err}");
    }

    #[test]
    fn conservation_of_units() {
        let (map, scenario) = line_setup();
        let mut sim = Simulator::new(map, scenario, SimConfig::default(), 0).unwrap();
        sim.set_talents(talents());
        let total = sim.initial_units();
        loop {
            let s = sim.state();
            assert_eq!(s.surviving_units() + s.destroyed_units, total);
            if sim.outcome().is_some() {
                break;
            }
            let d = sim.decision().unwrap();
            let action = d.action_from_index(0).unwrap();
            if sim.step(&action).unwrap().done {
                break;
            }
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let (map, scenario) = line_setup();
        let run = |seed: u64| -> Vec<(f64, &'static str)> {
            let mut sim =
                Simulator::new(map.clone(), scenario.clone(), SimConfig::default(), seed).unwrap();
            sim.set_talents(talents());
            while sim.outcome().is_none() {
                let d = sim.decision().unwrap();
                let action = d.action_from_index(d.action_count() - 1).unwrap();
                if sim.step(&action).unwrap().done {
                    break;
                }
            }
            sim.events().iter().map(|e| (e.time, e.kind)).collect()
        };
        assert_eq!(run(7), run(7));
    }
}
