//! Mission world: the map graph, scenarios, path planning, the synthetic
//! generator, and the event-driven episode engine.

pub mod engine;
pub mod gen;
pub mod map;
pub mod path;
pub mod scenario;

pub use engine::{
    compute_reward, update_probabilities, DecisionPoint, Event, MissionState, Outcome, Platoon,
    PlatoonStatus, SimConfig, Simulator, StepResult, TacticalAction,
};
pub use gen::{generate, generate_map, generate_pool, generate_scenario_on, GenParams};
pub use map::{load_map, save_map, MapBuilder, MapEdge, MapGraph, MapNode, NodeId, NodeKind};
pub use path::{distances_from, pareto_nodes, plan_path, PathMode, PathPlan};
pub use scenario::{
    load_scenario, save_scenario, AdversaryKind, AdversaryState, PlatoonKind, PlatoonSpec,
    Scenario,
};
