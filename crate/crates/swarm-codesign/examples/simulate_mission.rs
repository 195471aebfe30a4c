//! Walk through one mission on a handcrafted map with scripted decisions,
//! printing the event log: a UAV platoon sweeps building perimeters to
//! localize the victim while UGV platoons move in for the rescue.
//!
//! ```bash
//! cargo run --example simulate_mission
//! ```

use swarm_codesign::morphology::TalentVector;
use swarm_codesign::sim::{
    MapBuilder, PathMode, PlatoonKind, PlatoonSpec, Scenario, SimConfig, Simulator,
    TacticalAction,
};

fn main() -> swarm_codesign::Result<()> {
    // Depot, a cross of streets, and three suspect buildings.
    let mut b = MapBuilder::new();
    let depot = b.depot(0.0, 0.0);
    let west = b.intersection(150.0, 0.0);
    let east = b.intersection(300.0, 0.0);
    let bld_a = b.building(150.0, 120.0, 60.0, 2);
    let bld_b = b.building(300.0, 120.0, 80.0, 2);
    let bld_c = b.building(450.0, 0.0, 60.0, 1);
    b.straight_edge(depot, west);
    b.straight_edge(west, east);
    b.straight_edge(west, bld_a);
    b.straight_edge(east, bld_b);
    b.straight_edge(east, bld_c);
    let map = b.build()?;

    let scenario = Scenario {
        schema_version: 1,
        targets: vec![bld_a, bld_b, bld_c],
        goal: bld_b,
        time_limit: 600.0,
        adversaries: vec![],
        platoons: vec![
            PlatoonSpec {
                kind: PlatoonKind::Uav,
                units: 2,
            },
            PlatoonSpec {
                kind: PlatoonKind::Ugv,
                units: 3,
            },
        ],
    };

    let mut sim = Simulator::new(map, scenario, SimConfig::default(), 1)?;
    sim.set_talents(TalentVector {
        search_speed: 3.0,
        cruising_speed: 10.0,
        flight_range: 6000.0,
    });

    // Scripted tactics: the UAV sweeps building A, the UGV heads for B; keep
    // assigning idle platoons to the most probable remaining target.
    loop {
        let dp = sim.decision()?;
        let acting = dp.acting_platoon;
        // Most probable pareto node that is still a live target.
        let node = dp
            .pareto_nodes
            .iter()
            .zip(&dp.node_feats)
            .max_by(|a, b| a.1[2].total_cmp(&b.1[2]))
            .map(|(n, _)| *n)
            .unwrap();
        let action = TacticalAction {
            pareto_node: node,
            path_mode: PathMode::Normal,
        };
        println!(
            "t={:7.1}s platoon {} -> {} ({} candidate nodes)",
            sim.state().time,
            acting,
            node,
            dp.pareto_nodes.len()
        );
        if sim.step(&action)?.done {
            break;
        }
    }

    println!("\nevent log:");
    for e in sim.events() {
        println!(
            "  {:7.1}s {:24} platoon={} node={} {}",
            e.time,
            e.kind,
            e.platoon.map(|p| p.to_string()).unwrap_or_else(|| "-".into()),
            e.node.map(|n| n.to_string()).unwrap_or_else(|| "-".into()),
            e.detail
        );
    }
    println!("\noutcome: {:?}", sim.outcome().unwrap());
    Ok(())
}
