//! Generate a synthetic street map plus a pool of mission scenarios and
//! save them as TOML files.
//!
//! ```bash
//! cargo run --example generate_map
//! ```

use swarm_codesign::sim::{generate_pool, save_map, save_scenario, GenParams, NodeKind};

fn main() -> swarm_codesign::Result<()> {
    let params = GenParams {
        grid_width: 4,
        grid_height: 3,
        buildings: 6,
        targets: 4,
        smoke: 1,
        bombs: 1,
        dynamic: 1,
        ..GenParams::default()
    };
    let (map, scenarios) = generate_pool(42, &params, 4)?;

    let out = std::path::Path::new("runs/examples/generate_map");
    std::fs::create_dir_all(out)?;
    save_map(&map, &out.join("map.toml"))?;
    for (i, s) in scenarios.iter().enumerate() {
        save_scenario(s, &out.join(format!("scenario_{i:02}.toml")))?;
    }

    let buildings = map
        .nodes
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::Building { .. }))
        .count();
    println!(
        "map: {} nodes ({} buildings), {} edges",
        map.node_count(),
        buildings,
        map.edges.len()
    );
    for (i, s) in scenarios.iter().enumerate() {
        println!(
            "scenario {i}: {} targets, goal {}, {} adversaries, T_max {} s",
            s.targets.len(),
            s.goal,
            s.adversaries.len(),
            s.time_limit
        );
    }
    println!("files written to {}", out.display());
    Ok(())
}
