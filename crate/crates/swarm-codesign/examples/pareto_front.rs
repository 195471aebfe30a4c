//! Build the talent Pareto front: NSGA-II over the UAV design space,
//! maximizing search speed, cruising speed, and flight range at once.
//!
//! ```bash
//! cargo run --release --example pareto_front
//! ```

use swarm_codesign::morphology::{DesignBounds, MorphologyModel};
use swarm_codesign::nsga2::{nsga2_run, write_pareto_table, MooConfig};

fn main() -> swarm_codesign::Result<()> {
    let bounds = DesignBounds::default();
    let model = MorphologyModel::default();
    let config = MooConfig {
        population_size: 120,
        generations: 40,
        runs: 6,
        seed: 7,
        ..MooConfig::default()
    };

    let set = nsga2_run(&bounds, &model, &config)?;
    let ranges = set.talent_ranges();
    println!("{} non-dominated designs", set.len());
    println!(
        "search speed  {:6.2} .. {:6.2} m/s",
        ranges[0].0, ranges[0].1
    );
    println!(
        "cruise speed  {:6.2} .. {:6.2} m/s",
        ranges[1].0, ranges[1].1
    );
    println!(
        "flight range  {:6.0} .. {:6.0} m",
        ranges[2].0, ranges[2].1
    );

    let out = std::path::Path::new("runs/examples/pareto_front");
    std::fs::create_dir_all(out)?;
    let path = out.join("pareto.csv");
    write_pareto_table(&set, &path)?;
    println!("table written to {}", path.display());
    Ok(())
}
