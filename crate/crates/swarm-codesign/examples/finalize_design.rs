//! Recover a concrete UAV design for a target talent triple with the
//! mixed-discrete particle swarm, then check it by re-evaluating the talent
//! map on the returned design.
//!
//! ```bash
//! cargo run --release --example finalize_design
//! ```

use swarm_codesign::finalize::{finalize_morphology, PsoConfig, TalentScales};
use swarm_codesign::morphology::{evaluate_talents, DesignBounds, MorphologyModel, TalentVector};
use swarm_codesign::nsga2::{nsga2_run, MooConfig};

fn main() -> swarm_codesign::Result<()> {
    let bounds = DesignBounds::default();
    let model = MorphologyModel::default();

    let set = nsga2_run(
        &bounds,
        &model,
        &MooConfig {
            seed: 3,
            ..MooConfig::default()
        },
    )?;
    let scales = TalentScales::from_pareto(&set);

    let target = TalentVector {
        search_speed: 3.5,
        cruising_speed: 8.0,
        flight_range: 6000.0,
    };
    println!(
        "target talents: search {:.2} m/s, cruise {:.2} m/s, range {:.0} m",
        target.search_speed, target.cruising_speed, target.flight_range
    );

    let result = finalize_morphology(
        &target,
        &bounds,
        &model,
        &scales,
        &PsoConfig {
            population: 150,
            iterations: 80,
            seed: 9,
            ..PsoConfig::default()
        },
    )?;

    let d = &result.design;
    println!("\nrecovered design (normalized residual {:.4}):", result.residual);
    println!("  arm length     {:.3} m", d.arm_length);
    println!("  arm width      {:.3} m", d.arm_width);
    println!(
        "  motor          {:.0} W (catalog index {})",
        bounds.motor_catalog_w[d.motor_index], d.motor_index
    );
    println!(
        "  battery        {:.0} Wh (catalog index {})",
        bounds.battery_catalog_wh[d.battery_index], d.battery_index
    );
    println!("  prop diameter  {:.3} m", d.prop_diameter);
    println!("  payload        {:.3} kg", d.payload_mass);

    let achieved = evaluate_talents(d, &bounds, &model)?;
    println!(
        "\nachieved talents: search {:.2} m/s, cruise {:.2} m/s, range {:.0} m",
        achieved.search_speed, achieved.cruising_speed, achieved.flight_range
    );
    println!(
        "convergence: {:.4} -> {:.4} over {} iterations",
        result.history.first().unwrap(),
        result.history.last().unwrap(),
        result.history.len()
    );
    Ok(())
}
