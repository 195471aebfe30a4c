//! Fit the talent-front surface (polynomial surrogate plus 5th/95th
//! percentile envelopes) and decode a few raw policy outputs onto it.
//!
//! ```bash
//! cargo run --release --example fit_surface
//! ```

use swarm_codesign::morphology::{DesignBounds, MorphologyModel};
use swarm_codesign::nsga2::{nsga2_run, MooConfig};
use swarm_codesign::surface::{fit_surface, save_surface, RawTalentOutput};

fn main() -> swarm_codesign::Result<()> {
    let set = nsga2_run(
        &DesignBounds::default(),
        &MorphologyModel::default(),
        &MooConfig {
            seed: 7,
            ..MooConfig::default()
        },
    )?;
    println!("fitting surface on {} front points", set.len());

    let surface = fit_surface(&set, 2)?;
    println!(
        "first talent spans [{:.2}, {:.2}] m/s, surrogate rms {:.1} m",
        surface.t1_min, surface.t1_max, surface.surrogate_rms
    );

    // The decoder maps the raw [0,1]^2 cube onto the modeled band.
    for raw in [[0.0, 0.0], [0.5, 0.5], [1.0, 1.0], [0.25, 0.9]] {
        let t = surface.decode_talents(&RawTalentOutput::new(raw.to_vec())?)?;
        println!(
            "raw ({:.2}, {:.2}) -> search {:5.2} m/s, cruise {:5.2} m/s, range {:6.0} m",
            raw[0], raw[1], t.search_speed, t.cruising_speed, t.flight_range
        );
    }

    let out = std::path::Path::new("runs/examples/fit_surface");
    std::fs::create_dir_all(out)?;
    let path = out.join("surface.toml");
    save_surface(&surface, &path)?;
    println!("surface written to {}", path.display());
    Ok(())
}
