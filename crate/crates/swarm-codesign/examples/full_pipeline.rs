//! End-to-end run of all four stages on the bundled tiny configuration:
//! talent Pareto construction, surface fitting, behavior/talent training,
//! and morphology finalization, plus evaluation of the result.
//!
//! ```bash
//! cargo run --release --example full_pipeline
//! ```

use swarm_codesign::pipeline::{cmd_pipeline, tiny_config};

fn main() -> swarm_codesign::Result<()> {
    let out = std::path::Path::new("runs/examples/full_pipeline");
    std::fs::create_dir_all(out)?;
    let mut cfg = tiny_config(5, out);
    cfg.train.total_timesteps = 6_000;
    cfg.train.workers = 2;
    cfg.eval.episodes = 60;

    let started = std::time::Instant::now();
    let outputs = cmd_pipeline(&cfg)?;
    println!("pipeline finished in {:.0} s\n", started.elapsed().as_secs_f64());

    println!(
        "co-design eval: success {:5.1}%  mean reward {:6.3}",
        100.0 * outputs.eval_codesign.success_rate,
        outputs.eval_codesign.mean_reward
    );
    println!(
        "fixed eval:     success {:5.1}%  mean reward {:6.3}",
        100.0 * outputs.eval_fixed.success_rate,
        outputs.eval_fixed.mean_reward
    );
    let d = &outputs.design;
    println!(
        "final design:   residual {:.4}, talents ({:.2} m/s, {:.2} m/s, {:.0} m)",
        d.residual, d.talents.search_speed, d.talents.cruising_speed, d.talents.flight_range
    );
    println!("\nartifacts in {}:", out.display());
    for entry in std::fs::read_dir(out)? {
        println!("  {}", entry?.file_name().to_string_lossy());
    }
    Ok(())
}
