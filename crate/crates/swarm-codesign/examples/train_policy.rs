//! Train the talent-infused policy on a small generated world and plot-ready
//! history: per-episode reward and the decoded talents the head converged to.
//!
//! ```bash
//! cargo run --release --example train_policy
//! ```

use swarm_codesign::pipeline::{
    checkpoint_talents, cmd_fit, cmd_genmap, cmd_pareto, tiny_config,
};
use swarm_codesign::policy::PolicyNet;
use swarm_codesign::trainer::{write_history, TrainConfig, Trainer};

fn main() -> swarm_codesign::Result<()> {
    let out = std::path::Path::new("runs/examples/train_policy");
    std::fs::create_dir_all(out)?;
    let mut cfg = tiny_config(11, out);
    cfg.train.total_timesteps = 8_000;
    cfg.train.workers = 2;

    cmd_genmap(&cfg)?;
    cmd_pareto(&cfg)?;
    cmd_fit(&cfg)?;
    let env = cfg.train_env()?;

    let train_cfg = TrainConfig {
        seed: 11,
        ..cfg.train.clone()
    };
    let net = PolicyNet::new(cfg.policy_config(&env.surface))?;
    let mut trainer = Trainer::new(net, &train_cfg);
    let history = trainer.run(&env, &train_cfg, None)?;

    let window = 50usize;
    for chunk in history.chunks(window) {
        let mean = chunk.iter().map(|r| r.reward).sum::<f64>() / chunk.len() as f64;
        let success = chunk.iter().filter(|r| r.success).count();
        println!(
            "episodes {:4}..{:4}  mean reward {:6.3}  success {:2}/{}",
            chunk[0].episode,
            chunk.last().unwrap().episode,
            mean,
            success,
            chunk.len()
        );
    }

    let talents = checkpoint_talents(&trainer.net, &env.surface)?;
    println!(
        "\nconverged talents: search {:.2} m/s, cruise {:.2} m/s, range {:.0} m",
        talents.search_speed, talents.cruising_speed, talents.flight_range
    );

    let path = out.join("history.csv");
    write_history(&history, &path)?;
    println!("history written to {}", path.display());
    Ok(())
}
