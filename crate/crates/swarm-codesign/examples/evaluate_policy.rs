//! Compare a trained co-design policy against a fixed high-endurance talent
//! pick and the uniform-random baseline on the same evaluation missions.
//!
//! ```bash
//! cargo run --release --example evaluate_policy
//! ```

use swarm_codesign::eval::{evaluate, EvalMode, EvalSummary};
use swarm_codesign::pipeline::{
    cmd_fit, cmd_genmap, cmd_pareto, max_range_talents, tiny_config,
};
use swarm_codesign::policy::PolicyNet;
use swarm_codesign::trainer::{TrainConfig, Trainer};

fn report(label: &str, s: &EvalSummary) {
    println!(
        "{label:10} success {:5.1}%  reward {:6.3}  completion {:>8}  survival {:.3}",
        100.0 * s.success_rate,
        s.mean_reward,
        s.mean_completion_time
            .map(|t| format!("{t:6.1}s"))
            .unwrap_or_else(|| "-".into()),
        s.mean_survival
    );
}

fn main() -> swarm_codesign::Result<()> {
    let out = std::path::Path::new("runs/examples/evaluate_policy");
    std::fs::create_dir_all(out)?;
    let mut cfg = tiny_config(21, out);
    cfg.train.total_timesteps = 8_000;
    cfg.train.workers = 2;

    cmd_genmap(&cfg)?;
    let (_, set) = cmd_pareto(&cfg)?;
    cmd_fit(&cfg)?;
    let env = cfg.train_env()?;

    let train_cfg = TrainConfig {
        seed: 21,
        ..cfg.train.clone()
    };
    let net = PolicyNet::new(cfg.policy_config(&env.surface))?;
    let mut trainer = Trainer::new(net, &train_cfg);
    trainer.run(&env, &train_cfg, None)?;

    let episodes = 100;
    let seed = 1234;
    let trained = evaluate(Some(&trainer.net), &env, EvalMode::Codesign, episodes, seed)?;
    let fixed = max_range_talents(&set);
    let fixed_eval = evaluate(
        Some(&trainer.net),
        &env,
        EvalMode::Fixed(fixed),
        episodes,
        seed,
    )?;
    let random = evaluate(None, &env, EvalMode::Random, episodes, seed)?;

    println!(
        "fixed talent pick: search {:.2} m/s, cruise {:.2} m/s, range {:.0} m\n",
        fixed.search_speed, fixed.cruising_speed, fixed.flight_range
    );
    report("codesign", &trained);
    report("fixed", &fixed_eval);
    report("random", &random);
    Ok(())
}
