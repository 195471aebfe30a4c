//! Command-line front end for the co-design pipeline. Every subcommand is a
//! thin wrapper over the library's `pipeline` module; `RUST_LOG` controls
//! log verbosity.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use swarm_codesign::error::Result;
use swarm_codesign::eval::EvalMode;
use swarm_codesign::morphology::TalentVector;
use swarm_codesign::pipeline::{
    cmd_eval, cmd_finalize, cmd_fit, cmd_genmap, cmd_pareto, cmd_pipeline, cmd_train,
    FinalizeSource, PipelineConfig,
};

#[derive(Parser)]
#[command(
    name = "swarm-codesign",
    about = "Morphology/behavior co-design for search-and-rescue swarms",
    version
)]
struct Cli {
    /// Pipeline config file (TOML); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Override the rollout worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalModeArg {
    Codesign,
    Fixed,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the street map and the scenario pool.
    Genmap,
    /// Run the talent Pareto search and write the table.
    Pareto,
    /// Fit the talent surface from the Pareto table.
    Fit {
        /// Polynomial degree override.
        #[arg(long)]
        degree: Option<usize>,
    },
    /// Train the co-design policy on the generated world.
    Train,
    /// Evaluate a checkpoint (or the random baseline).
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "codesign")]
        mode: EvalModeArg,
        /// Fixed-mode talent triple "search,cruise,range"; defaults to the
        /// max-range Pareto point.
        #[arg(long)]
        talents: Option<String>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Write per-episode event logs into this directory.
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Recover the concrete morphology for learned or explicit talents.
    Finalize {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Explicit talent triple "search,cruise,range".
        #[arg(long)]
        talents: Option<String>,
    },
    /// Run every stage in sequence.
    Pipeline,
}

fn parse_talents(text: &str) -> Result<TalentVector> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| {
            swarm_codesign::Error::InvalidConfig(format!("bad talent triple {text:?}: {e}"))
        })?;
    if parts.len() != 3 {
        return Err(swarm_codesign::Error::InvalidConfig(format!(
            "talent triple needs 3 components, got {}",
            parts.len()
        )));
    }
    Ok(TalentVector {
        search_speed: parts[0],
        cruising_speed: parts[1],
        flight_range: parts[2],
    })
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = cli.out_dir {
        cfg.out_dir = dir;
    }
    if let Some(workers) = cli.workers {
        cfg.train.workers = workers;
    }
    cfg.validate()?;

    match cli.command {
        Command::Genmap => {
            let files = cmd_genmap(&cfg)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Pareto => {
            let (path, set) = cmd_pareto(&cfg)?;
            println!("{} ({} points)", path.display(), set.len());
        }
        Command::Fit { degree } => {
            if let Some(d) = degree {
                cfg.surface_fit.degree = d;
            }
            let (path, surface) = cmd_fit(&cfg)?;
            println!(
                "{} (degree {}, surrogate rms {:.3})",
                path.display(),
                surface.degree,
                surface.surrogate_rms
            );
        }
        Command::Train => {
            let out = cmd_train(&cfg)?;
            println!(
                "{} ({} episodes, tail mean reward {:.3})",
                out.checkpoint.display(),
                out.episodes,
                out.mean_tail_reward
            );
            println!("{}", out.history.display());
        }
        Command::Eval {
            checkpoint,
            mode,
            talents,
            episodes,
            log_dir,
        } => {
            let episodes = episodes.unwrap_or(cfg.eval.episodes);
            let default_ckpt = cfg.final_checkpoint_path();
            let (label, mode, ckpt): (&str, EvalMode, Option<PathBuf>) = match mode {
                EvalModeArg::Codesign => (
                    "codesign",
                    EvalMode::Codesign,
                    Some(checkpoint.unwrap_or(default_ckpt)),
                ),
                EvalModeArg::Fixed => {
                    let triple = match talents {
                        Some(t) => parse_talents(&t)?,
                        None => {
                            let set =
                                swarm_codesign::nsga2::read_pareto_table(&cfg.pareto_path())?;
                            swarm_codesign::pipeline::max_range_talents(&set)
                        }
                    };
                    (
                        "fixed",
                        EvalMode::Fixed(triple),
                        Some(checkpoint.unwrap_or(default_ckpt)),
                    )
                }
                EvalModeArg::Random => ("random", EvalMode::Random, None),
            };
            let (path, summary) =
                cmd_eval(&cfg, ckpt.as_deref(), mode, label, episodes, log_dir.as_deref())?;
            println!(
                "{} success {:.1}% reward {:.3} completion {} survival {:.3}",
                path.display(),
                100.0 * summary.success_rate,
                summary.mean_reward,
                summary
                    .mean_completion_time
                    .map(|t| format!("{t:.1}s"))
                    .unwrap_or_else(|| "-".into()),
                summary.mean_survival
            );
        }
        Command::Finalize {
            checkpoint,
            talents,
        } => {
            let default_ckpt = cfg.final_checkpoint_path();
            let explicit = talents.map(|t| parse_talents(&t)).transpose()?;
            let ckpt_path = checkpoint.unwrap_or(default_ckpt);
            let source = match explicit {
                Some(t) => FinalizeSource::Talents(t),
                None => FinalizeSource::Checkpoint(&ckpt_path),
            };
            let (path, result) = cmd_finalize(&cfg, source)?;
            println!(
                "{} residual {:.4} talents ({:.2}, {:.2}, {:.0})",
                path.display(),
                result.residual,
                result.talents.search_speed,
                result.talents.cruising_speed,
                result.talents.flight_range
            );
        }
        Command::Pipeline => {
            let out = cmd_pipeline(&cfg)?;
            println!(
                "codesign: success {:.1}% reward {:.3}",
                100.0 * out.eval_codesign.success_rate,
                out.eval_codesign.mean_reward
            );
            println!(
                "fixed:    success {:.1}% reward {:.3}",
                100.0 * out.eval_fixed.success_rate,
                out.eval_fixed.mean_reward
            );
            println!(
                "design residual {:.4}; artifacts in {}",
                out.design.residual,
                cfg.out_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            log::debug!("error detail: {e:?}");
            ExitCode::FAILURE
        }
    }
}
