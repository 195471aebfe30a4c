//! Pipeline orchestration: one config file drives map generation, talent
//! Pareto construction, surface fitting, behavior training, evaluation, and
//! morphology finalization, with every artifact written under `out_dir`.
//!
//! Stage seeds derive from the global seed, so a config plus a seed pins
//! every output byte (CSV/TOML artifacts carry no timestamps).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_with_logs, write_metrics, EvalMode, EvalSummary};
use crate::finalize::{
    finalize_morphology, write_convergence, write_design_result, FinalizeResult, PsoConfig,
    TalentScales,
};
use crate::morphology::{DesignBounds, MorphologyModel, TalentVector};
use crate::nsga2::{nsga2_run, read_pareto_table, write_pareto_table, MooConfig, ParetoSet};
use crate::policy::{load_checkpoint, save_checkpoint, PolicyConfig, PolicyNet};
use crate::sim::{
    generate_pool, load_map, load_scenario, save_map, save_scenario, GenParams, SimConfig,
};
use crate::surface::{fit_surface, load_surface, save_surface, RawTalentOutput, TalentSurface};
use crate::trainer::{write_history, TrainConfig, TrainEnv, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct MorphologySection {
    pub bounds: DesignBounds,
    pub model: MorphologyModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfaceFitSection {
    pub degree: usize,
}

impl Default for SurfaceFitSection {
    fn default() -> Self {
        Self { degree: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenMapSection {
    #[serde(flatten)]
    pub params: GenParams,
    pub scenario_count: usize,
}

impl Default for GenMapSection {
    fn default() -> Self {
        Self {
            params: GenParams::default(),
            scenario_count: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicySection {
    pub embed: usize,
    pub p_moments: usize,
    pub capsule_layers: usize,
    pub heads: usize,
    pub critic_hidden: usize,
    pub init_log_std: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        let d = PolicyConfig::default();
        Self {
            embed: d.embed,
            p_moments: d.p_moments,
            capsule_layers: d.capsule_layers,
            heads: d.heads,
            critic_hidden: d.critic_hidden,
            init_log_std: d.init_log_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub episodes: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { episodes: 250 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub morphology: MorphologySection,
    pub moo: MooConfig,
    pub surface_fit: SurfaceFitSection,
    pub genmap: GenMapSection,
    pub sim: SimConfig,
    pub policy: PolicySection,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub pso: PsoConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs/out"),
            morphology: MorphologySection::default(),
            moo: MooConfig::default(),
            surface_fit: SurfaceFitSection::default(),
            genmap: GenMapSection::default(),
            sim: SimConfig::default(),
            policy: PolicySection::default(),
            train: TrainConfig::default(),
            eval: EvalSection::default(),
            pso: PsoConfig::default(),
        }
    }
}

/// Per-stage seed derivation from the global seed.
fn stage_seed(seed: u64, stage: &str) -> u64 {
    let mut z = seed;
    for b in stage.bytes() {
        z = z.wrapping_mul(0x100000001B3).wrapping_add(b as u64);
    }
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: PipelineConfig = toml::from_str(&text).map_err(|e| Error::TomlParse {
            path: path.display().to_string(),
            source: e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.morphology.bounds.validate()?;
        self.moo.validate()?;
        self.genmap.params.validate()?;
        self.train.validate()?;
        self.pso.validate()?;
        if self.genmap.scenario_count == 0 {
            return Err(Error::InvalidConfig("scenario_count must be >= 1".into()));
        }
        if self.eval.episodes == 0 {
            return Err(Error::InvalidConfig("eval.episodes must be >= 1".into()));
        }
        Ok(())
    }

    pub fn map_path(&self) -> PathBuf {
        self.out_dir.join("map.toml")
    }
    pub fn scenario_path(&self, index: usize) -> PathBuf {
        self.out_dir.join(format!("scenario_{index:02}.toml"))
    }
    pub fn pareto_path(&self) -> PathBuf {
        self.out_dir.join("pareto.csv")
    }
    pub fn surface_path(&self) -> PathBuf {
        self.out_dir.join("surface.toml")
    }
    pub fn history_path(&self) -> PathBuf {
        self.out_dir.join("history.csv")
    }
    pub fn checkpoint_dir(&self) -> PathBuf {
        self.out_dir.join("checkpoints")
    }
    pub fn final_checkpoint_path(&self) -> PathBuf {
        self.checkpoint_dir().join("checkpoint_final.json")
    }
    pub fn eval_path(&self, label: &str) -> PathBuf {
        self.out_dir.join(format!("eval_{label}.csv"))
    }
    pub fn design_path(&self) -> PathBuf {
        self.out_dir.join("design.toml")
    }
    pub fn convergence_path(&self) -> PathBuf {
        self.out_dir.join("finalize_convergence.csv")
    }

    fn ensure_out_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        Ok(())
    }

    /// Loads the generated map and scenario pool from `out_dir`.
    pub fn load_world(&self) -> Result<(crate::sim::MapGraph, Vec<crate::sim::Scenario>)> {
        let map = load_map(&self.map_path())?;
        let mut scenarios = Vec::new();
        for i in 0..self.genmap.scenario_count {
            scenarios.push(load_scenario(&self.scenario_path(i))?);
        }
        Ok((map, scenarios))
    }

    pub fn train_env(&self) -> Result<TrainEnv> {
        let (map, scenarios) = self.load_world()?;
        let surface = load_surface(&self.surface_path())?;
        Ok(TrainEnv {
            map,
            scenarios,
            sim_config: self.sim.clone(),
            surface,
        })
    }

    pub fn policy_config(&self, surface: &TalentSurface) -> PolicyConfig {
        let scales = surface.reference_scales();
        PolicyConfig {
            embed: self.policy.embed,
            p_moments: self.policy.p_moments,
            capsule_layers: self.policy.capsule_layers,
            heads: self.policy.heads,
            critic_hidden: self.policy.critic_hidden,
            talent_count: 3,
            talent_scales: [scales[0], scales[1], scales[2]],
            init_log_std: self.policy.init_log_std,
            seed: stage_seed(self.seed, "policy-init"),
        }
    }
}

/// Writes the map and the scenario pool.
pub fn cmd_genmap(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    cfg.ensure_out_dir()?;
    let (map, scenarios) = generate_pool(
        stage_seed(cfg.seed, "genmap"),
        &cfg.genmap.params,
        cfg.genmap.scenario_count,
    )?;
    let mut written = vec![cfg.map_path()];
    save_map(&map, &cfg.map_path())?;
    for (i, s) in scenarios.iter().enumerate() {
        let path = cfg.scenario_path(i);
        save_scenario(s, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Runs the talent Pareto search and writes the table.
pub fn cmd_pareto(cfg: &PipelineConfig) -> Result<(PathBuf, ParetoSet)> {
    cfg.ensure_out_dir()?;
    let moo = MooConfig {
        seed: stage_seed(cfg.seed, "pareto"),
        ..cfg.moo.clone()
    };
    let set = nsga2_run(&cfg.morphology.bounds, &cfg.morphology.model, &moo)?;
    write_pareto_table(&set, &cfg.pareto_path())?;
    Ok((cfg.pareto_path(), set))
}

/// Fits the talent surface from the Pareto table and writes it.
pub fn cmd_fit(cfg: &PipelineConfig) -> Result<(PathBuf, TalentSurface)> {
    let set = read_pareto_table(&cfg.pareto_path())?;
    let surface = fit_surface(&set, cfg.surface_fit.degree)?;
    save_surface(&surface, &cfg.surface_path())?;
    Ok((cfg.surface_path(), surface))
}

pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub episodes: usize,
    pub mean_tail_reward: f64,
}

/// Trains the co-design policy on the generated world.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainOutputs> {
    let env = cfg.train_env()?;
    std::fs::create_dir_all(cfg.checkpoint_dir())?;
    let policy_cfg = cfg.policy_config(&env.surface);
    let train_cfg = TrainConfig {
        seed: stage_seed(cfg.seed, "train"),
        ..cfg.train.clone()
    };
    let net = PolicyNet::new(policy_cfg)?;
    let mut trainer = Trainer::new(net, &train_cfg);
    let history = trainer.run(&env, &train_cfg, Some(&cfg.checkpoint_dir()))?;
    write_history(&history, &cfg.history_path())?;
    save_checkpoint(&trainer.net, &cfg.final_checkpoint_path())?;
    let tail = history.len().saturating_sub(50);
    let tail_slice = &history[tail..];
    let mean_tail_reward = if tail_slice.is_empty() {
        0.0
    } else {
        tail_slice.iter().map(|r| r.reward).sum::<f64>() / tail_slice.len() as f64
    };
    Ok(TrainOutputs {
        checkpoint: cfg.final_checkpoint_path(),
        history: cfg.history_path(),
        episodes: trainer.episodes_done,
        mean_tail_reward,
    })
}

/// Talent triple a trained policy proposes: deterministic head means decoded
/// through the surface.
pub fn checkpoint_talents(net: &PolicyNet, surface: &TalentSurface) -> Result<TalentVector> {
    let bias = net.actor.get("talent_bias");
    let raw: Vec<f64> = bias.data.iter().map(|b| 1.0 / (1.0 + (-b).exp())).collect();
    surface.decode_talents(&RawTalentOutput::new(raw)?)
}

/// The fixed-design baseline triple: the Pareto point with maximum flight
/// range (a conservative high-endurance pick).
pub fn max_range_talents(set: &ParetoSet) -> TalentVector {
    set.points
        .iter()
        .max_by(|a, b| a.1.flight_range.total_cmp(&b.1.flight_range))
        .map(|(_, t)| *t)
        .expect("non-empty pareto set")
}

/// Evaluates a checkpoint (or the random baseline) and writes the metrics
/// table named after `label`.
pub fn cmd_eval(
    cfg: &PipelineConfig,
    checkpoint: Option<&Path>,
    mode: EvalMode,
    label: &str,
    episodes: usize,
    log_dir: Option<&Path>,
) -> Result<(PathBuf, EvalSummary)> {
    let env = cfg.train_env()?;
    let net = checkpoint.map(load_checkpoint).transpose()?;
    let summary = evaluate_with_logs(
        net.as_ref(),
        &env,
        mode,
        episodes,
        stage_seed(cfg.seed, "eval"),
        log_dir,
    )?;
    let path = cfg.eval_path(label);
    write_metrics(&summary, &path)?;
    Ok((path, summary))
}

/// Source of the finalization target.
pub enum FinalizeSource<'a> {
    Checkpoint(&'a Path),
    Talents(TalentVector),
}

/// Recovers a concrete design for the target talents and writes the result
/// plus the convergence history.
pub fn cmd_finalize(
    cfg: &PipelineConfig,
    source: FinalizeSource<'_>,
) -> Result<(PathBuf, FinalizeResult)> {
    cfg.ensure_out_dir()?;
    let surface = load_surface(&cfg.surface_path())?;
    let target = match source {
        FinalizeSource::Checkpoint(path) => {
            let net = load_checkpoint(path)?;
            checkpoint_talents(&net, &surface)?
        }
        FinalizeSource::Talents(t) => t,
    };
    // Prefer spreads from the Pareto table when it exists.
    let scales = match read_pareto_table(&cfg.pareto_path()) {
        Ok(set) => TalentScales::from_pareto(&set),
        Err(_) => TalentScales::from_surface(&surface),
    };
    let pso = PsoConfig {
        seed: stage_seed(cfg.seed, "finalize"),
        ..cfg.pso.clone()
    };
    let result = finalize_morphology(
        &target,
        &cfg.morphology.bounds,
        &cfg.morphology.model,
        &scales,
        &pso,
    )?;
    write_design_result(&result, &target, &cfg.design_path())?;
    write_convergence(&result.history, &cfg.convergence_path())?;
    Ok((cfg.design_path(), result))
}

pub struct PipelineOutputs {
    pub eval_codesign: EvalSummary,
    pub eval_fixed: EvalSummary,
    pub design: FinalizeResult,
}

/// Runs every stage in order: genmap, pareto, fit, train, eval (co-design
/// talents and the fixed max-range baseline triple on the same checkpoint),
/// finalize.
pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutputs> {
    cfg.validate()?;
    cmd_genmap(cfg)?;
    let (_, set) = cmd_pareto(cfg)?;
    cmd_fit(cfg)?;
    let train_out = cmd_train(cfg)?;
    let (_, eval_codesign) = cmd_eval(
        cfg,
        Some(&train_out.checkpoint),
        EvalMode::Codesign,
        "codesign",
        cfg.eval.episodes,
        None,
    )?;
    let fixed = max_range_talents(&set);
    let (_, eval_fixed) = cmd_eval(
        cfg,
        Some(&train_out.checkpoint),
        EvalMode::Fixed(fixed),
        "fixed",
        cfg.eval.episodes,
        None,
    )?;
    let (_, design) = cmd_finalize(cfg, FinalizeSource::Checkpoint(&train_out.checkpoint))?;
    Ok(PipelineOutputs {
        eval_codesign,
        eval_fixed,
        design,
    })
}

/// A pipeline configuration small enough for quick desk runs and tests.
pub fn tiny_config(seed: u64, out_dir: &Path) -> PipelineConfig {
    PipelineConfig {
        seed,
        out_dir: out_dir.to_path_buf(),
        moo: MooConfig {
            population_size: 60,
            generations: 20,
            runs: 2,
            ..MooConfig::default()
        },
        genmap: GenMapSection {
            params: GenParams {
                grid_width: 3,
                grid_height: 3,
                spacing: 160.0,
                buildings: 7,
                targets: 6,
                smoke: 1,
                bombs: 2,
                dynamic: 1,
                uav_platoons: 2,
                uav_units: 2,
                ugv_platoons: 2,
                ugv_units: 2,
                time_limit: 350.0,
                perimeter_range: (60.0, 120.0),
                floors_range: (2, 4),
                ..GenParams::default()
            },
            scenario_count: 8,
        },
        policy: PolicySection {
            embed: 8,
            capsule_layers: 1,
            critic_hidden: 16,
            ..PolicySection::default()
        },
        train: TrainConfig {
            total_timesteps: 3000,
            batch_episodes: 12,
            workers: 2,
            ..TrainConfig::default()
        },
        eval: EvalSection { episodes: 40 },
        pso: PsoConfig {
            population: 80,
            iterations: 40,
            ..PsoConfig::default()
        },
        ..PipelineConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrips_through_toml() {
        let cfg = tiny_config(7, Path::new("runs/x"));
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn default_config_is_valid() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn stage_seeds_differ() {
        let s = 42;
        let stages = ["genmap", "pareto", "train", "eval", "finalize", "policy-init"];
        let seeds: std::collections::BTreeSet<u64> =
            stages.iter().map(|t| stage_seed(s, t)).collect();
        assert_eq!(seeds.len(), stages.len());
    }

    #[test]
    fn genmap_writes_loadable_world() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(3, dir.path());
        let files = cmd_genmap(&cfg).unwrap();
        assert_eq!(files.len(), 1 + cfg.genmap.scenario_count);
        let (map, scenarios) = cfg.load_world().unwrap();
        assert_eq!(scenarios.len(), cfg.genmap.scenario_count);
        for s in &scenarios {
            s.validate_against(&map).unwrap();
        }
    }

    #[test]
    fn pareto_and_fit_stages_produce_consistent_surface() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(5, dir.path());
        let (_, set) = cmd_pareto(&cfg).unwrap();
        assert!(set.len() >= 20);
        let (_, surface) = cmd_fit(&cfg).unwrap();
        let loaded = load_surface(&cfg.surface_path()).unwrap();
        assert_eq!(surface, loaded);
    }
}
