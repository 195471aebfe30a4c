//! Batched talent-infused actor-critic training.
//!
//! Rollout workers collect whole episodes: raw talents are drawn once at the
//! first step, decoded through the talent surface, used to instantiate the
//! UAVs, and held for the rest of the episode. Updates are PPO-clip over the
//! batch with generalized advantage estimation; talent Gaussian terms enter
//! the surrogate only on first-step transitions. The critic learns
//! state-talent values with its own optimizer and learning rate.
//!
//! Episode seeds derive from the global seed and the episode counter, so a
//! run is reproducible for any worker count and across checkpoint resumes.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::TalentVector;
use crate::nn::{Adam, Binding, GradStore, ParamSet, Tape, Tensor};
use crate::policy::features::{featurize, FeaturizedState};
use crate::policy::{
    act, actor_forward, critic_forward, joint_terms, value, ActMode, PolicyNet,
    TALENT_INPUT_WEIGHTS,
};
use crate::sim::{Outcome, Scenario, SimConfig, Simulator};
use crate::surface::{RawTalentOutput, TalentSurface};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Episodes per batch (B).
    pub batch_episodes: usize,
    pub clip_ratio: f64,
    pub update_epochs: usize,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub total_timesteps: usize,
    pub workers: usize,
    pub seed: u64,
    pub normalize_advantages: bool,
    pub max_grad_norm: f64,
    /// Write a checkpoint every N batches (0 disables periodic checkpoints).
    pub checkpoint_every_batches: usize,
    /// Fixed-design training: hold this decoded talent triple for every
    /// episode instead of learning the talent head.
    pub fixed_talents: Option<TalentVector>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            batch_episodes: 16,
            clip_ratio: 0.2,
            update_epochs: 4,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            total_timesteps: 20_000,
            workers: 1,
            seed: 0,
            normalize_advantages: true,
            max_grad_norm: 0.5,
            checkpoint_every_batches: 0,
            fixed_talents: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma must be in [0,1], got {}", self.gamma)));
        }
        if self.clip_ratio <= 0.0 {
            return Err(Error::InvalidConfig("clip_ratio must be positive".into()));
        }
        if self.batch_episodes == 0 {
            return Err(Error::InvalidConfig("batch_episodes must be >= 1".into()));
        }
        if self.update_epochs == 0 {
            return Err(Error::InvalidConfig("update_epochs must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::InvalidConfig("gae_lambda must be in [0,1]".into()));
        }
        Ok(())
    }
}

/// One stored step of experience.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: FeaturizedState,
    pub action_index: usize,
    pub reward: f64,
    pub done: bool,
    /// Raw talents held for the whole episode.
    pub raw_talents: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    pub first_step: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeRollout {
    pub episode_index: usize,
    pub scenario_index: usize,
    pub transitions: Vec<Transition>,
    pub reward: f64,
    pub success: bool,
    pub decoded_talents: TalentVector,
}

/// Shared, immutable environment description for a training run.
pub struct TrainEnv {
    pub map: crate::sim::MapGraph,
    pub scenarios: Vec<Scenario>,
    pub sim_config: SimConfig,
    pub surface: TalentSurface,
}

fn episode_seed(seed: u64, episode_index: usize) -> u64 {
    // SplitMix64 mix of the global seed and the episode counter.
    let mut z = seed ^ (episode_index as u64 + 1).wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Runs one full episode under the current policy snapshot.
pub fn rollout_episode(
    net: &PolicyNet,
    env: &TrainEnv,
    cfg: &TrainConfig,
    episode_index: usize,
    mode: ActMode,
) -> Result<EpisodeRollout> {
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(cfg.seed, episode_index));
    let scenario_index = rng.random_range(0..env.scenarios.len());
    let sim_seed = rng.random::<u64>();
    let scenario = env.scenarios[scenario_index].clone();
    let mut sim = Simulator::new(env.map.clone(), scenario, env.sim_config.clone(), sim_seed)
        .map_err(|e| Error::Sim(format!("episode {episode_index}: {e}")))?;

    let scales = net.config.feature_scales();
    let mut transitions: Vec<Transition> = Vec::new();
    let mut episode_reward = 0.0;
    let mut held: Option<Vec<f64>> = cfg
        .fixed_talents
        .map(|t| {
            let raw = env.surface.encode(&t.as_array())?;
            Ok::<_, Error>(raw.values)
        })
        .transpose()?;
    let fixed = cfg.fixed_talents.is_some();
    let mut decoded_talents = cfg.fixed_talents;

    loop {
        let dp = sim
            .decision()
            .map_err(|e| Error::Sim(format!("episode {episode_index}: {e}")))?;
        let state = featurize(&dp, &scales);
        let first_step = transitions.is_empty();

        let out = act(net, &state, &mut rng, mode, held.as_deref())
            .map_err(|e| Error::Sim(format!("episode {episode_index}: {e}")))?;

        if first_step {
            let talents = if fixed {
                decoded_talents.unwrap()
            } else {
                let raw = RawTalentOutput::new(out.raw_talents.clone())?;
                env.surface.decode_talents(&raw)?
            };
            decoded_talents = Some(talents);
            sim.set_talents(talents);
            held = Some(out.raw_talents.clone());
        }

        let action = dp.action_from_index(out.action_index)?;
        let step = sim
            .step(&action)
            .map_err(|e| Error::Sim(format!("episode {episode_index}: {e}")))?;
        episode_reward += step.reward;

        let stored_value = value(net, &state, held.as_deref().unwrap());
        transitions.push(Transition {
            state,
            action_index: out.action_index,
            reward: step.reward,
            done: step.done,
            raw_talents: held.clone().unwrap(),
            log_prob: out.log_prob,
            value: stored_value,
            // Fixed-design runs never expose talent terms to the surrogate.
            first_step: first_step && !fixed,
        });
        if step.done {
            break;
        }
    }

    let success = matches!(sim.outcome(), Some(Outcome::Success { .. }));
    Ok(EpisodeRollout {
        episode_index,
        scenario_index,
        transitions,
        reward: episode_reward,
        success,
        decoded_talents: decoded_talents.expect("episode had at least one step"),
    })
}

/// Collects exactly `cfg.batch_episodes` completed episodes, in episode
/// order, parallel across workers.
pub fn collect_batch(
    net: &PolicyNet,
    env: &TrainEnv,
    cfg: &TrainConfig,
    first_episode_index: usize,
) -> Result<Vec<EpisodeRollout>> {
    let indices: Vec<usize> = (0..cfg.batch_episodes)
        .map(|k| first_episode_index + k)
        .collect();
    if cfg.workers <= 1 {
        indices
            .into_iter()
            .map(|i| rollout_episode(net, env, cfg, i, ActMode::Sample))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Sim(format!("worker pool: {e}")))?;
        pool.install(|| {
            indices
                .into_par_iter()
                .map(|i| rollout_episode(net, env, cfg, i, ActMode::Sample))
                .collect()
        })
    }
}

/// Single-transition TD error: `r + gamma * next_value - value`, with
/// `next_value = 0` on terminal transitions.
pub fn td_error(transition: &Transition, next_value: f64, gamma: f64) -> f64 {
    let bootstrap = if transition.done { 0.0 } else { next_value };
    transition.reward + gamma * bootstrap - transition.value
}

/// Generalized advantage estimation per episode. Returns per-transition
/// advantages and critic regression targets (advantage + value). With
/// `lambda = 0` the advantage reduces exactly to the TD error.
pub fn advantages(episode: &[Transition], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = episode.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { episode[t + 1].value } else { 0.0 };
        let delta = td_error(&episode[t], next_value, gamma);
        acc = delta + gamma * lambda * if episode[t].done { 0.0 } else { acc };
        adv[t] = acc;
    }
    let targets = adv
        .iter()
        .zip(episode)
        .map(|(a, tr)| a + tr.value)
        .collect();
    (adv, targets)
}

/// Flattened batch view used by the update.
pub struct PreparedBatch {
    pub transitions: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
}

pub fn prepare_batch(buffer: &[EpisodeRollout], cfg: &TrainConfig) -> PreparedBatch {
    let mut transitions = Vec::new();
    let mut adv = Vec::new();
    let mut targets = Vec::new();
    for ep in buffer {
        let (a, t) = advantages(&ep.transitions, cfg.gamma, cfg.gae_lambda);
        transitions.extend(ep.transitions.iter().cloned());
        adv.extend(a);
        targets.extend(t);
    }
    if cfg.normalize_advantages && adv.len() > 1 {
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / adv.len() as f64;
        let std = var.sqrt().max(1e-8);
        for a in adv.iter_mut() {
            *a = (*a - mean) / std;
        }
    }
    PreparedBatch {
        transitions,
        advantages: adv,
        targets,
    }
}

pub struct ActorGradStats {
    pub loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
}

/// PPO-clip actor gradient over the prepared batch. Gradient of the frozen
/// talent input weights is zeroed before return.
pub fn actor_gradients(
    net: &PolicyNet,
    batch: &PreparedBatch,
    cfg: &TrainConfig,
) -> Result<(GradStore, ActorGradStats)> {
    let n = batch.transitions.len().max(1) as f64;
    let mut grads = GradStore::zeros_like(&net.actor);
    let mut total_loss = 0.0;
    let mut total_entropy = 0.0;
    let mut total_ratio = 0.0;
    let mut clipped = 0usize;

    for (tr, &adv) in batch.transitions.iter().zip(&batch.advantages) {
        let mut tape = Tape::new();
        let binding = Binding::bind(&mut tape, &net.actor);
        let fwd = actor_forward(&mut tape, net, &binding, &tr.state);
        let (logp, entropy) = joint_terms(
            &mut tape,
            &fwd,
            &tr.state.mask,
            tr.action_index,
            &tr.raw_talents,
            tr.first_step,
        )?;
        let logp_val = tape.value(logp).data[0];
        let ratio_val = (logp_val - tr.log_prob).exp();
        if !ratio_val.is_finite() {
            return Err(Error::NonFinite(format!(
                "importance ratio (logp {logp_val}, stored {})",
                tr.log_prob
            )));
        }
        total_ratio += ratio_val;

        // Standard clip rule: the gradient flows through the ratio unless
        // clipping binds for this sign of the advantage.
        let clip_binds = if adv >= 0.0 {
            ratio_val > 1.0 + cfg.clip_ratio
        } else {
            ratio_val < 1.0 - cfg.clip_ratio
        };
        let surrogate_val = if clip_binds {
            clipped += 1;
            let clipped_ratio = ratio_val.clamp(1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio);
            clipped_ratio * adv
        } else {
            ratio_val * adv
        };
        let ent_val = tape.value(entropy).data[0];
        total_loss += -surrogate_val - cfg.entropy_coef * ent_val;
        total_entropy += ent_val;

        // loss_t = -(ratio * adv) - ent_coef * entropy, ratio term omitted
        // from the graph when the clip binds (its gradient is zero there).
        let shifted = tape.add_const(logp, -tr.log_prob);
        let ratio = tape.exp(shifted);
        let loss_t = if clip_binds {
            tape.scale(entropy, -cfg.entropy_coef)
        } else {
            let surr = tape.scale(ratio, adv);
            let neg_surr = tape.scale(surr, -1.0);
            let ent_term = tape.scale(entropy, -cfg.entropy_coef);
            tape.add(neg_surr, ent_term)
        };
        tape.backward(loss_t);
        grads.accumulate(&tape, &binding, 1.0 / n);
    }

    grads.zero_entry(&net.actor, TALENT_INPUT_WEIGHTS);
    if !grads.is_finite() {
        return Err(Error::NonFinite(format!(
            "actor gradients over {} transitions",
            batch.transitions.len()
        )));
    }
    Ok((
        grads,
        ActorGradStats {
            loss: total_loss / n,
            entropy: total_entropy / n,
            mean_ratio: total_ratio / n,
            clip_fraction: clipped as f64 / n,
        },
    ))
}

/// Squared-error critic gradient against the TD targets.
pub fn critic_gradients(
    net: &PolicyNet,
    batch: &PreparedBatch,
) -> Result<(GradStore, f64)> {
    let n = batch.transitions.len().max(1) as f64;
    let mut grads = GradStore::zeros_like(&net.critic);
    let mut total_loss = 0.0;
    for (tr, &target) in batch.transitions.iter().zip(&batch.targets) {
        let mut tape = Tape::new();
        let binding = Binding::bind(&mut tape, &net.critic);
        let rt = tape.leaf(Tensor::row_vector(&tr.raw_talents));
        let v = critic_forward(&mut tape, net, &binding, &tr.state, rt);
        let diff = tape.add_const(v, -target);
        let loss = tape.powi(diff, 2);
        total_loss += tape.value(loss).data[0];
        tape.backward(loss);
        grads.accumulate(&tape, &binding, 1.0 / n);
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("critic gradients".into()));
    }
    Ok((grads, total_loss / n))
}

fn clip_grads(grads: &mut GradStore, max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub mean_ratio_first_epoch: f64,
    pub clip_fraction: f64,
}

/// One PPO update over a collected batch: `update_epochs` full-batch passes
/// for the actor and the critic with their own optimizers.
pub fn update(
    net: &mut PolicyNet,
    adam_actor: &mut Adam,
    adam_critic: &mut Adam,
    buffer: &[EpisodeRollout],
    cfg: &TrainConfig,
) -> Result<UpdateMetrics> {
    if buffer.is_empty() {
        return Err(Error::EmptyInput("update buffer"));
    }
    let batch = prepare_batch(buffer, cfg);
    let mut metrics = UpdateMetrics {
        actor_loss: 0.0,
        critic_loss: 0.0,
        entropy: 0.0,
        mean_ratio_first_epoch: 0.0,
        clip_fraction: 0.0,
    };
    for epoch in 0..cfg.update_epochs {
        let (mut ag, stats) = actor_gradients(net, &batch, cfg)?;
        clip_grads(&mut ag, cfg.max_grad_norm);
        adam_actor.step(&mut net.actor, &ag);

        let (mut cg, closs) = critic_gradients(net, &batch)?;
        clip_grads(&mut cg, cfg.max_grad_norm);
        adam_critic.step(&mut net.critic, &cg);

        if epoch == 0 {
            metrics.mean_ratio_first_epoch = stats.mean_ratio;
        }
        metrics.actor_loss = stats.loss;
        metrics.critic_loss = closs;
        metrics.entropy = stats.entropy;
        metrics.clip_fraction = stats.clip_fraction;
    }
    Ok(metrics)
}

// ---------------------------------------------------------------------------
// Training loop with history and checkpointing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub scenario: usize,
    pub steps: usize,
    pub reward: f64,
    pub success: bool,
    pub search_speed: f64,
    pub cruising_speed: f64,
    pub flight_range: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
}

pub const HISTORY_HEADER: [&str; 12] = [
    "schema_version",
    "episode",
    "scenario",
    "steps",
    "reward",
    "success",
    "search_speed",
    "cruising_speed",
    "flight_range",
    "actor_loss",
    "critic_loss",
    "entropy",
];

pub fn write_history(records: &[EpisodeRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HISTORY_HEADER)?;
    for r in records {
        w.write_record([
            "1".to_string(),
            r.episode.to_string(),
            r.scenario.to_string(),
            r.steps.to_string(),
            format!("{}", r.reward),
            (r.success as u8).to_string(),
            format!("{}", r.search_speed),
            format!("{}", r.cruising_speed),
            format!("{}", r.flight_range),
            format!("{}", r.actor_loss),
            format!("{}", r.critic_loss),
            format!("{}", r.entropy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Complete resumable training state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainCheckpoint {
    pub version: u32,
    pub config: crate::policy::PolicyConfig,
    pub actor: ParamSet,
    pub critic: ParamSet,
    pub adam_actor: Adam,
    pub adam_critic: Adam,
    pub batches_done: usize,
    pub episodes_done: usize,
    pub timesteps_done: usize,
}

pub const TRAIN_CHECKPOINT_VERSION: u32 = 1;

pub struct Trainer {
    pub net: PolicyNet,
    pub adam_actor: Adam,
    pub adam_critic: Adam,
    pub batches_done: usize,
    pub episodes_done: usize,
    pub timesteps_done: usize,
}

impl Trainer {
    pub fn new(net: PolicyNet, cfg: &TrainConfig) -> Self {
        let adam_actor = Adam::new(&net.actor, cfg.actor_lr);
        let adam_critic = Adam::new(&net.critic, cfg.critic_lr);
        Self {
            net,
            adam_actor,
            adam_critic,
            batches_done: 0,
            episodes_done: 0,
            timesteps_done: 0,
        }
    }

    pub fn from_checkpoint(ckpt: TrainCheckpoint) -> Result<Self> {
        if ckpt.version != TRAIN_CHECKPOINT_VERSION {
            return Err(Error::CheckpointMismatch(format!(
                "unsupported training checkpoint version {}",
                ckpt.version
            )));
        }
        let reference = PolicyNet::new(ckpt.config)?;
        reference.actor.check_shapes_match(&ckpt.actor)?;
        reference.critic.check_shapes_match(&ckpt.critic)?;
        Ok(Self {
            net: PolicyNet {
                config: ckpt.config,
                actor: ckpt.actor,
                critic: ckpt.critic,
            },
            adam_actor: ckpt.adam_actor,
            adam_critic: ckpt.adam_critic,
            batches_done: ckpt.batches_done,
            episodes_done: ckpt.episodes_done,
            timesteps_done: ckpt.timesteps_done,
        })
    }

    pub fn checkpoint(&self) -> TrainCheckpoint {
        TrainCheckpoint {
            version: TRAIN_CHECKPOINT_VERSION,
            config: self.net.config,
            actor: self.net.actor.clone(),
            critic: self.net.critic.clone(),
            adam_actor: self.adam_actor.clone(),
            adam_critic: self.adam_critic.clone(),
            batches_done: self.batches_done,
            episodes_done: self.episodes_done,
            timesteps_done: self.timesteps_done,
        }
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), &self.checkpoint())?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let ckpt: TrainCheckpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
        Self::from_checkpoint(ckpt)
    }

    /// Trains until `cfg.total_timesteps` simulated decisions have been
    /// consumed; returns per-episode history records. Periodic checkpoints
    /// go to `checkpoint_dir` when configured.
    pub fn run(
        &mut self,
        env: &TrainEnv,
        cfg: &TrainConfig,
        checkpoint_dir: Option<&Path>,
    ) -> Result<Vec<EpisodeRecord>> {
        cfg.validate()?;
        if env.scenarios.is_empty() {
            return Err(Error::InvalidConfig("empty scenario pool".into()));
        }
        let mut history = Vec::new();
        while self.timesteps_done < cfg.total_timesteps {
            let buffer = collect_batch(&self.net, env, cfg, self.episodes_done)?;
            let metrics = update(
                &mut self.net,
                &mut self.adam_actor,
                &mut self.adam_critic,
                &buffer,
                cfg,
            )?;
            for ep in &buffer {
                self.timesteps_done += ep.transitions.len();
                history.push(EpisodeRecord {
                    episode: ep.episode_index,
                    scenario: ep.scenario_index,
                    steps: ep.transitions.len(),
                    reward: ep.reward,
                    success: ep.success,
                    search_speed: ep.decoded_talents.search_speed,
                    cruising_speed: ep.decoded_talents.cruising_speed,
                    flight_range: ep.decoded_talents.flight_range,
                    actor_loss: metrics.actor_loss,
                    critic_loss: metrics.critic_loss,
                    entropy: metrics.entropy,
                });
            }
            self.episodes_done += buffer.len();
            self.batches_done += 1;
            log::info!(
                "batch {} episodes {} timesteps {} mean reward {:.3}",
                self.batches_done,
                self.episodes_done,
                self.timesteps_done,
                buffer.iter().map(|e| e.reward).sum::<f64>() / buffer.len() as f64
            );
            if let Some(dir) = checkpoint_dir {
                if cfg.checkpoint_every_batches > 0
                    && self.batches_done % cfg.checkpoint_every_batches == 0
                {
                    let path = dir.join(format!("checkpoint_{:05}.json", self.batches_done));
                    self.save_checkpoint(&path)?;
                }
            }
        }
        Ok(history)
    }
}
