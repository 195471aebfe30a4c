//! Graph attention actor-critic with a constant-output talent head.
//!
//! The actor encodes the four entity graphs with graph-capsule encoders,
//! pools them with the acting-platoon and talent transforms into a context
//! vector, and scores every (path mode, node) pair with three attention
//! decoders. A zero-input-weight head emits the raw talent means once per
//! episode. The critic is a separate multilayer perceptron over pooled raw
//! state features and the held raw talents, so the two learning rates touch
//! disjoint parameter sets.

pub mod attention;
pub mod features;
pub mod gcapcn;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{standard_normal, Binding, ParamSet, Tape, Tensor, Var};
use features::{FeatureScales, FeaturizedState};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Entity feature widths, fixed by the state layout.
pub const BLD_WIDTH: usize = 5;
pub const UAV_WIDTH: usize = 5;
pub const UGV_WIDTH: usize = 6;
pub const ADV_WIDTH: usize = 3;
pub const ACT_WIDTH: usize = 4;
pub const MISSION_WIDTH: usize = 3;
pub const TALENT_WIDTH: usize = 3;

/// Name of the frozen zero input-weight tensor of the talent head.
pub const TALENT_INPUT_WEIGHTS: &str = "talent_in_w";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Embedding length h.
    pub embed: usize,
    /// Highest statistical moment order in the capsule layers.
    pub p_moments: usize,
    /// Number of capsule layers.
    pub capsule_layers: usize,
    /// Attention heads per decoder.
    pub heads: usize,
    pub critic_hidden: usize,
    /// Total talents (the head outputs one fewer).
    pub talent_count: usize,
    /// Per-talent feature normalization constants.
    pub talent_scales: [f64; 3],
    /// Initial log standard deviation of the talent Gaussians.
    pub init_log_std: f64,
    /// Parameter initialization seed.
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            embed: 16,
            p_moments: 2,
            capsule_layers: 2,
            heads: 2,
            critic_hidden: 32,
            talent_count: 3,
            talent_scales: [1.0, 1.0, 1.0],
            init_log_std: (0.3f64).ln(),
            seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed == 0
            || self.p_moments == 0
            || self.capsule_layers == 0
            || self.heads == 0
            || self.critic_hidden == 0
        {
            return Err(Error::InvalidConfig(
                "policy dimensions must all be >= 1".into(),
            ));
        }
        if self.embed % self.heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "embed {} must be divisible by heads {}",
                self.embed, self.heads
            )));
        }
        if self.talent_count < 2 {
            return Err(Error::InvalidConfig("talent_count must be >= 2".into()));
        }
        Ok(())
    }

    pub fn free_talents(&self) -> usize {
        self.talent_count - 1
    }

    pub fn context_width(&self) -> usize {
        6 * self.embed
    }

    pub fn critic_input_width(&self) -> usize {
        MISSION_WIDTH
            + BLD_WIDTH
            + UAV_WIDTH
            + UGV_WIDTH
            + ADV_WIDTH
            + ACT_WIDTH
            + TALENT_WIDTH
            + self.free_talents()
    }

    pub fn feature_scales(&self) -> FeatureScales {
        FeatureScales {
            talents: self.talent_scales,
        }
    }
}

pub const DECODER_PREFIXES: [&str; 3] = ["aggressive", "normal", "cautious"];

/// All learnable state: the actor parameters (encoders, transforms,
/// decoders, talent head, log stddevs) and the critic parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub config: PolicyConfig,
    pub actor: ParamSet,
    pub critic: ParamSet,
}

impl PolicyNet {
    pub fn new(config: PolicyConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.embed;
        let mut actor = ParamSet::new();
        gcapcn::init_encoder(
            &mut rng,
            &mut actor,
            "bld",
            BLD_WIDTH,
            h,
            config.p_moments,
            config.capsule_layers,
        );
        gcapcn::init_encoder(
            &mut rng,
            &mut actor,
            "uav",
            UAV_WIDTH,
            h,
            config.p_moments,
            config.capsule_layers,
        );
        gcapcn::init_encoder(
            &mut rng,
            &mut actor,
            "ugv",
            UGV_WIDTH,
            h,
            config.p_moments,
            config.capsule_layers,
        );
        gcapcn::init_encoder(
            &mut rng,
            &mut actor,
            "adv",
            ADV_WIDTH,
            h,
            config.p_moments,
            config.capsule_layers,
        );
        actor.insert("act_w", crate::nn::init_linear(&mut rng, ACT_WIDTH, h));
        actor.insert("act_b", Tensor::zeros(1, h));
        actor.insert("tal_w", crate::nn::init_linear(&mut rng, TALENT_WIDTH, h));
        actor.insert("tal_b", Tensor::zeros(1, h));
        for prefix in DECODER_PREFIXES {
            attention::init_decoder(&mut rng, &mut actor, prefix, config.context_width(), h);
        }
        // Talent head: zero, frozen input weights; biases start at zero so
        // talents start at the interval midpoints (sigmoid(0) = 0.5).
        actor.insert(
            TALENT_INPUT_WEIGHTS,
            Tensor::zeros(config.context_width(), config.free_talents()),
        );
        actor.insert("talent_bias", Tensor::zeros(1, config.free_talents()));
        actor.insert("talent_log_std", {
            let mut t = Tensor::zeros(1, config.free_talents());
            for v in t.data.iter_mut() {
                *v = config.init_log_std;
            }
            t
        });

        let mut critic = ParamSet::new();
        let cin = config.critic_input_width();
        let ch = config.critic_hidden;
        critic.insert("critic_w1", crate::nn::init_linear(&mut rng, cin, ch));
        critic.insert("critic_b1", Tensor::zeros(1, ch));
        critic.insert("critic_w2", crate::nn::init_linear(&mut rng, ch, ch));
        critic.insert("critic_b2", Tensor::zeros(1, ch));
        critic.insert("critic_w3", crate::nn::init_linear(&mut rng, ch, 1));
        critic.insert("critic_b3", Tensor::zeros(1, 1));

        Ok(Self {
            config,
            actor,
            critic,
        })
    }
}

/// Actor forward outputs as tape vars.
pub struct ActorForward {
    /// Column of `3 * n_bld` logits, mode-major.
    pub logits: Var,
    pub context: Var,
    /// Post-sigmoid talent means, 1 x (m-1).
    pub talent_mean: Var,
    pub talent_log_std: Var,
}

/// Builds the full actor forward pass on the tape.
pub fn actor_forward(
    tape: &mut Tape,
    net: &PolicyNet,
    binding: &Binding,
    state: &FeaturizedState,
) -> ActorForward {
    let cfg = &net.config;
    let params = &net.actor;
    let (p, l) = (cfg.p_moments, cfg.capsule_layers);

    let bld_x = tape.leaf(state.bld.clone());
    let bld_l = tape.leaf(state.bld_lap.clone());
    let uav_x = tape.leaf(state.uav.clone());
    let uav_l = tape.leaf(state.uav_lap.clone());
    let ugv_x = tape.leaf(state.ugv.clone());
    let ugv_l = tape.leaf(state.ugv_lap.clone());
    let adv_x = tape.leaf(state.adv.clone());
    let adv_l = tape.leaf(state.adv_lap.clone());

    let f_bld = gcapcn::encode(tape, params, binding, "bld", bld_x, bld_l, p, l);
    let f_uav = gcapcn::encode(tape, params, binding, "uav", uav_x, uav_l, p, l);
    let f_ugv = gcapcn::encode(tape, params, binding, "ugv", ugv_x, ugv_l, p, l);
    let f_adv = gcapcn::encode(tape, params, binding, "adv", adv_x, adv_l, p, l);

    let act_x = tape.leaf(state.act.clone());
    let act_f = tape.matmul(act_x, binding.var(params, "act_w"));
    let act_f = tape.add_row_broadcast(act_f, binding.var(params, "act_b"));
    let tal_x = tape.leaf(state.talents.clone());
    let tal_f = tape.matmul(tal_x, binding.var(params, "tal_w"));
    let tal_f = tape.add_row_broadcast(tal_f, binding.var(params, "tal_b"));

    let m_bld = tape.mean_rows(f_bld);
    let m_uav = tape.mean_rows(f_uav);
    let m_ugv = tape.mean_rows(f_ugv);
    let m_adv = tape.mean_rows(f_adv);
    let context = tape.concat_cols(&[m_bld, m_uav, m_ugv, m_adv, act_f, tal_f]);

    let mut logit_rows = Vec::with_capacity(3);
    for prefix in DECODER_PREFIXES {
        let col = attention::decode(tape, params, binding, prefix, f_bld, context, cfg.heads);
        logit_rows.push(tape.transpose(col)); // 1 x N
    }
    let row = tape.concat_cols(&logit_rows); // 1 x 3N
    let logits = tape.transpose(row); // 3N x 1

    // Constant head: zero frozen input weights make the context irrelevant.
    let head_in = tape.matmul(context, binding.var(params, TALENT_INPUT_WEIGHTS));
    let head = tape.add_row_broadcast(head_in, binding.var(params, "talent_bias"));
    let talent_mean = tape.sigmoid(head);
    let talent_log_std = binding.var(params, "talent_log_std");

    ActorForward {
        logits,
        context,
        talent_mean,
        talent_log_std,
    }
}

/// Joint log-probability and entropy terms for one action under the masked
/// categorical and (optionally) the first-step talent Gaussians.
///
/// The same expression serves rollouts and updates, so stored and recomputed
/// log-probabilities agree exactly.
pub fn joint_terms(
    tape: &mut Tape,
    fwd: &ActorForward,
    mask: &[bool],
    action_index: usize,
    raw_talents: &[f64],
    include_talent_terms: bool,
) -> Result<(Var, Var)> {
    let unmasked: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if unmasked.is_empty() {
        return Err(Error::AllActionsMasked);
    }
    let pos = unmasked
        .iter()
        .position(|&i| i == action_index)
        .ok_or_else(|| Error::Sim(format!("action {action_index} is masked")))?;

    let valid_logits = tape.gather_rows(fwd.logits, &unmasked);
    let logp_all = tape.log_softmax(valid_logits);
    let logp_action = tape.gather_rows(logp_all, &[pos]);
    let cat_logp = tape.sum(logp_action);

    let probs = tape.softmax(valid_logits);
    let plogp = tape.mul(probs, logp_all);
    let neg_ent = tape.sum(plogp);
    let cat_entropy = tape.scale(neg_ent, -1.0);

    if !include_talent_terms {
        return Ok((cat_logp, cat_entropy));
    }

    let m1 = raw_talents.len();
    let x = tape.leaf(Tensor::row_vector(raw_talents));
    let diff = tape.sub(x, fwd.talent_mean);
    let neg_log_std = tape.scale(fwd.talent_log_std, -1.0);
    let inv_std = tape.exp(neg_log_std);
    let z = tape.mul(diff, inv_std);
    let z2 = tape.powi(z, 2);
    let z2_sum = tape.sum(z2);
    let quad = tape.scale(z2_sum, -0.5);
    let log_std_sum = tape.sum(fwd.talent_log_std);
    let neg_log_std_sum = tape.scale(log_std_sum, -1.0);
    let gauss_core = tape.add(quad, neg_log_std_sum);
    let gauss_logp = tape.add_const(
        gauss_core,
        -(m1 as f64) * 0.5 * (2.0 * std::f64::consts::PI).ln(),
    );
    let logp = tape.add(cat_logp, gauss_logp);

    let gauss_ent = tape.add_const(
        log_std_sum,
        m1 as f64 * 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln(),
    );
    let entropy = tape.add(cat_entropy, gauss_ent);
    Ok((logp, entropy))
}

/// Critic forward: pooled raw state features concatenated with the held raw
/// talents through a three-layer perceptron.
pub fn critic_forward(
    tape: &mut Tape,
    net: &PolicyNet,
    binding: &Binding,
    state: &FeaturizedState,
    raw_talents: Var,
) -> Var {
    let params = &net.critic;
    let bld = tape.leaf(state.bld.clone());
    let uav = tape.leaf(state.uav.clone());
    let ugv = tape.leaf(state.ugv.clone());
    let adv = tape.leaf(state.adv.clone());
    let mission = tape.leaf(state.mission.clone());
    let act = tape.leaf(state.act.clone());
    let talents = tape.leaf(state.talents.clone());
    let m_bld = tape.mean_rows(bld);
    let m_uav = tape.mean_rows(uav);
    let m_ugv = tape.mean_rows(ugv);
    let m_adv = tape.mean_rows(adv);
    let input = tape.concat_cols(&[mission, m_bld, m_uav, m_ugv, m_adv, act, talents, raw_talents]);
    let h1 = tape.matmul(input, binding.var(params, "critic_w1"));
    let h1 = tape.add_row_broadcast(h1, binding.var(params, "critic_b1"));
    let h1 = tape.relu(h1);
    let h2 = tape.matmul(h1, binding.var(params, "critic_w2"));
    let h2 = tape.add_row_broadcast(h2, binding.var(params, "critic_b2"));
    let h2 = tape.relu(h2);
    let out = tape.matmul(h2, binding.var(params, "critic_w3"));
    let out = tape.add_row_broadcast(out, binding.var(params, "critic_b3"));
    tape.sum(out)
}

/// State-talent value, plain evaluation.
pub fn value(net: &PolicyNet, state: &FeaturizedState, raw_talents: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let binding = Binding::bind(&mut tape, &net.critic);
    let rt = tape.leaf(Tensor::row_vector(raw_talents));
    let v = critic_forward(&mut tape, net, &binding, state, rt);
    tape.value(v).data[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Deterministic,
}

/// The custom action distribution at one state: masked categorical logits
/// over (mode, node) pairs plus independent talent Gaussians.
#[derive(Debug, Clone)]
pub struct ActionDistribution {
    pub logits: Vec<f64>,
    /// Masked probabilities; exactly zero on masked entries.
    pub probs: Vec<f64>,
    pub talent_means: Vec<f64>,
    pub talent_stds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ActOutput {
    pub action_index: usize,
    /// Raw talents in [0,1]; sampled or passed through.
    pub raw_talents: Vec<f64>,
    /// Joint log-probability (categorical plus first-step Gaussians).
    pub log_prob: f64,
    pub entropy: f64,
    pub distribution: ActionDistribution,
}

/// One policy invocation. `held_talents: None` marks the episode's first
/// step: talents are drawn (or set to their means) and their Gaussian
/// log-density joins the log-probability. Later steps pass the held values
/// through and carry categorical terms only.
pub fn act<R: rand::Rng>(
    net: &PolicyNet,
    state: &FeaturizedState,
    rng: &mut R,
    mode: ActMode,
    held_talents: Option<&[f64]>,
) -> Result<ActOutput> {
    let mut tape = Tape::new();
    let binding = Binding::bind(&mut tape, &net.actor);
    let fwd = actor_forward(&mut tape, net, &binding, state);

    let logits = tape.value(fwd.logits).data.clone();
    if logits.len() != state.mask.len() {
        return Err(Error::DimensionMismatch {
            context: "logit/mask lengths",
            expected: state.mask.len(),
            got: logits.len(),
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("action logits".into()));
    }
    let unmasked: Vec<usize> = (0..state.mask.len()).filter(|&i| state.mask[i]).collect();
    if unmasked.is_empty() {
        return Err(Error::AllActionsMasked);
    }

    // Masked probabilities: softmax over the unmasked subset, zeros elsewhere.
    let mx = unmasked
        .iter()
        .map(|&i| logits[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs = vec![0.0; logits.len()];
    let mut total = 0.0;
    for &i in &unmasked {
        let e = (logits[i] - mx).exp();
        probs[i] = e;
        total += e;
    }
    for p in probs.iter_mut() {
        *p /= total;
    }

    let action_index = match mode {
        ActMode::Deterministic => unmasked
            .iter()
            .copied()
            .max_by(|&a, &b| logits[a].total_cmp(&logits[b]))
            .unwrap(),
        ActMode::Sample => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = *unmasked.last().unwrap();
            for &i in &unmasked {
                acc += probs[i];
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        }
    };

    let means = tape.value(fwd.talent_mean).data.clone();
    let stds: Vec<f64> = tape
        .value(fwd.talent_log_std)
        .data
        .iter()
        .map(|v| v.exp())
        .collect();
    let (raw_talents, first_step) = match held_talents {
        Some(held) => (held.to_vec(), false),
        None => {
            let drawn = match mode {
                ActMode::Deterministic => means.clone(),
                ActMode::Sample => means
                    .iter()
                    .zip(&stds)
                    .map(|(&m, &s)| (m + s * standard_normal(rng)).clamp(0.0, 1.0))
                    .collect(),
            };
            (drawn, true)
        }
    };

    let (logp_var, ent_var) = joint_terms(
        &mut tape,
        &fwd,
        &state.mask,
        action_index,
        &raw_talents,
        first_step,
    )?;
    let log_prob = tape.value(logp_var).data[0];
    let entropy = tape.value(ent_var).data[0];

    Ok(ActOutput {
        action_index,
        raw_talents,
        log_prob,
        entropy,
        distribution: ActionDistribution {
            logits,
            probs,
            talent_means: means,
            talent_stds: stds,
        },
    })
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: PolicyConfig,
    pub actor: ParamSet,
    pub critic: ParamSet,
}

pub fn save_checkpoint(net: &PolicyNet, path: &Path) -> Result<()> {
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        config: net.config,
        actor: net.actor.clone(),
        critic: net.critic.clone(),
    };
    let file = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(file), &ckpt)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyNet> {
    let file = std::fs::File::open(path)?;
    let ckpt: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointMismatch(format!(
            "unsupported checkpoint version {}",
            ckpt.version
        )));
    }
    let reference = PolicyNet::new(ckpt.config)?;
    reference.actor.check_shapes_match(&ckpt.actor)?;
    reference.critic.check_shapes_match(&ckpt.critic)?;
    Ok(PolicyNet {
        config: ckpt.config,
        actor: ckpt.actor,
        critic: ckpt.critic,
    })
}
