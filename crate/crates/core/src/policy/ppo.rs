//! Proximal policy optimisation with a clipped surrogate and GAE.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gaussian::{squash, ActorCritic, LOG_STD_MAX, LOG_STD_MIN};
use super::nn::{clip_grad_norm, Adam, Parameters};
use super::{Fragment, PolicyError, TrajectoryBatch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub lr: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Global gradient-norm clip; 0 disables.
    pub max_grad_norm: f64,
    pub initial_log_std: f64,
    /// Decay the learning rate linearly to zero over the run.
    pub anneal_lr: bool,
    /// Divide rewards by a running std of discounted returns.
    pub normalize_rewards: bool,
    pub hidden_sizes: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            lr: 3e-4,
            epochs: 10,
            minibatch_size: 256,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 5.0,
            initial_log_std: -1.5,
            anneal_lr: true,
            normalize_rewards: true,
            hidden_sizes: super::HIDDEN_LAYERS.to_vec(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: String| Err(PolicyError::Hyperparameter(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda must lie in [0, 1], got {}", self.gae_lambda));
        }
        if !(self.clip_eps > 0.0) {
            return bad(format!("clip_eps must be > 0, got {}", self.clip_eps));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if self.minibatch_size == 0 {
            return bad("minibatch_size must be >= 1".into());
        }
        if !(self.value_coef >= 0.0 && self.entropy_coef >= 0.0 && self.max_grad_norm >= 0.0) {
            return bad("value_coef, entropy_coef and max_grad_norm must be >= 0".into());
        }
        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&self.initial_log_std) {
            return bad(format!("initial_log_std must lie in [{LOG_STD_MIN}, {LOG_STD_MAX}]"));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return bad("hidden_sizes must list at least one positive width".into());
        }
        Ok(())
    }
}

/// Generalised advantage estimation over one fragment.
///
/// `dones[t]` marks that the episode ended after step `t`; `bootstrap_value`
/// is `V(s_T)` for the state following the last step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    gae_lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PolicyError> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(PolicyError::Shape(format!(
            "rewards ({n}), values ({}) and dones ({}) differ in length",
            values.len(),
            dones.len()
        )));
    }
    let mut advantages = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * gae_lambda * live * next_adv;
        advantages[t] = next_adv;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Running standard deviation of per-stream discounted returns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardScaler {
    running: BTreeMap<usize, f64>,
    count: u64,
    mean: f64,
    m2: f64,
}

impl RewardScaler {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Current multiplier applied to rewards.
    pub fn scale(&self) -> f64 {
        if self.count < 2 {
            1.0
        } else {
            1.0 / (self.m2 / (self.count - 1) as f64 + 1e-8).sqrt()
        }
    }

    /// Updates the statistics with a batch of fragments, in order.
    pub fn observe<'a>(&mut self, fragments: impl Iterator<Item = &'a Fragment>, gamma: f64) {
        for f in fragments {
            let ret = self.running.entry(f.stream).or_insert(0.0);
            let mut r = *ret;
            let mut pushed = Vec::with_capacity(f.transitions.len());
            for t in &f.transitions {
                r = r * gamma + t.reward;
                pushed.push(r);
                if t.done {
                    r = 0.0;
                }
            }
            *ret = r;
            for x in pushed {
                self.push(x);
            }
        }
    }
}

/// Flattened training arrays with normalised advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedBatch {
    pub obs: Array2<f64>,
    pub pre_squash: Array2<f64>,
    pub old_log_prob: Array1<f64>,
    pub advantages: Array1<f64>,
    pub returns: Array1<f64>,
}

impl PreparedBatch {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Runs GAE per fragment (bootstrapping unfinished fragments with the
    /// current value network) and normalises advantages over the batch.
    pub fn from_fragments<'a>(
        fragments: impl Iterator<Item = &'a Fragment>,
        params: &ActorCritic,
        reward_scale: f64,
        gamma: f64,
        gae_lambda: f64,
    ) -> Result<Self, PolicyError> {
        let obs_dim = params.obs_dim();
        let act_dim = params.action_dim();
        let (mut obs, mut pre, mut old, mut adv, mut ret) = (vec![], vec![], vec![], vec![], vec![]);
        for f in fragments {
            let Some(last) = f.transitions.last() else { continue };
            let bootstrap = if last.done { 0.0 } else { params.value.predict(&last.next_obs)[0] };
            let rewards: Vec<f64> = f.transitions.iter().map(|t| t.reward * reward_scale).collect();
            let values: Vec<f64> = f.transitions.iter().map(|t| t.value).collect();
            let dones: Vec<bool> = f.transitions.iter().map(|t| t.done).collect();
            let (a, r) = compute_gae(&rewards, &values, &dones, bootstrap, gamma, gae_lambda)?;
            for t in &f.transitions {
                if t.obs.len() != obs_dim || t.pre_squash.len() != act_dim {
                    return Err(PolicyError::Shape("transition does not match network dimensions".into()));
                }
                obs.extend_from_slice(&t.obs);
                pre.extend_from_slice(&t.pre_squash);
                old.push(t.log_prob);
            }
            adv.extend(a);
            ret.extend(r);
        }
        let n = old.len();
        let mut advantages = Array1::from(adv);
        if n > 0 {
            let mean = advantages.mean().unwrap_or(0.0);
            let std = advantages.mapv(|a| (a - mean).powi(2)).mean().unwrap_or(0.0).sqrt();
            advantages.mapv_inplace(|a| (a - mean) / (std + 1e-8));
        }
        Ok(Self {
            obs: Array2::from_shape_vec((n, obs_dim), obs).expect("rows match"),
            pre_squash: Array2::from_shape_vec((n, act_dim), pre).expect("rows match"),
            old_log_prob: Array1::from(old),
            advantages,
            returns: Array1::from(ret),
        })
    }

    pub fn select(&self, rows: &[usize]) -> PreparedBatch {
        PreparedBatch {
            obs: self.obs.select(Axis(0), rows),
            pre_squash: self.pre_squash.select(Axis(0), rows),
            old_log_prob: self.old_log_prob.select(Axis(0), rows),
            advantages: self.advantages.select(Axis(0), rows),
            returns: self.returns.select(Axis(0), rows),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoLoss {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Clipped-surrogate loss (to be minimised) and, optionally, its gradient.
///
/// `loss = −mean(min(ρA, clip(ρ, 1−ε, 1+ε)A)) + c_v·mean((V − R)²) − c_e·H`
pub fn ppo_loss(
    params: &ActorCritic,
    mb: &PreparedBatch,
    clip_eps: f64,
    value_coef: f64,
    entropy_coef: f64,
    grads: Option<&mut ActorCritic>,
) -> PpoLoss {
    let b = mb.len().max(1) as f64;
    let policy_trace = params.policy.forward(mb.obs.view());
    let value_trace = params.value.forward(mb.obs.view());
    let mean = policy_trace.output();
    let values = value_trace.output().column(0).to_owned();
    let log_std = params.clamped_log_std();
    let inv_std: Vec<f64> = log_std.iter().map(|s| (-s).exp()).collect();
    let act_dim = log_std.len();
    let norm_const = act_dim as f64 * 0.5 * (2.0 * PI).ln() + log_std.iter().sum::<f64>();

    let mut out = PpoLoss::default();
    let mut d_lp = Array1::<f64>::zeros(mb.len());
    let mut z_all = Array2::<f64>::zeros(mean.raw_dim());
    for i in 0..mb.len() {
        let mut quad = 0.0;
        let mut correction = 0.0;
        for j in 0..act_dim {
            let u = mb.pre_squash[[i, j]];
            let z = (u - mean[[i, j]]) * inv_std[j];
            z_all[[i, j]] = z;
            quad += z * z;
            let a = squash(u);
            correction += (1.0 - a * a + super::gaussian::SQUASH_EPS).ln();
        }
        let new_lp = -0.5 * quad - norm_const - correction;
        let old_lp = mb.old_log_prob[i];
        let ratio = (new_lp - old_lp).exp();
        let a = mb.advantages[i];
        let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
        let unclipped_obj = ratio * a;
        let clipped_obj = clipped * a;
        if unclipped_obj <= clipped_obj {
            out.policy_loss -= unclipped_obj / b;
            d_lp[i] = -a * ratio / b;
        } else {
            out.policy_loss -= clipped_obj / b;
        }
        if (ratio - 1.0).abs() > clip_eps {
            out.clip_fraction += 1.0 / b;
        }
        out.mean_ratio += ratio / b;
        out.approx_kl += (old_lp - new_lp) / b;
    }
    let diff = &values - &mb.returns;
    out.value_loss = diff.mapv(|d| d * d).sum() / b;
    out.entropy = super::gaussian::entropy(&log_std);
    out.total = out.policy_loss + value_coef * out.value_loss - entropy_coef * out.entropy;

    if let Some(g) = grads {
        // ∂logπ/∂μ = z/σ and ∂logπ/∂s = z² − 1
        let mut g_mean = Array2::<f64>::zeros(mean.raw_dim());
        for i in 0..mb.len() {
            for j in 0..act_dim {
                g_mean[[i, j]] = d_lp[i] * z_all[[i, j]] * inv_std[j];
            }
        }
        params.policy.backward(&policy_trace, g_mean.view(), &mut g.policy);
        for j in 0..act_dim {
            let raw = params.log_std[j];
            if raw > LOG_STD_MIN && raw < LOG_STD_MAX {
                let mut d = -entropy_coef;
                for i in 0..mb.len() {
                    let z = z_all[[i, j]];
                    d += d_lp[i] * (z * z - 1.0);
                }
                g.log_std[j] += d;
            }
        }
        let g_value = diff.mapv(|d| 2.0 * value_coef * d / b).insert_axis(Axis(1));
        params.value.backward(&value_trace, g_value.view(), &mut g.value);
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub updates: usize,
    pub samples: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
}

/// Stochastic-gradient epochs over `batch`. On a non-finite loss or
/// gradient, `params` and `optimizer` are left untouched.
pub fn ppo_update(
    params: &mut ActorCritic,
    optimizer: &mut Adam,
    batch: &PreparedBatch,
    config: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PpoStats, PolicyError> {
    let mut stats = PpoStats {
        samples: batch.len(),
        ..PpoStats::default()
    };
    if config.epochs == 0 || batch.is_empty() {
        return Ok(stats);
    }
    let mut working = params.clone();
    let mut opt = optimizer.clone();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.minibatch_size) {
            let mb = batch.select(chunk);
            let mut grads = working.zeros_like();
            let loss = ppo_loss(
                &working,
                &mb,
                config.clip_eps,
                config.value_coef,
                config.entropy_coef,
                Some(&mut grads),
            );
            if !loss.total.is_finite() {
                return Err(PolicyError::NonFinite {
                    what: format!(
                        "loss (policy {}, value {}, ratio {})",
                        loss.policy_loss, loss.value_loss, loss.mean_ratio
                    ),
                    phase: format!("PPO epoch {epoch}"),
                });
            }
            if !grads.is_finite() {
                return Err(PolicyError::NonFinite {
                    what: "gradient".into(),
                    phase: format!("PPO epoch {epoch}"),
                });
            }
            let norm = clip_grad_norm(&mut grads, config.max_grad_norm);
            opt.step(&mut working, &grads);
            stats.updates += 1;
            stats.policy_loss += loss.policy_loss;
            stats.value_loss += loss.value_loss;
            stats.entropy += loss.entropy;
            stats.mean_ratio += loss.mean_ratio;
            stats.clip_fraction += loss.clip_fraction;
            stats.approx_kl += loss.approx_kl;
            stats.grad_norm += norm;
        }
    }
    if !working.is_finite() {
        return Err(PolicyError::NonFinite {
            what: "parameters".into(),
            phase: "PPO update".into(),
        });
    }
    let n = stats.updates as f64;
    stats.policy_loss /= n;
    stats.value_loss /= n;
    stats.entropy /= n;
    stats.mean_ratio /= n;
    stats.clip_fraction /= n;
    stats.approx_kl /= n;
    stats.grad_norm /= n;
    *params = working;
    *optimizer = opt;
    Ok(stats)
}

/// Parameters, optimiser state and reward statistics of one PPO agent.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoAgentState {
    pub params: ActorCritic,
    pub optimizer: Adam,
    pub scaler: RewardScaler,
}

/// Learner for one or more independent PPO agents sharing a reward.
#[derive(Debug, Clone)]
pub struct PpoLearner {
    pub config: PpoConfig,
    pub agents: Vec<PpoAgentState>,
    rng: ChaCha8Rng,
}

impl PpoLearner {
    /// `action_dims[i]` is the output width of agent `i`.
    pub fn new(obs_dim: usize, action_dims: &[usize], config: PpoConfig, seed: u64) -> Result<Self, PolicyError> {
        config.validate()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        let agents = action_dims
            .iter()
            .map(|&a| PpoAgentState {
                params: ActorCritic::new(obs_dim, a, &config.hidden_sizes, config.initial_log_std, &mut init_rng),
                optimizer: Adam::new(config.lr),
                scaler: RewardScaler::default(),
            })
            .collect();
        Ok(Self {
            config,
            agents,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_b47c4),
        })
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        for a in &mut self.agents {
            a.optimizer.lr = lr;
        }
    }

    pub fn snapshot(&self) -> Vec<ActorCritic> {
        self.agents.iter().map(|a| a.params.clone()).collect()
    }

    /// One PPO update per agent using that agent's fragments. Either every
    /// agent commits its update or none does.
    pub fn update(&mut self, batch: &TrajectoryBatch) -> Result<Vec<PpoStats>, PolicyError> {
        let cfg = self.config.clone();
        let mut next = self.agents.clone();
        let mut rng = self.rng.clone();
        let mut stats = Vec::with_capacity(next.len());
        for (i, agent) in next.iter_mut().enumerate() {
            let scale = if cfg.normalize_rewards {
                agent.scaler.observe(batch.for_agent(i), cfg.gamma);
                agent.scaler.scale()
            } else {
                1.0
            };
            let prepared =
                PreparedBatch::from_fragments(batch.for_agent(i), &agent.params, scale, cfg.gamma, cfg.gae_lambda)?;
            stats.push(ppo_update(&mut agent.params, &mut agent.optimizer, &prepared, &cfg, &mut rng)?);
        }
        self.agents = next;
        self.rng = rng;
        Ok(stats)
    }
}
