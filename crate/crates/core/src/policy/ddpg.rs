//! Deterministic policy gradient with target networks.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::nn::{clip_grad_norm, polyak_update, Adam, Mlp, OutputActivation, Parameters};
use super::{PolicyError, Transition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpgConfig {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    /// Standard deviation of the Gaussian exploration noise on raw actions.
    pub exploration_noise: f64,
    /// Multiplies rewards inside the critic target.
    pub reward_scale: f64,
    /// Transitions collected before the first gradient step.
    pub warmup_steps: usize,
    /// Gradient steps per collected transition.
    pub updates_per_step: f64,
    pub max_grad_norm: f64,
    pub hidden_sizes: Vec<usize>,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            buffer_size: 1_000_000,
            batch_size: 256,
            exploration_noise: 0.1,
            reward_scale: 0.1,
            warmup_steps: 1000,
            updates_per_step: 0.25,
            max_grad_norm: 0.0,
            hidden_sizes: super::HIDDEN_LAYERS.to_vec(),
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: String| Err(PolicyError::Hyperparameter(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("actor_lr and critic_lr must be > 0".into());
        }
        if self.buffer_size == 0 || self.batch_size == 0 {
            return bad("buffer_size and batch_size must be >= 1".into());
        }
        if self.batch_size > self.buffer_size {
            return bad("batch_size must not exceed buffer_size".into());
        }
        if !(self.exploration_noise >= 0.0 && self.reward_scale > 0.0 && self.updates_per_step > 0.0) {
            return bad("exploration_noise must be >= 0, reward_scale and updates_per_step > 0".into());
        }
        if self.max_grad_norm < 0.0 {
            return bad("max_grad_norm must be >= 0".into());
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return bad("hidden_sizes must list at least one positive width".into());
        }
        Ok(())
    }
}

/// Training minibatch in matrix form.
#[derive(Debug, Clone, PartialEq)]
pub struct DdpgBatch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_obs: Array2<f64>,
    pub dones: Array1<f64>,
}

impl DdpgBatch {
    pub fn from_transitions(items: &[&Transition]) -> Result<Self, PolicyError> {
        let n = items.len();
        let Some(first) = items.first() else {
            return Err(PolicyError::Shape("empty batch".into()));
        };
        let (od, ad) = (first.obs.len(), first.raw_action.len());
        let mut obs = Vec::with_capacity(n * od);
        let mut actions = Vec::with_capacity(n * ad);
        let mut next_obs = Vec::with_capacity(n * od);
        for t in items {
            if t.obs.len() != od || t.next_obs.len() != od || t.raw_action.len() != ad {
                return Err(PolicyError::Shape("inconsistent transition sizes".into()));
            }
            obs.extend_from_slice(&t.obs);
            actions.extend_from_slice(&t.raw_action);
            next_obs.extend_from_slice(&t.next_obs);
        }
        Ok(Self {
            obs: Array2::from_shape_vec((n, od), obs).expect("sizes checked"),
            actions: Array2::from_shape_vec((n, ad), actions).expect("sizes checked"),
            rewards: items.iter().map(|t| t.reward).collect(),
            next_obs: Array2::from_shape_vec((n, od), next_obs).expect("sizes checked"),
            dones: items.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DdpgStats {
    pub updates: usize,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdpgAgent {
    pub config: DdpgConfig,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

impl DdpgAgent {
    pub fn new(obs_dim: usize, action_dim: usize, config: DdpgConfig, seed: u64) -> Result<Self, PolicyError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend_from_slice(&config.hidden_sizes);
        actor_sizes.push(action_dim);
        let mut critic_sizes = vec![obs_dim + action_dim];
        critic_sizes.extend_from_slice(&config.hidden_sizes);
        critic_sizes.push(1);
        let actor = Mlp::new(&actor_sizes, OutputActivation::Tanh, 0.1, &mut rng);
        let critic = Mlp::new(&critic_sizes, OutputActivation::Identity, 0.1, &mut rng);
        Ok(Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            actor_opt: Adam::new(config.actor_lr),
            critic_opt: Adam::new(config.critic_lr),
            config,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn act(&self, obs: &[f64]) -> Vec<f64> {
        self.actor.predict(obs)
    }

    /// Actor output plus Gaussian noise, clipped to `[-1, 1]`.
    pub fn explore<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Vec<f64> {
        explore_with(&self.actor, obs, self.config.exploration_noise, rng)
    }

    /// Mean-squared Bellman error against the target networks; accumulates
    /// critic gradients into `grads` when given.
    pub fn critic_loss(&self, batch: &DdpgBatch, grads: Option<&mut Mlp>) -> f64 {
        let b = batch.len() as f64;
        let next_actions = self.actor_target.forward(batch.next_obs.view());
        let next_in = concatenate![Axis(1), batch.next_obs, *next_actions.output()];
        let next_q = self.critic_target.forward(next_in.view());
        let target = &batch.rewards * self.config.reward_scale
            + &((1.0 - &batch.dones) * &next_q.output().column(0) * self.config.gamma);
        let input = concatenate![Axis(1), batch.obs, batch.actions];
        let trace = self.critic.forward(input.view());
        let diff = &trace.output().column(0) - &target;
        let loss = diff.mapv(|d| d * d).sum() / b;
        if let Some(g) = grads {
            let g_out = diff.mapv(|d| 2.0 * d / b).insert_axis(Axis(1));
            self.critic.backward(&trace, g_out.view(), g);
        }
        loss
    }

    /// `−mean Q(s, μ(s))`; accumulates actor gradients into `grads` when given.
    pub fn actor_loss(&self, batch: &DdpgBatch, grads: Option<&mut Mlp>) -> (f64, f64) {
        let b = batch.len() as f64;
        let actor_trace = self.actor.forward(batch.obs.view());
        let input = concatenate![Axis(1), batch.obs, *actor_trace.output()];
        let critic_trace = self.critic.forward(input.view());
        let mean_q = critic_trace.output().sum() / b;
        if let Some(g) = grads {
            let g_out = Array2::from_elem((batch.len(), 1), -1.0 / b);
            let mut scratch = self.critic.zeros_like();
            let g_in = self.critic.backward(&critic_trace, g_out.view(), &mut scratch);
            let od = self.obs_dim();
            let g_action = g_in.slice(s![.., od..]).to_owned();
            self.actor.backward(&actor_trace, g_action.view(), g);
        }
        (-mean_q, mean_q)
    }

    /// Critic step, actor step, then soft target updates. A non-finite loss
    /// or gradient leaves the agent unchanged.
    pub fn update(&mut self, batch: &DdpgBatch) -> Result<DdpgStats, PolicyError> {
        let mut next = self.clone();
        let mut cg = next.critic.zeros_like();
        let critic_loss = next.critic_loss(batch, Some(&mut cg));
        check_finite(critic_loss, &cg, "critic")?;
        clip_grad_norm(&mut cg, next.config.max_grad_norm);
        next.critic_opt.step(&mut next.critic, &cg);

        let mut ag = next.actor.zeros_like();
        let (actor_loss, mean_q) = next.actor_loss(batch, Some(&mut ag));
        check_finite(actor_loss, &ag, "actor")?;
        clip_grad_norm(&mut ag, next.config.max_grad_norm);
        next.actor_opt.step(&mut next.actor, &ag);

        let tau = next.config.tau;
        polyak_update(&mut next.critic_target, &next.critic, tau);
        polyak_update(&mut next.actor_target, &next.actor, tau);
        *self = next;
        Ok(DdpgStats {
            updates: 1,
            critic_loss,
            actor_loss,
            mean_q,
        })
    }
}

pub fn explore_with<R: Rng + ?Sized>(actor: &Mlp, obs: &[f64], noise: f64, rng: &mut R) -> Vec<f64> {
    actor
        .predict(obs)
        .into_iter()
        .map(|a| {
            let z: f64 = rng.sample(StandardNormal);
            (a + noise * z).clamp(-1.0, 1.0)
        })
        .collect()
}

fn check_finite(loss: f64, grads: &Mlp, what: &str) -> Result<(), PolicyError> {
    if loss.is_finite() && grads.is_finite() {
        Ok(())
    } else {
        Err(PolicyError::NonFinite {
            what: format!("{what} loss or gradient"),
            phase: "DDPG update".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_agent(gamma: f64) -> DdpgAgent {
        let cfg = DdpgConfig {
            gamma,
            hidden_sizes: vec![4],
            batch_size: 3,
            buffer_size: 10,
            ..DdpgConfig::default()
        };
        DdpgAgent::new(2, 1, cfg, 3).unwrap()
    }

    fn tiny_batch(reward: f64) -> DdpgBatch {
        DdpgBatch {
            obs: ndarray::array![[0.3, -0.8], [1.1, 0.4], [-0.5, 0.2]],
            actions: ndarray::array![[0.5], [-0.2], [0.9]],
            rewards: ndarray::array![reward, -reward, 0.5 * reward],
            next_obs: ndarray::array![[0.2, -0.7], [1.0, 0.5], [-0.4, 0.1]],
            dones: ndarray::array![0.0, 0.0, 1.0],
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        if d < 1e-9 {
            0.0
        } else {
            d / a.abs().max(b.abs())
        }
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let mut agent = tiny_agent(0.9);
        // targets differ from the online nets so the target path is exercised
        agent.critic_target.scale(0.5);
        let batch = tiny_batch(1.0);
        let mut g = agent.critic.zeros_like();
        agent.critic_loss(&batch, Some(&mut g));
        let h = 1e-5;
        for i in 0..agent.critic.num_params() {
            let o = agent.critic.get_flat(i);
            agent.critic.set_flat(i, o + h);
            let up = agent.critic_loss(&batch, None);
            agent.critic.set_flat(i, o - h);
            let down = agent.critic_loss(&batch, None);
            agent.critic.set_flat(i, o);
            assert!(rel(g.get_flat(i), (up - down) / (2.0 * h)) < 1e-4, "param {i}");
        }
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let mut agent = tiny_agent(0.9);
        let batch = tiny_batch(1.0);
        let mut g = agent.actor.zeros_like();
        agent.actor_loss(&batch, Some(&mut g));
        let h = 1e-5;
        for i in 0..agent.actor.num_params() {
            let o = agent.actor.get_flat(i);
            agent.actor.set_flat(i, o + h);
            let up = agent.actor_loss(&batch, None).0;
            agent.actor.set_flat(i, o - h);
            let down = agent.actor_loss(&batch, None).0;
            agent.actor.set_flat(i, o);
            assert!(rel(g.get_flat(i), (up - down) / (2.0 * h)) < 1e-4, "param {i}");
        }
    }

    #[test]
    fn unit_tau_copies_online_networks() {
        let mut agent = tiny_agent(0.9);
        agent.config.tau = 1.0;
        agent.update(&tiny_batch(1.0)).unwrap();
        assert_eq!(agent.actor_target, agent.actor);
        assert_eq!(agent.critic_target, agent.critic);
    }

    #[test]
    fn critic_loss_falls_with_zero_gamma_and_reward() {
        let mut agent = tiny_agent(0.0);
        let batch = tiny_batch(0.0);
        let before = agent.critic_loss(&batch, None);
        for _ in 0..200 {
            agent.update(&batch).unwrap();
        }
        let after = agent.critic_loss(&batch, None);
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn non_finite_batch_leaves_agent_unchanged() {
        let mut agent = tiny_agent(0.9);
        let before = agent.clone();
        let mut batch = tiny_batch(1.0);
        batch.rewards[1] = f64::INFINITY;
        assert!(matches!(agent.update(&batch), Err(PolicyError::NonFinite { .. })));
        assert_eq!(agent, before);
    }

    #[test]
    fn exploration_stays_in_range() {
        let agent = tiny_agent(0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            let a = explore_with(&agent.actor, &[3.0, -2.0], 2.0, &mut rng);
            assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn batch_size_above_buffer_rejected() {
        let cfg = DdpgConfig {
            batch_size: 20,
            buffer_size: 10,
            ..DdpgConfig::default()
        };
        assert!(DdpgAgent::new(2, 1, cfg, 0).is_err());
    }
}
