//! The collect, update, broadcast loop.
//!
//! PPO collects synchronously: every stream contributes a fixed-length
//! fragment sampled from the same snapshot, fragments are sorted by stream,
//! and the update is a pure function of that batch. The result therefore
//! depends on the number of streams but not on how they are spread across
//! worker threads. DDPG collects asynchronously: workers stream transitions
//! into the learner-owned replay buffer while the learner keeps updating, so
//! its runs are not bit-reproducible.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::BaselinePolicy;
use crate::env::{ControlMode, EpisodeMetrics};
use crate::policy::checkpoint::{Checkpoint, CheckpointError};
use crate::policy::ddpg::{DdpgAgent, DdpgBatch};
use crate::policy::gaussian::deterministic_action;
use crate::policy::multi_agent::agent_action_dims;
use crate::policy::ppo::PpoStats;
use crate::policy::{PpoLearner, ReplayBuffer, Transition};

use super::eval::{evaluate_actions, evaluate_baseline, EvalSummary};
use super::worker::{EpisodeRecord, PoolOptions, WorkerMessage, WorkerPool};
use super::{AlgorithmConfig, AlgorithmKind, EnvSetup, RuntimeConfig, RuntimeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSource {
    /// Noise-free evaluation episodes on the evaluation seeds.
    Eval,
    /// Training episodes that finished during the iteration.
    Train,
}

impl MetricSource {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricSource::Eval => "eval",
            MetricSource::Train => "train",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Cumulative environment steps.
    pub env_steps: u64,
    pub source: MetricSource,
    /// Empty when `source` is `Train` and no episode finished.
    pub metrics: Option<EvalSummary>,
    pub wall_seconds: f64,
    pub learner: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalEvaluation {
    pub seeds: Vec<u64>,
    pub learned: EvalSummary,
    pub baseline: EvalSummary,
    /// `1 − learned / baseline` HVAC energy.
    pub hvac_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingReport {
    pub algorithm: String,
    pub control_mode: String,
    pub streams: usize,
    pub initial_evaluation: EvalSummary,
    pub iterations: Vec<IterationRecord>,
    pub final_evaluation: Option<FinalEvaluation>,
    pub total_env_steps: u64,
    pub wall_seconds: f64,
    pub max_reply_queue: usize,
    pub checkpoint_path: Option<String>,
}

#[derive(Debug, Clone)]
pub enum TrainedPolicy {
    Ppo(PpoLearner),
    Ddpg(DdpgAgent),
}

impl TrainedPolicy {
    /// Builds the untrained policy for `setup`.
    pub fn initial(
        env: &EnvSetup,
        algorithm: &AlgorithmConfig,
        seed: u64,
    ) -> Result<Self, RuntimeError> {
        let probe = env.make_env()?;
        let obs_dim = probe.observation_dim();
        let mode = env.config.control_mode;
        let learner_seed = seed ^ 0xA5A5_5A5A_0000_0001;
        let policy_err = |e| RuntimeError::Learner { iteration: 0, source: e };
        match algorithm.kind {
            AlgorithmKind::Ppo => {
                let dims = agent_action_dims(mode, probe.num_zones());
                Ok(Self::Ppo(PpoLearner::new(obs_dim, &dims, algorithm.ppo.clone(), learner_seed).map_err(policy_err)?))
            }
            AlgorithmKind::Ddpg => {
                if mode == ControlMode::MultiAgent {
                    return Err(RuntimeError::Config(
                        "control_mode multi_agent is only supported with algorithm.kind = \"ppo\"".into(),
                    ));
                }
                Ok(Self::Ddpg(
                    DdpgAgent::new(obs_dim, probe.action_dim(), algorithm.ddpg.clone(), learner_seed).map_err(policy_err)?,
                ))
            }
        }
    }

    /// Noise-free raw action for encoded features.
    pub fn act(&self, features: &[f64]) -> Vec<f64> {
        match self {
            TrainedPolicy::Ppo(l) => l
                .agents
                .iter()
                .flat_map(|a| deterministic_action(&a.params.policy.predict(features)))
                .collect(),
            TrainedPolicy::Ddpg(a) => a.act(features),
        }
    }

    pub fn checkpoint(&self, config_hash: [u8; 8]) -> Checkpoint {
        match self {
            TrainedPolicy::Ppo(l) => Checkpoint::from_ppo(l, config_hash),
            TrainedPolicy::Ddpg(a) => Checkpoint::from_ddpg(a, config_hash),
        }
    }

    pub fn restore(&mut self, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
        match self {
            TrainedPolicy::Ppo(l) => checkpoint.restore_ppo(l),
            TrainedPolicy::Ddpg(a) => checkpoint.restore_ddpg(a),
        }
    }

    pub fn evaluate(&self, env: &EnvSetup, seeds: &[u64]) -> Result<EvalSummary, RuntimeError> {
        evaluate_actions(env, seeds, |f| self.act(f))
    }
}

#[derive(Debug, Clone)]
pub struct TrainingSetup {
    pub env: EnvSetup,
    pub algorithm: AlgorithmConfig,
    pub runtime: RuntimeConfig,
    pub baseline: BaselinePolicy,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub report: TrainingReport,
    pub policy: TrainedPolicy,
}

/// A run that stopped early, with the state before the failing step.
#[derive(Debug)]
pub struct TrainingFailure {
    pub error: RuntimeError,
    pub report: TrainingReport,
    pub last_good: Option<TrainedPolicy>,
}

impl std::fmt::Display for TrainingFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for TrainingFailure {}

fn fail(error: RuntimeError, report: &TrainingReport, last_good: Option<TrainedPolicy>) -> TrainingFailure {
    TrainingFailure {
        error,
        report: report.clone(),
        last_good,
    }
}

fn train_summary(episodes: &[EpisodeRecord]) -> Option<EvalSummary> {
    if episodes.is_empty() {
        return None;
    }
    let runs: Vec<EpisodeMetrics> = episodes.iter().map(|e| e.metrics).collect();
    Some(EvalSummary::from_episodes(&runs))
}

fn ppo_stats_map(stats: &[PpoStats]) -> BTreeMap<String, f64> {
    let n = stats.len().max(1) as f64;
    let mean = |f: fn(&PpoStats) -> f64| stats.iter().map(f).sum::<f64>() / n;
    BTreeMap::from([
        ("updates".to_string(), stats.iter().map(|s| s.updates as f64).sum()),
        ("policy_loss".to_string(), mean(|s| s.policy_loss)),
        ("value_loss".to_string(), mean(|s| s.value_loss)),
        ("entropy".to_string(), mean(|s| s.entropy)),
        ("clip_fraction".to_string(), mean(|s| s.clip_fraction)),
        ("approx_kl".to_string(), mean(|s| s.approx_kl)),
    ])
}

/// Runs the configured number of iterations. `on_iteration` sees every
/// record as soon as it is complete.
pub fn train_loop(
    setup: &TrainingSetup,
    on_iteration: &mut dyn FnMut(&IterationRecord),
) -> Result<TrainingOutcome, TrainingFailure> {
    let start = Instant::now();
    let rt = &setup.runtime;
    let mut report = TrainingReport {
        algorithm: setup.algorithm.kind.as_str().to_string(),
        control_mode: setup.env.config.control_mode.as_str().to_string(),
        streams: rt.streams(),
        ..TrainingReport::default()
    };
    let init = (|| {
        rt.validate()?;
        setup.baseline.validate(&setup.env.config)?;
        TrainedPolicy::initial(&setup.env, &setup.algorithm, rt.seed)
    })();
    let mut policy = match init {
        Ok(p) => p,
        Err(e) => return Err(fail(e, &report, None)),
    };
    report.initial_evaluation = match policy.evaluate(&setup.env, &rt.eval_seeds) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, &report, Some(policy))),
    };
    let mut pool = if rt.iterations > 0 {
        match WorkerPool::spawn(&setup.env, rt.workers, rt.envs_per_worker, rt.seed, PoolOptions::default()) {
            Ok(p) => Some(p),
            Err(e) => return Err(fail(e, &report, Some(policy))),
        }
    } else {
        None
    };

    let mut ddpg_state = match &policy {
        TrainedPolicy::Ddpg(a) => match ReplayBuffer::new(a.config.buffer_size) {
            Ok(b) => Some((b, ChaCha8Rng::seed_from_u64(rt.seed ^ 0x0DD9_0000), 0.0f64)),
            Err(e) => return Err(fail(RuntimeError::Learner { iteration: 0, source: e }, &report, Some(policy))),
        },
        TrainedPolicy::Ppo(_) => None,
    };
    let dims = agent_action_dims(setup.env.config.control_mode, setup.env.model.num_zones());

    let mut env_steps = 0u64;
    let mut last_eval: Option<(usize, EvalSummary)> = None;
    for iteration in 1..=rt.iterations {
        if rt.max_env_steps.is_some_and(|m| env_steps >= m) {
            break;
        }
        let iter_start = Instant::now();
        let pool = pool.as_mut().expect("pool exists when iterating");
        let step = match &mut policy {
            TrainedPolicy::Ppo(learner) => {
                if learner.config.anneal_lr {
                    let remaining = 1.0 - (iteration - 1) as f64 / rt.iterations as f64;
                    learner.set_learning_rate(learner.config.lr * remaining);
                }
                ppo_iteration(learner, pool, &dims, rt.fragment_length, iteration)
            }
            TrainedPolicy::Ddpg(agent) => {
                let (buffer, rng, credit) = ddpg_state.as_mut().expect("replay exists for ddpg");
                ddpg_iteration(agent, pool, buffer, rng, credit, env_steps, rt.fragment_length, iteration)
            }
        };
        let (steps, episodes, learner) = match step {
            Ok(x) => x,
            Err(e) => return Err(fail(e, &report, Some(policy))),
        };
        env_steps += steps;
        let due = iteration % rt.eval_interval == 0 || iteration == rt.iterations;
        let (source, metrics) = if due {
            match policy.evaluate(&setup.env, &rt.eval_seeds) {
                Ok(s) => {
                    last_eval = Some((iteration, s));
                    (MetricSource::Eval, Some(s))
                }
                Err(e) => return Err(fail(e, &report, Some(policy))),
            }
        } else {
            (MetricSource::Train, train_summary(&episodes))
        };
        let record = IterationRecord {
            iteration,
            env_steps,
            source,
            metrics,
            wall_seconds: iter_start.elapsed().as_secs_f64(),
            learner,
        };
        on_iteration(&record);
        report.iterations.push(record);
    }
    report.total_env_steps = env_steps;
    if let Some(p) = pool {
        report.max_reply_queue = p.max_reply_queue();
        p.shutdown();
    }

    let ran = report.iterations.len();
    let learned = match last_eval {
        Some((it, s)) if it == ran => Ok(s),
        _ if ran == 0 => Ok(report.initial_evaluation),
        _ => policy.evaluate(&setup.env, &rt.eval_seeds),
    };
    let baseline = evaluate_baseline(&setup.env, &rt.eval_seeds, &setup.baseline);
    match (learned, baseline) {
        (Ok(learned), Ok(baseline)) => {
            report.final_evaluation = Some(FinalEvaluation {
                seeds: rt.eval_seeds.clone(),
                learned,
                baseline,
                hvac_reduction: if baseline.hvac_kwh > 0.0 {
                    1.0 - learned.hvac_kwh / baseline.hvac_kwh
                } else {
                    0.0
                },
            });
        }
        (Err(e), _) | (_, Err(e)) => return Err(fail(e, &report, Some(policy))),
    }
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(TrainingOutcome { report, policy })
}

type IterationResult = Result<(u64, Vec<EpisodeRecord>, BTreeMap<String, f64>), RuntimeError>;

fn ppo_iteration(
    learner: &mut PpoLearner,
    pool: &mut WorkerPool,
    dims: &[usize],
    fragment_length: usize,
    iteration: usize,
) -> IterationResult {
    let rollout = pool.collect_rollouts(Arc::new(learner.snapshot()), dims, fragment_length)?;
    let steps = (pool.num_streams() * fragment_length) as u64;
    let stats = learner
        .update(&rollout.batch)
        .map_err(|source| RuntimeError::Learner { iteration, source })?;
    Ok((steps, rollout.episodes, ppo_stats_map(&stats)))
}

#[allow(clippy::too_many_arguments)]
fn ddpg_iteration(
    agent: &mut DdpgAgent,
    pool: &mut WorkerPool,
    buffer: &mut ReplayBuffer<Transition>,
    rng: &mut ChaCha8Rng,
    credit: &mut f64,
    env_steps: u64,
    fragment_length: usize,
    iteration: usize,
) -> IterationResult {
    let cfg = agent.config.clone();
    let random = env_steps < cfg.warmup_steps as u64;
    pool.start_streaming(Arc::new(agent.actor.clone()), cfg.exploration_noise, random, fragment_length)?;
    let mut remaining = pool.workers.len();
    let mut steps = 0u64;
    let mut episodes = Vec::new();
    let (mut updates, mut critic_loss, mut actor_loss, mut mean_q) = (0usize, 0.0, 0.0, 0.0);
    while remaining > 0 {
        match pool.next_stream_message()? {
            WorkerMessage::Transition { transition, .. } => {
                buffer.push(transition);
                steps += 1;
                let ready = env_steps + steps >= cfg.warmup_steps as u64 && buffer.len() >= cfg.batch_size;
                if ready {
                    *credit += cfg.updates_per_step;
                    while *credit >= 1.0 {
                        *credit -= 1.0;
                        let sample = buffer
                            .sample(cfg.batch_size, rng)
                            .map_err(|source| RuntimeError::Learner { iteration, source })?;
                        let batch =
                            DdpgBatch::from_transitions(&sample).map_err(|source| RuntimeError::Learner { iteration, source })?;
                        let s = agent
                            .update(&batch)
                            .map_err(|source| RuntimeError::Learner { iteration, source })?;
                        updates += 1;
                        critic_loss += s.critic_loss;
                        actor_loss += s.actor_loss;
                        mean_q += s.mean_q;
                    }
                }
            }
            WorkerMessage::Episode { record, .. } => episodes.push(record),
            WorkerMessage::Done { .. } => remaining -= 1,
            other => {
                return Err(RuntimeError::Worker {
                    worker: usize::MAX,
                    message: format!("unexpected message {other:?}"),
                })
            }
        }
    }
    episodes.sort_by_key(|e| (e.stream, e.episode));
    let n = updates.max(1) as f64;
    let stats = BTreeMap::from([
        ("updates".to_string(), updates as f64),
        ("critic_loss".to_string(), critic_loss / n),
        ("actor_loss".to_string(), actor_loss / n),
        ("mean_q".to_string(), mean_q / n),
        ("replay_size".to_string(), buffer.len() as f64),
    ]);
    Ok((steps, episodes, stats))
}
