//! Rollout workers.
//!
//! Each worker thread drives one or more environment streams, and every
//! stream owns a simulator thread reached through the lockstep protocol.
//! Stream `s` is seeded with `base_seed + s`; with one stream per worker this
//! is `base_seed + worker_id`. Workers receive parameter snapshots by value
//! and send results over one unbounded reply channel whose peak length is
//! tracked.

use std::sync::Arc;
use std::thread::{self, JoinHandle};

use crossbeam_channel::{unbounded, Receiver, Sender};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{EpisodeMetrics, HvacEnv};
use crate::policy::gaussian::{policy_forward, sample_action, ActorCritic};
use crate::policy::multi_agent::merge_actions;
use crate::policy::nn::Mlp;
use crate::policy::{ddpg, Fragment, Transition, TrajectoryBatch};

use super::protocol::{Jitter, ProtocolError, ProtocolLog, SimEvent, SimulatorHandle};
use super::{EnvSetup, RuntimeError};

pub fn stream_seed(base_seed: u64, stream: usize) -> u64 {
    base_seed.wrapping_add(stream as u64)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Reset seed of episode `episode` on a stream.
pub fn episode_seed(stream_seed: u64, episode: u64) -> u64 {
    splitmix64(stream_seed ^ splitmix64(episode))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerState {
    Idle,
    Rolling,
    Stopped,
}

/// A finished training episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub stream: usize,
    pub episode: u64,
    pub metrics: EpisodeMetrics,
}

#[derive(Debug, Clone)]
pub enum WorkerCommand {
    /// Sample from the Gaussian policies for `steps` steps on every stream.
    Ppo { snapshot: Arc<Vec<ActorCritic>>, dims: Vec<usize>, steps: usize },
    /// Act with actor plus noise (or uniformly at random) and stream each
    /// transition back as it happens.
    Ddpg { actor: Arc<Mlp>, noise: f64, random: bool, steps: usize },
    Stop,
}

#[derive(Debug)]
pub enum WorkerMessage {
    Fragments {
        worker: usize,
        fragments: Vec<Fragment>,
        episodes: Vec<EpisodeRecord>,
    },
    Transition {
        worker: usize,
        stream: usize,
        transition: Transition,
    },
    Episode {
        worker: usize,
        record: EpisodeRecord,
    },
    Done {
        worker: usize,
    },
    Failed {
        worker: usize,
        error: String,
    },
}

/// Learner-side view of a worker.
#[derive(Debug)]
pub struct WorkerHandle {
    pub id: usize,
    /// Seed of the worker's first stream.
    pub seed: u64,
    pub streams: Vec<usize>,
    pub state: WorkerState,
    commands: Sender<WorkerCommand>,
    thread: Option<JoinHandle<()>>,
}

struct Stream {
    id: usize,
    seed: u64,
    sim: SimulatorHandle,
    rng: ChaCha8Rng,
    episode: u64,
    features: Vec<f64>,
    metrics: EpisodeMetrics,
    global_step: u64,
}

struct StepResult {
    reward: f64,
    next_features: Vec<f64>,
    done: bool,
    finished: Option<EpisodeRecord>,
}

impl Stream {
    fn start(id: usize, seed: u64, env: HvacEnv, log: Option<ProtocolLog>, jitter: Option<Jitter>) -> Result<Self, ProtocolError> {
        let mut sim = SimulatorHandle::spawn(id, env, log, jitter);
        let features = sim.reset(episode_seed(seed, 0))?;
        Ok(Self {
            id,
            seed,
            sim,
            rng: ChaCha8Rng::seed_from_u64(seed),
            episode: 0,
            features,
            metrics: EpisodeMetrics::default(),
            global_step: 0,
        })
    }

    fn step(&mut self, action: Vec<f64>) -> Result<StepResult, ProtocolError> {
        self.global_step += 1;
        match self.sim.act(action)? {
            SimEvent::Observation { features, outcome, .. } => {
                let outcome = outcome.expect("observations after a step carry an outcome");
                self.metrics.record_parts(&outcome.reward, &outcome.energy);
                self.features = features.clone();
                Ok(StepResult {
                    reward: outcome.reward.reward,
                    next_features: features,
                    done: false,
                    finished: None,
                })
            }
            SimEvent::Terminal { features, outcome, .. } => {
                self.metrics.record_parts(&outcome.reward, &outcome.energy);
                let record = EpisodeRecord {
                    stream: self.id,
                    episode: self.episode,
                    metrics: std::mem::take(&mut self.metrics),
                };
                self.episode += 1;
                self.features = self.sim.reset(episode_seed(self.seed, self.episode))?;
                Ok(StepResult {
                    reward: outcome.reward.reward,
                    next_features: features,
                    done: true,
                    finished: Some(record),
                })
            }
            SimEvent::Fault(e) => Err(e),
        }
    }
}

fn worker_loop(
    worker: usize,
    mut streams: Vec<Stream>,
    commands: Receiver<WorkerCommand>,
    replies: Sender<WorkerMessage>,
) {
    while let Ok(cmd) = commands.recv() {
        let result = match cmd {
            WorkerCommand::Stop => break,
            WorkerCommand::Ppo { snapshot, dims, steps } => {
                run_ppo(worker, &mut streams, &snapshot, &dims, steps).map(|(fragments, episodes)| {
                    vec![WorkerMessage::Fragments { worker, fragments, episodes }]
                })
            }
            WorkerCommand::Ddpg { actor, noise, random, steps } => {
                run_ddpg(worker, &mut streams, &actor, noise, random, steps, &replies).map(|()| vec![WorkerMessage::Done { worker }])
            }
        };
        let msgs = match result {
            Ok(m) => m,
            Err(e) => vec![WorkerMessage::Failed { worker, error: e.to_string() }],
        };
        let failed = matches!(msgs.last(), Some(WorkerMessage::Failed { .. }));
        for m in msgs {
            if replies.send(m).is_err() {
                return;
            }
        }
        if failed {
            return;
        }
    }
    for s in streams {
        let _ = s.sim.stop();
    }
}

fn run_ppo(
    worker: usize,
    streams: &mut [Stream],
    snapshot: &[ActorCritic],
    dims: &[usize],
    steps: usize,
) -> Result<(Vec<Fragment>, Vec<EpisodeRecord>), ProtocolError> {
    let mut fragments = Vec::new();
    let mut episodes = Vec::new();
    for s in streams.iter_mut() {
        let mut per_agent: Vec<Fragment> = (0..snapshot.len())
            .map(|agent| Fragment {
                stream: s.id,
                agent,
                worker,
                first_step: s.global_step,
                transitions: Vec::with_capacity(steps),
            })
            .collect();
        for _ in 0..steps {
            let obs = s.features.clone();
            let mut parts = Vec::with_capacity(snapshot.len());
            let mut partial = Vec::with_capacity(snapshot.len());
            for params in snapshot {
                let out = policy_forward(params, &obs).map_err(|e| ProtocolError::Environment {
                    worker,
                    message: e.to_string(),
                })?;
                let sample = sample_action(&out.mean, &out.log_std, &mut s.rng);
                parts.push(sample.action.clone());
                partial.push((sample, out.value));
            }
            let raw = merge_actions(&parts, dims).map_err(|e| ProtocolError::Environment {
                worker,
                message: e.to_string(),
            })?;
            let r = s.step(raw)?;
            for (frag, (sample, value)) in per_agent.iter_mut().zip(partial) {
                frag.transitions.push(Transition {
                    obs: obs.clone(),
                    raw_action: sample.action,
                    pre_squash: sample.pre_squash,
                    log_prob: sample.log_prob,
                    reward: r.reward,
                    value,
                    next_obs: r.next_features.clone(),
                    done: r.done,
                });
            }
            episodes.extend(r.finished);
        }
        fragments.extend(per_agent);
    }
    Ok((fragments, episodes))
}

fn run_ddpg(
    worker: usize,
    streams: &mut [Stream],
    actor: &Mlp,
    noise: f64,
    random: bool,
    steps: usize,
    replies: &Sender<WorkerMessage>,
) -> Result<(), ProtocolError> {
    let dim = actor.output_dim();
    for _ in 0..steps {
        for s in streams.iter_mut() {
            let obs = s.features.clone();
            let action: Vec<f64> = if random {
                (0..dim).map(|_| s.rng.gen_range(-1.0..=1.0)).collect()
            } else {
                ddpg::explore_with(actor, &obs, noise, &mut s.rng)
            };
            let r = s.step(action.clone())?;
            let transition = Transition {
                obs,
                raw_action: action,
                pre_squash: Vec::new(),
                log_prob: 0.0,
                reward: r.reward,
                value: 0.0,
                next_obs: r.next_features,
                done: r.done,
            };
            let sent = replies.send(WorkerMessage::Transition { worker, stream: s.id, transition });
            let sent = sent.and_then(|()| match r.finished {
                Some(record) => replies.send(WorkerMessage::Episode { worker, record }),
                None => Ok(()),
            });
            if sent.is_err() {
                return Err(ProtocolError::Disconnected { worker });
            }
        }
    }
    Ok(())
}

/// Result of one synchronous collection round.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub batch: TrajectoryBatch,
    pub episodes: Vec<EpisodeRecord>,
}

/// Worker threads plus the shared reply channel.
#[derive(Debug)]
pub struct WorkerPool {
    pub workers: Vec<WorkerHandle>,
    replies: Receiver<WorkerMessage>,
    max_queue: usize,
}

#[derive(Debug, Clone, Default)]
pub struct PoolOptions {
    pub log: Option<ProtocolLog>,
    pub jitter: Option<Jitter>,
}

impl WorkerPool {
    pub fn spawn(
        setup: &EnvSetup,
        workers: usize,
        envs_per_worker: usize,
        base_seed: u64,
        options: PoolOptions,
    ) -> Result<Self, RuntimeError> {
        if workers == 0 || envs_per_worker == 0 {
            return Err(RuntimeError::Config("workers and envs_per_worker must be >= 1".into()));
        }
        let (reply_tx, reply_rx) = unbounded();
        let mut handles = Vec::with_capacity(workers);
        for w in 0..workers {
            let ids: Vec<usize> = (w * envs_per_worker..(w + 1) * envs_per_worker).collect();
            let mut streams = Vec::with_capacity(ids.len());
            for &id in &ids {
                let env = setup.make_env()?;
                let seed = stream_seed(base_seed, id);
                streams.push(
                    Stream::start(id, seed, env, options.log.clone(), options.jitter)
                        .map_err(|e| RuntimeError::Worker { worker: w, message: e.to_string() })?,
                );
            }
            let (cmd_tx, cmd_rx) = unbounded();
            let replies = reply_tx.clone();
            let thread = thread::Builder::new()
                .name(format!("worker-{w}"))
                .spawn(move || worker_loop(w, streams, cmd_rx, replies))
                .expect("spawn worker thread");
            handles.push(WorkerHandle {
                id: w,
                seed: stream_seed(base_seed, ids[0]),
                streams: ids,
                state: WorkerState::Idle,
                commands: cmd_tx,
                thread: Some(thread),
            });
        }
        Ok(Self {
            workers: handles,
            replies: reply_rx,
            max_queue: 0,
        })
    }

    pub fn num_streams(&self) -> usize {
        self.workers.iter().map(|w| w.streams.len()).sum()
    }

    /// Largest number of replies observed waiting in the channel.
    pub fn max_reply_queue(&self) -> usize {
        self.max_queue
    }

    fn broadcast(&mut self, make: impl Fn() -> WorkerCommand) -> Result<(), RuntimeError> {
        for w in &mut self.workers {
            w.commands.send(make()).map_err(|_| RuntimeError::Worker {
                worker: w.id,
                message: "worker thread is gone".into(),
            })?;
            w.state = WorkerState::Rolling;
        }
        Ok(())
    }

    fn next_reply(&mut self) -> Result<WorkerMessage, RuntimeError> {
        self.max_queue = self.max_queue.max(self.replies.len());
        self.replies
            .recv()
            .map_err(|_| RuntimeError::Worker { worker: usize::MAX, message: "all workers disconnected".into() })
    }

    fn fail(&mut self, worker: usize, error: String) -> RuntimeError {
        if let Some(w) = self.workers.get_mut(worker) {
            w.state = WorkerState::Stopped;
        }
        RuntimeError::Worker { worker, message: error }
    }

    /// Synchronous PPO collection: every stream contributes exactly
    /// `steps_per_stream` transitions per agent using `snapshot`.
    pub fn collect_rollouts(
        &mut self,
        snapshot: Arc<Vec<ActorCritic>>,
        dims: &[usize],
        steps_per_stream: usize,
    ) -> Result<Rollout, RuntimeError> {
        let dims = dims.to_vec();
        self.broadcast(|| WorkerCommand::Ppo {
            snapshot: snapshot.clone(),
            dims: dims.clone(),
            steps: steps_per_stream,
        })?;
        let mut batch = TrajectoryBatch::default();
        let mut episodes = Vec::new();
        let mut pending = self.workers.len();
        while pending > 0 {
            match self.next_reply()? {
                WorkerMessage::Fragments { worker, fragments, episodes: eps } => {
                    self.workers[worker].state = WorkerState::Idle;
                    batch.fragments.extend(fragments);
                    episodes.extend(eps);
                    pending -= 1;
                }
                WorkerMessage::Failed { worker, error } => return Err(self.fail(worker, error)),
                other => {
                    return Err(RuntimeError::Worker {
                        worker: usize::MAX,
                        message: format!("unexpected reply {other:?}"),
                    })
                }
            }
        }
        batch.sort();
        episodes.sort_by_key(|e| (e.stream, e.episode));
        Ok(Rollout { batch, episodes })
    }

    /// Starts asynchronous DDPG collection; results are read with
    /// [`WorkerPool::next_stream_message`].
    pub fn start_streaming(&mut self, actor: Arc<Mlp>, noise: f64, random: bool, steps: usize) -> Result<(), RuntimeError> {
        self.broadcast(|| WorkerCommand::Ddpg {
            actor: actor.clone(),
            noise,
            random,
            steps,
        })
    }

    pub fn next_stream_message(&mut self) -> Result<WorkerMessage, RuntimeError> {
        let m = self.next_reply()?;
        match m {
            WorkerMessage::Failed { worker, error } => Err(self.fail(worker, error)),
            WorkerMessage::Done { worker } => {
                self.workers[worker].state = WorkerState::Idle;
                Ok(WorkerMessage::Done { worker })
            }
            other => Ok(other),
        }
    }

    pub fn shutdown(mut self) {
        self.stop_all();
    }

    fn stop_all(&mut self) {
        for w in &mut self.workers {
            let _ = w.commands.send(WorkerCommand::Stop);
        }
        // drain so that no worker blocks on a reply
        while self.replies.try_recv().is_ok() {}
        for w in &mut self.workers {
            if let Some(t) = w.thread.take() {
                let _ = t.join();
            }
            w.state = WorkerState::Stopped;
        }
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        self.stop_all();
    }
}
