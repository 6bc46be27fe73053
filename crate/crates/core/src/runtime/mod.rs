//! Rollout orchestration: lockstep simulators, worker pools, evaluation and
//! the training loop.

pub mod bench;
pub mod eval;
pub mod protocol;
pub mod train;
pub mod worker;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::building::{build_reference_topology, BuildingModel};
use crate::env::{EnvConfig, EnvError, HvacEnv};
use crate::policy::{DdpgConfig, PolicyError, PpoConfig};
use crate::weather::synthetic::{generate_epw, ClimateProfile};
use crate::weather::{parse_epw, WeatherSeries};

pub use eval::{evaluate_actions, evaluate_baseline, EvalSummary};
pub use protocol::{ProtocolError, SimEvent, SimRequest, SimulatorHandle};
pub use train::{train_loop, FinalEvaluation, IterationRecord, MetricSource, TrainedPolicy, TrainingReport};
pub use worker::{WorkerPool, WorkerState};

/// Seed of the synthetic Toronto year shipped with the crate.
pub const SYNTHETIC_WEATHER_SEED: u64 = 2021;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("worker {worker} failed: {message}")]
    Worker { worker: usize, message: String },
    #[error("learner aborted at iteration {iteration}: {source}")]
    Learner { iteration: usize, source: PolicyError },
}

/// Everything needed to build identical environments on any thread.
#[derive(Debug, Clone)]
pub struct EnvSetup {
    pub config: EnvConfig,
    pub weather: Arc<WeatherSeries>,
    pub model: Arc<BuildingModel>,
}

impl EnvSetup {
    pub fn new(config: EnvConfig, weather: Arc<WeatherSeries>, model: Arc<BuildingModel>) -> Self {
        Self { config, weather, model }
    }

    /// Reference building under the synthetic Toronto year.
    pub fn synthetic_toronto(config: EnvConfig) -> Self {
        let text = generate_epw(&ClimateProfile::toronto(), SYNTHETIC_WEATHER_SEED);
        let weather = parse_epw(&text).expect("generated weather parses");
        Self::new(config, Arc::new(weather), Arc::new(build_reference_topology()))
    }

    pub fn make_env(&self) -> Result<HvacEnv, EnvError> {
        HvacEnv::new(self.config.clone(), self.weather.clone(), self.model.clone())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    #[default]
    Ppo,
    Ddpg,
}

impl AlgorithmKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmKind::Ppo => "ppo",
            AlgorithmKind::Ddpg => "ddpg",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub kind: AlgorithmKind,
    pub ppo: PpoConfig,
    pub ddpg: DdpgConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub workers: usize,
    /// Environment streams driven by each worker.
    pub envs_per_worker: usize,
    pub iterations: usize,
    /// Steps collected per stream per iteration.
    pub fragment_length: usize,
    /// Optional cap on total environment steps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_env_steps: Option<u64>,
    pub seed: u64,
    /// Evaluate every this many iterations.
    pub eval_interval: usize,
    pub eval_seeds: Vec<u64>,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            workers: 4,
            envs_per_worker: 1,
            iterations: 200,
            fragment_length: 360,
            max_env_steps: None,
            seed: 0,
            eval_interval: 1,
            eval_seeds: vec![1000],
        }
    }
}

impl RuntimeConfig {
    pub fn validate(&self) -> Result<(), RuntimeError> {
        let bad = |m: &str| Err(RuntimeError::Config(m.into()));
        if self.workers == 0 {
            return bad("runtime.workers must be >= 1");
        }
        if self.envs_per_worker == 0 {
            return bad("runtime.envs_per_worker must be >= 1");
        }
        if self.fragment_length == 0 {
            return bad("runtime.fragment_length must be >= 1");
        }
        if self.eval_interval == 0 {
            return bad("runtime.eval_interval must be >= 1");
        }
        if self.eval_seeds.is_empty() {
            return bad("runtime.eval_seeds must not be empty");
        }
        Ok(())
    }

    pub fn streams(&self) -> usize {
        self.workers * self.envs_per_worker
    }
}
