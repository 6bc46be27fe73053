//! Policies and learners.
//!
//! * [`gaussian`]: tanh-squashed diagonal Gaussian actor with a value network.
//! * [`ppo`]: clipped-surrogate PPO with GAE.
//! * [`ddpg`]: deterministic actor-critic with target networks, fed from a
//!   [`replay::ReplayBuffer`].
//! * [`multi_agent`]: routing between one shared observation and the
//!   heating/cooling agents.

pub mod checkpoint;
pub mod ddpg;
pub mod gaussian;
pub mod multi_agent;
pub mod nn;
pub mod ppo;
pub mod replay;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use ddpg::{DdpgAgent, DdpgConfig};
pub use gaussian::ActorCritic;
pub use nn::{Adam, Mlp, Parameters};
pub use ppo::{PpoConfig, PpoLearner};
pub use replay::ReplayBuffer;

/// Default hidden layer widths.
pub const HIDDEN_LAYERS: [usize; 2] = [128, 128];

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {what} during {phase}; update aborted")]
    NonFinite { what: String, phase: String },
    #[error("replay buffer holds {available} transitions, {requested} requested")]
    InsufficientSamples { available: usize, requested: usize },
    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),
}

/// One environment step as seen by a single agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Squashed action in `(-1, 1)^k` (this agent's slice).
    pub raw_action: Vec<f64>,
    /// Gaussian sample before the tanh squash; empty for deterministic actors.
    pub pre_squash: Vec<f64>,
    pub log_prob: f64,
    pub reward: f64,
    /// Value estimate of `obs` under the behaviour policy.
    pub value: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Consecutive transitions from one environment stream and one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub stream: usize,
    pub agent: usize,
    pub worker: usize,
    /// Global step counter of the stream at the first transition.
    pub first_step: u64,
    pub transitions: Vec<Transition>,
}

/// Fragments gathered during one collection round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBatch {
    pub fragments: Vec<Fragment>,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.fragments.iter().map(|f| f.transitions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Orders fragments by (stream, agent, first_step) so that batch content
    /// is independent of worker scheduling.
    pub fn sort(&mut self) {
        self.fragments
            .sort_by_key(|f| (f.stream, f.agent, f.first_step));
    }

    pub fn for_agent(&self, agent: usize) -> impl Iterator<Item = &Fragment> {
        self.fragments.iter().filter(move |f| f.agent == agent)
    }
}
