//! Noise-free evaluation episodes.

use serde::{Deserialize, Serialize};

use crate::baseline::{baseline_action, BaselinePolicy};
use crate::env::{EpisodeMetrics, HvacEnv};

use super::{EnvSetup, RuntimeError};

/// Metrics averaged over evaluation episodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_step_reward: f64,
    /// Episode total including base load.
    pub energy_kwh: f64,
    /// Episode HVAC energy.
    pub hvac_kwh: f64,
    pub mean_violation: f64,
}

impl EvalSummary {
    pub fn from_episodes(runs: &[EpisodeMetrics]) -> Self {
        let n = runs.len().max(1) as f64;
        Self {
            episodes: runs.len(),
            mean_step_reward: runs.iter().map(EpisodeMetrics::mean_step_reward).sum::<f64>() / n,
            energy_kwh: runs.iter().map(|r| r.energy_kwh).sum::<f64>() / n,
            hvac_kwh: runs.iter().map(|r| r.hvac_kwh).sum::<f64>() / n,
            mean_violation: runs.iter().map(EpisodeMetrics::mean_violation).sum::<f64>() / n,
        }
    }
}

fn run_raw<F: FnMut(&[f64]) -> Vec<f64>>(env: &mut HvacEnv, seed: u64, policy: &mut F) -> Result<EpisodeMetrics, RuntimeError> {
    let mut features = env.reset(seed).features();
    let mut metrics = EpisodeMetrics::default();
    loop {
        let step = env.step_raw(&policy(&features))?;
        metrics.record(&step);
        if step.done {
            return Ok(metrics);
        }
        features = step.observation.features();
    }
}

/// One episode per seed with a raw-action policy over encoded features.
pub fn evaluate_actions<F>(setup: &EnvSetup, seeds: &[u64], mut policy: F) -> Result<EvalSummary, RuntimeError>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut env = setup.make_env()?;
    let runs = seeds
        .iter()
        .map(|&s| run_raw(&mut env, s, &mut policy))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalSummary::from_episodes(&runs))
}

pub fn evaluate_baseline(setup: &EnvSetup, seeds: &[u64], policy: &BaselinePolicy) -> Result<EvalSummary, RuntimeError> {
    policy.validate(&setup.config)?;
    let mut env = setup.make_env()?;
    let action = baseline_action(policy, &setup.config, env.num_zones());
    let runs = seeds
        .iter()
        .map(|&s| crate::env::run_episode(&mut env, s, |_| action.clone()).map_err(RuntimeError::from))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalSummary::from_episodes(&runs))
}
