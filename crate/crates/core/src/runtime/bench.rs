//! Rollout throughput for several worker counts.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::policy::gaussian::ActorCritic;
use crate::policy::multi_agent::agent_action_dims;
use crate::policy::HIDDEN_LAYERS;

use super::worker::{PoolOptions, WorkerPool};
use super::{EnvSetup, RuntimeError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSample {
    pub workers: usize,
    pub steps: u64,
    pub seconds: f64,
    pub steps_per_second: f64,
}

/// Times one synchronous collection of `steps_per_worker` steps per worker
/// with an untrained default-size policy. Thread start-up is excluded.
pub fn benchmark_throughput(
    setup: &EnvSetup,
    worker_counts: &[usize],
    steps_per_worker: usize,
    seed: u64,
) -> Result<Vec<ThroughputSample>, RuntimeError> {
    let env = setup.make_env()?;
    let dims = agent_action_dims(setup.config.control_mode, env.num_zones());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let snapshot: Arc<Vec<ActorCritic>> = Arc::new(
        dims.iter()
            .map(|&d| ActorCritic::new(env.observation_dim(), d, &HIDDEN_LAYERS, -0.5, &mut rng))
            .collect(),
    );
    let mut out = Vec::with_capacity(worker_counts.len());
    for &w in worker_counts {
        let mut pool = WorkerPool::spawn(setup, w, 1, seed, PoolOptions::default())?;
        let t0 = Instant::now();
        let rollout = pool.collect_rollouts(snapshot.clone(), &dims, steps_per_worker)?;
        let seconds = t0.elapsed().as_secs_f64();
        pool.shutdown();
        let steps = (rollout.batch.len() / dims.len()) as u64;
        out.push(ThroughputSample {
            workers: w,
            steps,
            seconds,
            steps_per_second: steps as f64 / seconds.max(1e-9),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;

    #[test]
    fn reports_one_sample_per_count() {
        let setup = EnvSetup::synthetic_toronto(EnvConfig {
            num_days: 1,
            start_day_of_year: 10,
            ..EnvConfig::default()
        });
        let s = benchmark_throughput(&setup, &[1, 2], 20, 0).unwrap();
        assert_eq!(s.iter().map(|x| (x.workers, x.steps)).collect::<Vec<_>>(), vec![(1, 20), (2, 40)]);
        assert!(s.iter().all(|x| x.steps_per_second > 0.0));
    }
}
