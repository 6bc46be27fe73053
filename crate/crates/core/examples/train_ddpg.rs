// Trains DDPG with per-zone setpoints. Workers stream transitions into the
// learner's replay buffer while updates run.
//
// ```text
// cargo run --release --example train_ddpg -- 50
// ```

use anyhow::Result;
use hvac_drl::config::ExperimentConfig;
use hvac_drl::env::ControlMode;
use hvac_drl::runtime::train::train_loop;
use hvac_drl::runtime::AlgorithmKind;

pub fn config(iterations: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::with_weather(concat!(env!("CARGO_MANIFEST_DIR"), "/data/toronto_synthetic.epw"));
    cfg.environment.start_day_of_year = 182;
    cfg.environment.num_days = 7;
    cfg.environment.control_mode = ControlMode::MultiZone;
    cfg.algorithm.kind = AlgorithmKind::Ddpg;
    cfg.algorithm.ddpg.gamma = 0.9;
    cfg.algorithm.ddpg.warmup_steps = 500;
    cfg.algorithm.ddpg.batch_size = 128;
    cfg.runtime.workers = 2;
    cfg.runtime.iterations = iterations;
    cfg.runtime.fragment_length = 200;
    cfg
}

pub fn train(cfg: &ExperimentConfig) -> Result<()> {
    let setup = cfg.training_setup()?;
    let outcome = train_loop(&setup, &mut |rec| {
        let m = rec.metrics.unwrap_or_default();
        println!(
            "iter {:3}  steps {:6}  updates {:5}  critic {:9.4}  reward/step {:8.4}  violation {:.4}",
            rec.iteration,
            rec.env_steps,
            rec.learner.get("updates").copied().unwrap_or(0.0),
            rec.learner.get("critic_loss").copied().unwrap_or(f64::NAN),
            m.mean_step_reward,
            m.mean_violation
        );
    })?;
    if let Some(f) = outcome.report.final_evaluation {
        println!(
            "learned {:.4} vs baseline {:.4} reward/step",
            f.learned.mean_step_reward, f.baseline.mean_step_reward
        );
    }
    Ok(())
}

pub fn run_example() -> Result<()> {
    let mut cfg = config(3);
    cfg.environment.num_days = 1;
    cfg.algorithm.ddpg.warmup_steps = 100;
    cfg.algorithm.ddpg.batch_size = 32;
    cfg.runtime.fragment_length = 64;
    train(&cfg)
}

fn main() -> Result<()> {
    let iterations = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    train(&config(iterations))
}
