// Trains a centralized PPO controller on a short July window and compares
// it with the fixed-setpoint baseline.
//
// ```text
// cargo run --release --example train_ppo -- 200 30
// ```
// trains for 200 iterations on 30-day episodes (the default is a quick run).

use anyhow::Result;
use hvac_drl::config::ExperimentConfig;
use hvac_drl::env::ControlMode;
use hvac_drl::runtime::train::{train_loop, TrainingOutcome};

pub fn config(iterations: usize, num_days: u32) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::with_weather(concat!(env!("CARGO_MANIFEST_DIR"), "/data/toronto_synthetic.epw"));
    cfg.environment.start_day_of_year = 182;
    cfg.environment.num_days = num_days;
    cfg.environment.control_mode = ControlMode::Centralized;
    cfg.algorithm.ppo.gamma = 0.9;
    cfg.algorithm.ppo.lr = 1e-3;
    cfg.runtime.iterations = iterations;
    cfg.runtime.workers = 4;
    cfg.runtime.fragment_length = if num_days >= 4 { 360 } else { 96 };
    cfg.runtime.eval_interval = (iterations / 10).max(1);
    cfg
}

pub fn train(cfg: &ExperimentConfig) -> Result<TrainingOutcome> {
    let setup = cfg.training_setup()?;
    let outcome = train_loop(&setup, &mut |rec| {
        if let (hvac_drl::runtime::train::MetricSource::Eval, Some(m)) = (rec.source, rec.metrics) {
            println!(
                "iter {:4}  steps {:7}  reward/step {:8.4}  hvac {:7.1} kWh  violation {:.4} C",
                rec.iteration, rec.env_steps, m.mean_step_reward, m.hvac_kwh, m.mean_violation
            );
        }
    })?;
    if let Some(f) = &outcome.report.final_evaluation {
        println!(
            "learned  reward/step {:.4}  hvac {:.1} kWh  violation {:.4} C",
            f.learned.mean_step_reward, f.learned.hvac_kwh, f.learned.mean_violation
        );
        println!(
            "baseline reward/step {:.4}  hvac {:.1} kWh  violation {:.4} C  (hvac {:+.1}%)",
            f.baseline.mean_step_reward,
            f.baseline.hvac_kwh,
            f.baseline.mean_violation,
            -100.0 * f.hvac_reduction
        );
    }
    Ok(outcome)
}

pub fn run_example() -> Result<()> {
    train(&config(4, 2))?;
    Ok(())
}

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4);
    let days = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2);
    train(&config(iterations, days))?;
    Ok(())
}
