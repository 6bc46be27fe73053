// Compares a single per-zone PPO agent with two cooperating agents (one
// owns all heating setpoints, the other all cooling setpoints) sharing the
// building reward.
//
// ```text
// cargo run --release --example multi_agent -- 200 30
// ```

use anyhow::Result;
use hvac_drl::config::ExperimentConfig;
use hvac_drl::env::ControlMode;
use hvac_drl::policy::multi_agent::agent_action_dims;
use hvac_drl::runtime::eval::EvalSummary;
use hvac_drl::runtime::train::train_loop;

pub fn run_mode(mode: ControlMode, iterations: usize, num_days: u32) -> Result<EvalSummary> {
    let mut cfg = ExperimentConfig::with_weather(concat!(env!("CARGO_MANIFEST_DIR"), "/data/toronto_synthetic.epw"));
    cfg.environment.start_day_of_year = 182;
    cfg.environment.num_days = num_days;
    cfg.environment.control_mode = mode;
    cfg.algorithm.ppo.gamma = 0.9;
    cfg.algorithm.ppo.lr = 1e-3;
    cfg.runtime.iterations = iterations;
    cfg.runtime.fragment_length = if num_days >= 4 { 360 } else { 96 };
    cfg.runtime.eval_interval = iterations.max(1);
    let setup = cfg.training_setup()?;
    println!("{}: agent action widths {:?}", mode.as_str(), agent_action_dims(mode, 15));
    let outcome = train_loop(&setup, &mut |_| {})?;
    Ok(outcome.report.final_evaluation.expect("final evaluation").learned)
}

pub fn compare(iterations: usize, num_days: u32) -> Result<()> {
    let mz = run_mode(ControlMode::MultiZone, iterations, num_days)?;
    let ma = run_mode(ControlMode::MultiAgent, iterations, num_days)?;
    for (name, s) in [("multi_zone", mz), ("multi_agent", ma)] {
        println!(
            "{name:>12}: reward/step {:.4}  hvac {:.1} kWh  violation {:.4} C",
            s.mean_step_reward, s.hvac_kwh, s.mean_violation
        );
    }
    let gap = (ma.mean_step_reward - mz.mean_step_reward).abs() / mz.mean_step_reward.abs().max(1e-12);
    println!("relative reward gap {:.1}%", 100.0 * gap);
    Ok(())
}

pub fn run_example() -> Result<()> {
    compare(2, 1)
}

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2);
    let days = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    compare(iterations, days)
}
