// Runs the fixed-setpoint baseline through the environment for one week in
// January and one in July and prints the episode metrics.

use std::sync::Arc;

use anyhow::Result;
use hvac_drl::baseline::{baseline_action, BaselinePolicy};
use hvac_drl::building::build_reference_topology;
use hvac_drl::env::{run_episode, ControlMode, EnvConfig, EpisodeMetrics, HvacEnv};
use hvac_drl::weather::WeatherSeries;

pub fn baseline_week(start_day_of_year: u32, mode: ControlMode) -> Result<EpisodeMetrics> {
    let weather = Arc::new(WeatherSeries::from_path(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/toronto_synthetic.epw"
    ))?);
    let config = EnvConfig {
        num_days: 7,
        start_day_of_year,
        control_mode: mode,
        ..EnvConfig::default()
    };
    let mut env = HvacEnv::new(config.clone(), weather, Arc::new(build_reference_topology()))?;
    let action = baseline_action(&BaselinePolicy::default(), &config, env.num_zones());
    Ok(run_episode(&mut env, 7, |_| action.clone())?)
}

pub fn run_example() -> Result<()> {
    for (label, day) in [("January", 1), ("July", 182)] {
        let m = baseline_week(day, ControlMode::MultiZone)?;
        println!(
            "{label:>8}: {} steps, reward/step {:.4}, total {:.0} kWh (hvac {:.0}), mean violation {:.4} C",
            m.steps,
            m.mean_step_reward(),
            m.energy_kwh,
            m.hvac_kwh,
            m.mean_violation()
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
