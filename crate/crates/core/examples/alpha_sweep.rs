// Sweeps the comfort weight alpha, writes `sweep.csv` and splits it into
// reward, energy and violation tables ready for grouped bar charts.
//
// ```text
// cargo run --release --example alpha_sweep -- runs/alpha 200
// ```

use std::path::Path;

use anyhow::Result;
use hvac_drl::config::ExperimentConfig;
use hvac_drl::env::ControlMode;
use hvac_drl::experiment::{emit_plot_data, sweep, SweepAxis};

pub fn alpha_sweep(out: &Path, iterations: usize, num_days: u32, force: bool) -> Result<()> {
    let mut cfg = ExperimentConfig::with_weather(concat!(env!("CARGO_MANIFEST_DIR"), "/data/toronto_synthetic.epw"));
    cfg.experiment_id = "alpha-sweep".into();
    cfg.output_dir = out.to_path_buf();
    cfg.environment.start_day_of_year = 182;
    cfg.environment.num_days = num_days;
    cfg.environment.control_mode = ControlMode::Centralized;
    cfg.algorithm.ppo.gamma = 0.9;
    cfg.algorithm.ppo.lr = 1e-3;
    cfg.runtime.iterations = iterations;
    cfg.runtime.fragment_length = if num_days >= 4 { 360 } else { 96 };
    cfg.runtime.eval_interval = iterations.max(1);
    let values: Vec<String> = ["0.01", "1", "100"].map(String::from).to_vec();
    let outcome = sweep(&cfg, &[SweepAxis::new("alpha", &values)?], force, |row| {
        println!(
            "{:>12}: reward/step {:9.4}  hvac {:7.1} kWh  violation {:.4} C",
            row.setting,
            row.learned_reward.unwrap_or(f64::NAN),
            row.learned_hvac_kwh.unwrap_or(f64::NAN),
            row.learned_violation.unwrap_or(f64::NAN)
        );
    })?;
    for p in emit_plot_data(&outcome.path, out)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

pub fn run_example() -> Result<()> {
    let dir = tempfile::tempdir()?;
    alpha_sweep(dir.path(), 2, 1, false)
}

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    match args.next() {
        Some(out) => {
            let iterations = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);
            alpha_sweep(Path::new(&out), iterations, 30, true)
        }
        None => run_example(),
    }
}
