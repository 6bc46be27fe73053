// Measures rollout throughput for 1, 2 and 4 workers.
//
// ```text
// cargo run --release --example scaling_benchmark -- 2000
// ```

use anyhow::Result;
use hvac_drl::env::{ControlMode, EnvConfig};
use hvac_drl::runtime::bench::benchmark_throughput;
use hvac_drl::runtime::EnvSetup;

pub fn bench(steps_per_worker: usize) -> Result<()> {
    let setup = EnvSetup::synthetic_toronto(EnvConfig {
        num_days: 30,
        start_day_of_year: 182,
        control_mode: ControlMode::MultiZone,
        ..EnvConfig::default()
    });
    let samples = benchmark_throughput(&setup, &[1, 2, 4], steps_per_worker, 0)?;
    let base = samples[0].steps_per_second;
    for s in &samples {
        println!(
            "{} workers: {:6} steps in {:6.3} s = {:9.0} steps/s (x{:.2})",
            s.workers,
            s.steps,
            s.seconds,
            s.steps_per_second,
            s.steps_per_second / base
        );
    }
    Ok(())
}

pub fn run_example() -> Result<()> {
    bench(100)
}

fn main() -> Result<()> {
    let steps = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(2000);
    bench(steps)
}
