use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use hvac_drl::config::{load_config, ExperimentConfig, PolicyChoice};
use hvac_drl::experiment::{
    emit_plot_data, evaluate_checkpoint, print_summary, run_experiment, sweep, RunStatus, SweepAxis,
};

#[derive(Parser)]
#[command(name = "hvac-drl", version, about = "Train and evaluate HVAC setpoint controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override runtime.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override runtime.workers.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overwrite a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
    /// Override output_dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write metrics, report and checkpoint.
    Train { config: PathBuf },
    /// Evaluate a checkpoint against the baseline.
    Evaluate { checkpoint: PathBuf, config: PathBuf },
    /// Run one experiment per value (cartesian product over repeated keys).
    Sweep {
        config: PathBuf,
        /// alpha, control_mode, weather or start_day+num_days.
        #[arg(long = "key", required = true)]
        keys: Vec<String>,
        /// Comma-separated values, one list per --key.
        #[arg(long = "values", required = true, allow_hyphen_values = true)]
        values: Vec<String>,
    },
    /// Split a sweep.csv into reward, energy and violation tables.
    PlotData { sweep_csv: PathBuf },
    /// Evaluate the fixed-setpoint baseline.
    Baseline { config: PathBuf },
}

impl Cli {
    fn load(&self, path: &Path) -> Result<ExperimentConfig> {
        let mut cfg = load_config(path)?;
        if let Some(s) = self.seed {
            cfg.runtime.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.runtime.workers = w;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let mut stdout = std::io::stdout();
    match &cli.command {
        Command::Train { config } => {
            let cfg = cli.load(config)?;
            let report = run_experiment(&cfg, cli.force)?;
            print_summary(&mut stdout, &report)?;
            println!("wrote {}", cfg.output_dir.display());
        }
        Command::Baseline { config } => {
            let mut cfg = cli.load(config)?;
            cfg.policy = PolicyChoice::Baseline;
            let report = run_experiment(&cfg, cli.force)?;
            print_summary(&mut stdout, &report)?;
        }
        Command::Evaluate { checkpoint, config } => {
            let cfg = cli.load(config)?;
            let eval = evaluate_checkpoint(checkpoint, &cfg)?;
            let text = serde_json::to_string_pretty(&eval)?;
            println!("{text}");
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("evaluation.json"), text + "\n")?;
            }
        }
        Command::Sweep { config, keys, values } => {
            if keys.len() != values.len() {
                bail!("each --key needs exactly one --values list ({} keys, {} lists)", keys.len(), values.len());
            }
            let cfg = cli.load(config)?;
            let axes = keys
                .iter()
                .zip(values)
                .map(|(k, v)| SweepAxis::new(k, &v.split(',').map(str::to_string).collect::<Vec<_>>()))
                .collect::<Result<Vec<_>, _>>()?;
            let outcome = sweep(&cfg, &axes, cli.force, |row| match row.status {
                RunStatus::Ok => println!(
                    "{}: reward {:.4} (baseline {:.4}), violation {:.4}",
                    row.setting,
                    row.learned_reward.unwrap_or(f64::NAN),
                    row.baseline_reward.unwrap_or(f64::NAN),
                    row.learned_violation.unwrap_or(f64::NAN),
                ),
                RunStatus::Failed => eprintln!("{}: FAILED: {}", row.setting, row.error),
            })?;
            println!("wrote {}", outcome.path.display());
            if outcome.failures() > 0 {
                eprintln!("{} of {} runs failed", outcome.failures(), outcome.rows.len());
                return Ok(false);
            }
        }
        Command::PlotData { sweep_csv } => {
            let dir = match &cli.out {
                Some(d) => d.clone(),
                None => sweep_csv.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            for p in emit_plot_data(sweep_csv, &dir).with_context(|| format!("reading {}", sweep_csv.display()))? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
