//! Experiment driver: single runs, baseline runs, checkpoint evaluation,
//! parameter sweeps and plot-ready tables.
//!
//! A training run writes into its output directory:
//!
//! | file | contents |
//! |------|----------|
//! | `metrics.csv` | one row per iteration, see [`MetricsRow`] |
//! | `timings.csv` | `iteration,wall_seconds` |
//! | `report.json` | config hash, learned vs. baseline evaluation on the same seeds, status |
//! | `checkpoint.bin` | final (or last good) parameters |
//!
//! `metrics.csv` holds nothing that depends on the wall clock, so two runs
//! with the same config and seed produce byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, PolicyChoice};
use crate::env::ControlMode;
use crate::policy::checkpoint::{Checkpoint, CheckpointError};
use crate::runtime::eval::{evaluate_baseline, EvalSummary};
use crate::runtime::train::{train_loop, FinalEvaluation, IterationRecord, TrainedPolicy};
use crate::runtime::RuntimeError;

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("output directory {0} exists and is not empty (use --force to overwrite)")]
    OutputExists(PathBuf),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("training failed: {0}")]
    Training(RuntimeError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("sweep: {0}")]
    Sweep(String),
    #[error("{path}: missing column {column:?}")]
    Schema { path: PathBuf, column: String },
}

fn io_err(path: &Path, e: impl ToString) -> ExperimentError {
    ExperimentError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Creates `dir`, refusing a non-empty existing directory unless `force`.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<(), ExperimentError> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(|e| io_err(dir, e))?.next().is_some();
        if non_empty && !force {
            return Err(ExperimentError::OutputExists(dir.to_path_buf()));
        }
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// One `metrics.csv` row. Metric columns are empty for training-sourced
/// rows in which no episode finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub experiment_id: String,
    pub alpha: f64,
    pub control_mode: String,
    pub algorithm: String,
    pub season_window: String,
    pub iteration: usize,
    pub env_steps: u64,
    pub source: String,
    pub mean_step_reward: Option<f64>,
    pub energy_kwh: Option<f64>,
    pub hvac_kwh: Option<f64>,
    pub mean_violation: Option<f64>,
}

impl MetricsRow {
    pub fn new(cfg: &ExperimentConfig, record: &IterationRecord) -> Self {
        let m = record.metrics;
        Self {
            experiment_id: cfg.experiment_id.clone(),
            alpha: cfg.environment.alpha,
            control_mode: cfg.environment.control_mode.as_str().to_string(),
            algorithm: cfg.algorithm.kind.as_str().to_string(),
            season_window: cfg.window_label(),
            iteration: record.iteration,
            env_steps: record.env_steps,
            source: record.source.as_str().to_string(),
            mean_step_reward: m.map(|s| s.mean_step_reward),
            energy_kwh: m.map(|s| s.energy_kwh),
            hvac_kwh: m.map(|s| s.hvac_kwh),
            mean_violation: m.map(|s| s.mean_violation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment_id: String,
    pub config_hash: String,
    pub policy: PolicyChoice,
    pub algorithm: String,
    pub control_mode: String,
    pub alpha: f64,
    pub season_window: String,
    pub weather: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub streams: usize,
    pub iterations_run: usize,
    pub total_env_steps: u64,
    pub wall_seconds: f64,
    pub max_reply_queue: usize,
    /// Learned policy before any update.
    pub initial_evaluation: Option<EvalSummary>,
    /// Evaluated policy and baseline on identical seeds. For baseline runs
    /// both sides are the baseline.
    pub final_evaluation: Option<FinalEvaluation>,
    pub checkpoint: Option<String>,
}

impl ExperimentReport {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            experiment_id: cfg.experiment_id.clone(),
            config_hash: hex(&cfg.hash()),
            policy: cfg.policy,
            algorithm: cfg.algorithm.kind.as_str().to_string(),
            control_mode: cfg.environment.control_mode.as_str().to_string(),
            alpha: cfg.environment.alpha,
            season_window: cfg.window_label(),
            weather: cfg.weather.clone(),
            status: RunStatus::Ok,
            error: None,
            streams: cfg.runtime.streams(),
            iterations_run: 0,
            total_env_steps: 0,
            wall_seconds: 0.0,
            max_reply_queue: 0,
            initial_evaluation: None,
            final_evaluation: None,
            checkpoint: None,
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, ExperimentError> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

fn final_or_default(report: &ExperimentReport) -> FinalEvaluation {
    report.final_evaluation.clone().unwrap_or_else(|| FinalEvaluation {
        seeds: Vec::new(),
        learned: EvalSummary::default(),
        baseline: EvalSummary::default(),
        hvac_reduction: 0.0,
    })
}

/// Runs one experiment into `cfg.output_dir`. Dispatches on `cfg.policy`.
/// On a training failure the partial metrics, a failed report and the last
/// good checkpoint are still written before the error is returned.
pub fn run_experiment(cfg: &ExperimentConfig, force: bool) -> Result<ExperimentReport, ExperimentError> {
    match cfg.policy {
        PolicyChoice::Baseline => run_baseline(cfg, force),
        PolicyChoice::Learned => run_training(cfg, force),
    }
}

fn run_training(cfg: &ExperimentConfig, force: bool) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let setup = cfg.training_setup()?;
    let dir = cfg.output_dir.as_path();
    prepare_output_dir(dir, force)?;
    let metrics_path = dir.join(METRICS_FILE);
    let timings_path = dir.join(TIMINGS_FILE);
    let mut metrics = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&metrics_path)
        .map_err(|e| io_err(&metrics_path, e))?;
    let mut timings = csv_writer(&timings_path)?;
    // Header even when no iteration runs.
    metrics
        .write_record(METRICS_COLUMNS)
        .map_err(|e| io_err(&metrics_path, e))?;
    timings
        .write_record(["iteration", "wall_seconds"])
        .map_err(|e| io_err(&timings_path, e))?;
    let mut write_failure: Option<ExperimentError> = None;
    let mut on_iteration = |rec: &IterationRecord| {
        if write_failure.is_some() {
            return;
        }
        let row = MetricsRow::new(cfg, rec);
        let res = metrics
            .serialize(&row)
            .and_then(|_| timings.write_record([rec.iteration.to_string(), rec.wall_seconds.to_string()]))
            .and_then(|_| metrics.flush().map_err(csv::Error::from));
        if let Err(e) = res {
            write_failure = Some(io_err(&metrics_path, e));
        }
    };
    let outcome = train_loop(&setup, &mut on_iteration);
    if let Some(e) = write_failure {
        return Err(e);
    }
    metrics.flush().map_err(|e| io_err(&metrics_path, e))?;
    timings.flush().map_err(|e| io_err(&timings_path, e))?;

    let hash = cfg.hash();
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    let mut report = ExperimentReport::new(cfg);
    let (train_report, policy, error) = match outcome {
        Ok(o) => (o.report, Some(o.policy), None),
        Err(f) => (f.report, f.last_good, Some(f.error)),
    };
    report.iterations_run = train_report.iterations.len();
    report.total_env_steps = train_report.total_env_steps;
    report.wall_seconds = train_report.wall_seconds;
    report.max_reply_queue = train_report.max_reply_queue;
    report.initial_evaluation = Some(train_report.initial_evaluation);
    report.final_evaluation = train_report.final_evaluation;
    if let Some(p) = &policy {
        p.checkpoint(hash).save(&ckpt_path)?;
        report.checkpoint = Some(ckpt_path.display().to_string());
    }
    if let Some(e) = &error {
        report.status = RunStatus::Failed;
        report.error = Some(e.to_string());
    }
    write_json(&dir.join(REPORT_FILE), &report)?;
    match error {
        Some(e) => Err(ExperimentError::Training(e)),
        None => Ok(report),
    }
}

pub const METRICS_COLUMNS: [&str; 12] = [
    "experiment_id",
    "alpha",
    "control_mode",
    "algorithm",
    "season_window",
    "iteration",
    "env_steps",
    "source",
    "mean_step_reward",
    "energy_kwh",
    "hvac_kwh",
    "mean_violation",
];

/// Evaluates the fixed-setpoint baseline on the evaluation seeds and writes
/// `report.json` (both evaluation sides are the baseline).
pub fn run_baseline(cfg: &ExperimentConfig, force: bool) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let setup = cfg.env_setup()?;
    let dir = cfg.output_dir.as_path();
    prepare_output_dir(dir, force)?;
    let start = Instant::now();
    let summary = evaluate_baseline(&setup, &cfg.runtime.eval_seeds, &cfg.baseline)?;
    let mut report = ExperimentReport::new(cfg);
    report.policy = PolicyChoice::Baseline;
    report.wall_seconds = start.elapsed().as_secs_f64();
    report.final_evaluation = Some(FinalEvaluation {
        seeds: cfg.runtime.eval_seeds.clone(),
        learned: summary,
        baseline: summary,
        hvac_reduction: 0.0,
    });
    write_json(&dir.join(REPORT_FILE), &report)?;
    Ok(report)
}

/// Loads a checkpoint written for `cfg` and evaluates it against the
/// baseline on the evaluation seeds.
pub fn evaluate_checkpoint(path: &Path, cfg: &ExperimentConfig) -> Result<FinalEvaluation, ExperimentError> {
    cfg.validate()?;
    let checkpoint = Checkpoint::load(path)?;
    checkpoint.check_config(cfg.hash())?;
    let setup = cfg.env_setup()?;
    let mut policy = TrainedPolicy::initial(&setup, &cfg.algorithm, cfg.runtime.seed)?;
    policy.restore(&checkpoint)?;
    let seeds = cfg.runtime.eval_seeds.clone();
    let learned = policy.evaluate(&setup, &seeds)?;
    let baseline = evaluate_baseline(&setup, &seeds, &cfg.baseline)?;
    Ok(FinalEvaluation {
        hvac_reduction: if baseline.hvac_kwh > 0.0 {
            1.0 - learned.hvac_kwh / baseline.hvac_kwh
        } else {
            0.0
        },
        seeds,
        learned,
        baseline,
    })
}

// ---------------------------------------------------------------- sweeps

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKey {
    Alpha,
    ControlMode,
    Weather,
    /// Episode window, values like `182+30`, `jul-30` or `year-365`.
    Window,
}

impl SweepKey {
    pub fn parse(key: &str) -> Result<Self, ExperimentError> {
        match key {
            "alpha" => Ok(Self::Alpha),
            "control_mode" | "mode" => Ok(Self::ControlMode),
            "weather" => Ok(Self::Weather),
            "start_day+num_days" | "window" | "season" => Ok(Self::Window),
            other => Err(ExperimentError::Sweep(format!(
                "unknown key {other:?} (alpha, control_mode, weather, start_day+num_days)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Alpha => "alpha",
            Self::ControlMode => "control_mode",
            Self::Weather => "weather",
            Self::Window => "window",
        }
    }
}

const MONTH_START: [(&str, u32); 12] = [
    ("jan", 1),
    ("feb", 32),
    ("mar", 60),
    ("apr", 91),
    ("may", 121),
    ("jun", 152),
    ("jul", 182),
    ("aug", 213),
    ("sep", 244),
    ("oct", 274),
    ("nov", 305),
    ("dec", 335),
];

/// Parses `START+DAYS`, `<month>-DAYS` or `year-DAYS` into
/// `(start_day_of_year, num_days)`.
pub fn parse_window(value: &str) -> Result<(u32, u32), ExperimentError> {
    let bad = || ExperimentError::Sweep(format!("bad window {value:?} (e.g. 182+30, jul-30, year-365)"));
    let v = value.trim().to_ascii_lowercase();
    if let Some((start, days)) = v.split_once('+') {
        return Ok((start.trim().parse().map_err(|_| bad())?, days.trim().parse().map_err(|_| bad())?));
    }
    let (name, days) = v.split_once('-').ok_or_else(bad)?;
    let days: u32 = days.parse().map_err(|_| bad())?;
    if name == "year" {
        return Ok((1, days));
    }
    MONTH_START
        .iter()
        .find(|(m, _)| *m == name)
        .map(|&(_, start)| (start, days))
        .ok_or_else(bad)
}

/// Applies one sweep value to a config. The result is not yet validated.
pub fn apply_sweep_value(cfg: &mut ExperimentConfig, key: SweepKey, value: &str) -> Result<(), ExperimentError> {
    let bad = |m: String| ExperimentError::Sweep(m);
    match key {
        SweepKey::Alpha => {
            cfg.environment.alpha = value.trim().parse().map_err(|_| bad(format!("alpha value {value:?} is not a number")))?
        }
        SweepKey::ControlMode => {
            cfg.environment.control_mode = value.trim().parse::<ControlMode>().map_err(|e| bad(e.to_string()))?
        }
        SweepKey::Weather => cfg.weather = value.trim().to_string(),
        SweepKey::Window => {
            let (start, days) = parse_window(value)?;
            cfg.environment.start_day_of_year = start;
            cfg.environment.num_days = days;
        }
    }
    Ok(())
}

/// One swept dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: SweepKey,
    pub values: Vec<String>,
}

impl SweepAxis {
    pub fn new(key: &str, values: &[String]) -> Result<Self, ExperimentError> {
        let key = SweepKey::parse(key)?;
        let values: Vec<String> = values.iter().map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(ExperimentError::Sweep(format!("no values given for {}", key.as_str())));
        }
        Ok(Self { key, values })
    }
}

/// One row of `sweep.csv`. Evaluation columns are empty for failed runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: String,
    pub alpha: f64,
    pub control_mode: String,
    pub weather: String,
    pub window: String,
    pub algorithm: String,
    pub status: RunStatus,
    pub learned_reward: Option<f64>,
    pub learned_energy_kwh: Option<f64>,
    pub learned_hvac_kwh: Option<f64>,
    pub learned_violation: Option<f64>,
    pub baseline_reward: Option<f64>,
    pub baseline_energy_kwh: Option<f64>,
    pub baseline_hvac_kwh: Option<f64>,
    pub baseline_violation: Option<f64>,
    pub hvac_reduction: Option<f64>,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub path: PathBuf,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status == RunStatus::Failed).count()
    }
}

fn setting_label(parts: &[(SweepKey, &str)]) -> String {
    parts
        .iter()
        .map(|(k, v)| format!("{}={}", k.as_str(), v))
        .collect::<Vec<_>>()
        .join(",")
}

fn dir_name(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '+' | '=') { c } else { '_' })
        .collect()
}

/// Runs the cartesian product of `axes` sequentially with the base seed,
/// writing each sub-run under `cfg.output_dir/<setting>` and the aggregate
/// table to `cfg.output_dir/sweep.csv`. Sub-run failures become `failed`
/// rows; the sweep carries on.
pub fn sweep(
    cfg: &ExperimentConfig,
    axes: &[SweepAxis],
    force: bool,
    mut progress: impl FnMut(&SweepRow),
) -> Result<SweepOutcome, ExperimentError> {
    if axes.is_empty() {
        return Err(ExperimentError::Sweep("at least one --key is required".into()));
    }
    if let Some(a) = axes.iter().find(|a| a.values.is_empty()) {
        return Err(ExperimentError::Sweep(format!("no values given for {}", a.key.as_str())));
    }
    let root = cfg.output_dir.clone();
    prepare_output_dir(&root, force)?;
    let path = root.join(SWEEP_FILE);
    let mut writer = csv_writer(&path)?;

    let total: usize = axes.iter().map(|a| a.values.len()).product();
    let mut rows = Vec::with_capacity(total);
    for n in 0..total {
        let mut rem = n;
        let mut parts = Vec::with_capacity(axes.len());
        for a in axes.iter().rev() {
            parts.push((a.key, a.values[rem % a.values.len()].as_str()));
            rem /= a.values.len();
        }
        parts.reverse();
        let label = setting_label(&parts);
        let mut sub = cfg.clone();
        sub.experiment_id = format!("{}/{}", cfg.experiment_id, label);
        sub.output_dir = root.join(dir_name(&label));
        let applied = parts.iter().try_for_each(|&(k, v)| apply_sweep_value(&mut sub, k, v));
        let result = applied.and_then(|_| run_experiment(&sub, force));
        let mut row = SweepRow {
            setting: label,
            alpha: sub.environment.alpha,
            control_mode: sub.environment.control_mode.as_str().to_string(),
            weather: sub.weather.clone(),
            window: sub.window_label(),
            algorithm: match sub.policy {
                PolicyChoice::Baseline => "baseline".to_string(),
                PolicyChoice::Learned => sub.algorithm.kind.as_str().to_string(),
            },
            status: RunStatus::Ok,
            learned_reward: None,
            learned_energy_kwh: None,
            learned_hvac_kwh: None,
            learned_violation: None,
            baseline_reward: None,
            baseline_energy_kwh: None,
            baseline_hvac_kwh: None,
            baseline_violation: None,
            hvac_reduction: None,
            error: String::new(),
        };
        match result {
            Ok(report) => {
                let f = final_or_default(&report);
                row.learned_reward = Some(f.learned.mean_step_reward);
                row.learned_energy_kwh = Some(f.learned.energy_kwh);
                row.learned_hvac_kwh = Some(f.learned.hvac_kwh);
                row.learned_violation = Some(f.learned.mean_violation);
                row.baseline_reward = Some(f.baseline.mean_step_reward);
                row.baseline_energy_kwh = Some(f.baseline.energy_kwh);
                row.baseline_hvac_kwh = Some(f.baseline.hvac_kwh);
                row.baseline_violation = Some(f.baseline.mean_violation);
                row.hvac_reduction = Some(f.hvac_reduction);
            }
            Err(e) => {
                row.status = RunStatus::Failed;
                row.error = e.to_string();
            }
        }
        writer.serialize(&row).map_err(|e| io_err(&path, e))?;
        writer.flush().map_err(|e| io_err(&path, e))?;
        progress(&row);
        rows.push(row);
    }
    Ok(SweepOutcome { rows, path })
}

// ------------------------------------------------------------ plot data

/// Columns copied into every plot table ahead of the value columns.
pub const PLOT_KEY_COLUMNS: [&str; 5] = ["setting", "alpha", "control_mode", "weather", "window"];

/// Output file name and the `(learned, baseline)` source columns of each
/// panel.
pub const PLOT_PANELS: [(&str, &str, &str); 3] = [
    ("reward.csv", "learned_reward", "baseline_reward"),
    ("energy.csv", "learned_energy_kwh", "baseline_energy_kwh"),
    ("violation.csv", "learned_violation", "baseline_violation"),
];

/// Splits a `sweep.csv` into one table per panel with columns
/// `setting,alpha,control_mode,weather,window,learned,baseline`. Rows map
/// one-to-one and values are copied verbatim.
pub fn emit_plot_data(sweep_csv: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut reader = csv::Reader::from_path(sweep_csv).map_err(|e| io_err(sweep_csv, e))?;
    let headers = reader.headers().map_err(|e| io_err(sweep_csv, e))?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| ExperimentError::Schema {
            path: sweep_csv.to_path_buf(),
            column: name.to_string(),
        })
    };
    let keys = PLOT_KEY_COLUMNS.iter().map(|c| column(c)).collect::<Result<Vec<_>, _>>()?;
    let panels = PLOT_PANELS
        .iter()
        .map(|&(file, l, b)| Ok((file, column(l)?, column(b)?)))
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let records = reader
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| io_err(sweep_csv, e))?;

    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut written = Vec::new();
    for (file, l, b) in panels {
        let path = out_dir.join(file);
        let mut w = csv_writer(&path)?;
        let mut header: Vec<&str> = PLOT_KEY_COLUMNS.to_vec();
        header.extend(["learned", "baseline"]);
        w.write_record(&header).map_err(|e| io_err(&path, e))?;
        for r in &records {
            let mut out: Vec<&str> = keys.iter().map(|&i| r.get(i).unwrap_or("")).collect();
            out.push(r.get(l).unwrap_or(""));
            out.push(r.get(b).unwrap_or(""));
            w.write_record(&out).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Prints a one-line summary of a report to `out`.
pub fn print_summary(out: &mut impl Write, report: &ExperimentReport) -> std::io::Result<()> {
    match &report.final_evaluation {
        Some(f) => writeln!(
            out,
            "{}: reward {:.4} (baseline {:.4}), hvac {:.1} kWh (baseline {:.1}, {:+.1}%), violation {:.4} C",
            report.experiment_id,
            f.learned.mean_step_reward,
            f.baseline.mean_step_reward,
            f.learned.hvac_kwh,
            f.baseline.hvac_kwh,
            -100.0 * f.hvac_reduction,
            f.learned.mean_violation,
        ),
        None => writeln!(out, "{}: no final evaluation", report.experiment_id),
    }
}
