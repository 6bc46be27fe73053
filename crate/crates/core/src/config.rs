//! Experiment configuration files.
//!
//! Configs are TOML. Only `weather` is required; every section falls back to
//! documented defaults and unknown keys are rejected.
//!
//! ```toml
//! weather = "../data/toronto_synthetic.epw"   # or "synthetic:toronto"
//! output_dir = "runs/july"
//! experiment_id = "july-ppo"
//! policy = "learned"                           # or "baseline"
//!
//! [environment]
//! start_day_of_year = 182
//! num_days = 30
//! alpha = 1.0
//! control_mode = "centralized"
//!
//! [algorithm]
//! kind = "ppo"
//! [algorithm.ppo]
//! gamma = 0.9
//!
//! [runtime]
//! workers = 4
//! iterations = 200
//! ```
//!
//! Relative weather paths are resolved against the directory holding the
//! config file. `synthetic:<preset>` generates a typical year from a
//! built-in climate profile instead of reading a file.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::BaselinePolicy;
use crate::building::{build_reference_topology_with, BuildingModel, BuildingParams};
use crate::env::EnvConfig;
use crate::policy::checkpoint::config_hash;
use crate::runtime::train::TrainingSetup;
use crate::runtime::{AlgorithmConfig, AlgorithmKind, EnvSetup, RuntimeConfig, SYNTHETIC_WEATHER_SEED};
use crate::weather::synthetic::{generate_epw, ClimateProfile};
use crate::weather::{parse_epw, WeatherSeries};

pub const SYNTHETIC_PREFIX: &str = "synthetic:";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid value for {field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyChoice {
    #[default]
    Learned,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// EPW path or `synthetic:<preset>`.
    pub weather: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_experiment_id")]
    pub experiment_id: String,
    #[serde(default)]
    pub policy: PolicyChoice,
    #[serde(default)]
    pub environment: EnvConfig,
    #[serde(default)]
    pub building: BuildingParams,
    #[serde(default)]
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub runtime: RuntimeConfig,
    #[serde(default)]
    pub baseline: BaselinePolicy,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/experiment")
}

fn default_experiment_id() -> String {
    "experiment".to_string()
}

impl ExperimentConfig {
    /// Defaults everywhere, with the given weather source.
    pub fn with_weather(weather: impl Into<String>) -> Self {
        Self {
            weather: weather.into(),
            output_dir: default_output_dir(),
            experiment_id: default_experiment_id(),
            policy: PolicyChoice::default(),
            environment: EnvConfig::default(),
            building: BuildingParams::default(),
            algorithm: AlgorithmConfig::default(),
            runtime: RuntimeConfig::default(),
            baseline: BaselinePolicy::default(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Parses TOML text; relative weather paths resolve against `base_dir`.
    pub fn from_toml(text: &str, origin: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_col(text, s.start))
                .unwrap_or((0, 0));
            ConfigError::Parse {
                path: origin.to_string(),
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.weather = resolve_weather(&cfg.weather, base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every numeric constraint and that referenced files exist.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.experiment_id.trim().is_empty() {
            return Err(invalid("experiment_id", "must not be empty"));
        }
        if !self.weather.starts_with(SYNTHETIC_PREFIX) && !Path::new(&self.weather).is_file() {
            return Err(invalid("weather", format!("file {} does not exist", self.weather)));
        }
        if let Some(name) = self.weather.strip_prefix(SYNTHETIC_PREFIX) {
            if ClimateProfile::preset(name).is_none() {
                return Err(invalid(
                    "weather",
                    format!("unknown synthetic preset {name:?} (toronto, tampa, san_francisco)"),
                ));
            }
        }
        self.environment.validate().map_err(|e| invalid("environment", e))?;
        build_reference_topology_with(&self.building).map_err(|e| invalid("building", e))?;
        self.baseline
            .validate(&self.environment)
            .map_err(|e| invalid("baseline", e))?;
        self.runtime.validate().map_err(|e| invalid("runtime", e))?;
        match self.algorithm.kind {
            AlgorithmKind::Ppo => self.algorithm.ppo.validate().map_err(|e| invalid("algorithm.ppo", e))?,
            AlgorithmKind::Ddpg => {
                self.algorithm.ddpg.validate().map_err(|e| invalid("algorithm.ddpg", e))?;
                if self.environment.control_mode == crate::env::ControlMode::MultiAgent {
                    return Err(invalid(
                        "environment.control_mode",
                        "multi_agent requires algorithm.kind = \"ppo\"",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn load_weather(&self) -> Result<WeatherSeries, ConfigError> {
        match self.weather.strip_prefix(SYNTHETIC_PREFIX) {
            Some(name) => {
                let profile = ClimateProfile::preset(name)
                    .ok_or_else(|| invalid("weather", format!("unknown synthetic preset {name:?}")))?;
                parse_epw(&generate_epw(&profile, SYNTHETIC_WEATHER_SEED)).map_err(|e| invalid("weather", e))
            }
            None => WeatherSeries::from_path(&self.weather).map_err(|e| invalid("weather", e)),
        }
    }

    pub fn building_model(&self) -> Result<BuildingModel, ConfigError> {
        build_reference_topology_with(&self.building).map_err(|e| invalid("building", e))
    }

    /// Loads weather and builds the model; also checks that the episode
    /// window fits the weather series.
    pub fn env_setup(&self) -> Result<EnvSetup, ConfigError> {
        let setup = EnvSetup::new(
            self.environment.clone(),
            Arc::new(self.load_weather()?),
            Arc::new(self.building_model()?),
        );
        setup.make_env().map_err(|e| invalid("environment", e))?;
        Ok(setup)
    }

    pub fn training_setup(&self) -> Result<TrainingSetup, ConfigError> {
        Ok(TrainingSetup {
            env: self.env_setup()?,
            algorithm: self.algorithm.clone(),
            runtime: self.runtime.clone(),
            baseline: self.baseline,
        })
    }

    /// Hash of everything that determines the learned parameters. Output
    /// location and experiment id are excluded, and the worker layout is
    /// reduced to the number of environment streams.
    pub fn hash(&self) -> [u8; 8] {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.experiment_id = String::new();
        c.runtime.workers = self.runtime.streams();
        c.runtime.envs_per_worker = 1;
        config_hash(&c.to_toml())
    }

    /// Short label of the episode window, e.g. `d182+30`.
    pub fn window_label(&self) -> String {
        format!("d{}+{}", self.environment.start_day_of_year, self.environment.num_days)
    }
}

fn resolve_weather(weather: &str, base_dir: &Path) -> String {
    if weather.starts_with(SYNTHETIC_PREFIX) {
        return weather.to_string();
    }
    let p = Path::new(weather);
    if p.is_absolute() {
        weather.to_string()
    } else {
        base_dir.join(p).to_string_lossy().into_owned()
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let base = path
        .parent()
        .map(|p| if p.as_os_str().is_empty() { Path::new(".") } else { p })
        .unwrap_or(Path::new("."));
    let base = base.canonicalize().unwrap_or_else(|_| base.to_path_buf());
    ExperimentConfig::from_toml(&text, &path.display().to_string(), &base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ControlMode;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_toml(text, "test.toml", Path::new("."))
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let c = parse("weather = \"synthetic:toronto\"").unwrap();
        assert_eq!(c, ExperimentConfig::with_weather("synthetic:toronto"));
        assert_eq!(c.environment.alpha, 1.0);
        assert_eq!(c.runtime.workers, 4);
    }

    #[test]
    fn negative_alpha_names_the_field() {
        let err = parse("weather = \"synthetic:toronto\"\n[environment]\nalpha = -1.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("environment") && msg.contains("alpha must be >= 0"), "{msg}");
    }

    #[test]
    fn small_lambda_rejected() {
        let err = parse("weather = \"synthetic:toronto\"\n[environment]\nlambda = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("lambda must be >= 1"));
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse("weather = \"synthetic:toronto\"\n\n[environment]\nalpah = 2.0\n").unwrap_err();
        match err {
            ConfigError::Parse { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("alpah"), "{message}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn missing_weather_file() {
        let err = parse("weather = \"nope/missing.epw\"").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref field, .. } if field == "weather"));
    }

    #[test]
    fn missing_config_file() {
        assert!(matches!(load_config("/definitely/not/here.toml"), Err(ConfigError::Io { .. })));
    }

    #[test]
    fn ddpg_multi_agent_rejected() {
        let err = parse(
            "weather = \"synthetic:toronto\"\n[environment]\ncontrol_mode = \"multi_agent\"\n[algorithm]\nkind = \"ddpg\"\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("control_mode"));
    }

    #[test]
    fn hash_ignores_output_and_worker_layout() {
        let a = ExperimentConfig::with_weather("synthetic:toronto");
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.runtime.workers = 1;
        b.runtime.envs_per_worker = 4;
        assert_eq!(a.hash(), b.hash());
        b.environment.alpha = 2.0;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn weather_resolves_against_config_dir() {
        assert_eq!(resolve_weather("w.epw", Path::new("/cfg")), "/cfg/w.epw");
        assert_eq!(resolve_weather("/abs/w.epw", Path::new("/cfg")), "/abs/w.epw");
    }

    proptest! {
        #[test]
        fn serialise_then_parse_round_trips(
            alpha in 0.0f64..1000.0,
            lambda in 1.0f64..4.0,
            mode in 0usize..3,
            workers in 1usize..9,
            iterations in 0usize..500,
            gamma in 0.0f64..1.0,
            days in 1u32..60,
        ) {
            let mut c = ExperimentConfig::with_weather("synthetic:tampa");
            c.environment.alpha = alpha;
            c.environment.lambda = lambda;
            c.environment.num_days = days;
            c.environment.control_mode = [ControlMode::Centralized, ControlMode::MultiZone, ControlMode::MultiAgent][mode];
            c.runtime.workers = workers;
            c.runtime.iterations = iterations;
            c.runtime.max_env_steps = if iterations % 2 == 0 { Some(iterations as u64 * 10) } else { None };
            c.algorithm.ppo.gamma = gamma;
            let back = parse(&c.to_toml()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
