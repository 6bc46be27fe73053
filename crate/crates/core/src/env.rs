//! Gym-style episodic environment around the building simulator.
//!
//! One step is `timestep_s` seconds (15 minutes by default). The reward is
//! the negative of metered energy plus a power-law comfort penalty:
//!
//! ```text
//! reward = −(energy_kwh · energy_scale + α · Σ_z violation_z^λ)
//! violation_z = max(T_min − T_z, T_z − T_max, 0)
//! ```

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::building::{
    electrical_power, hvac_power, step_thermal, BuildingError, BuildingModel, HvacFlow, ZoneThermalState,
};
use crate::weather::{WeatherError, WeatherRecord, WeatherSeries};

pub const SECONDS_PER_DAY: u32 = 86_400;
const JOULES_PER_KWH: f64 = 3.6e6;
/// Zone temperature at reset before noise, °C.
pub const INITIAL_TEMPERATURE: f64 = 21.0;
/// Half-width of the uniform reset noise, °C.
pub const INITIAL_NOISE: f64 = 1.0;
/// Observation features in addition to one temperature per zone.
pub const EXTRA_FEATURES: usize = 8;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment configuration: {0}")]
    Config(String),
    #[error("environment contract violated: {0}")]
    Contract(String),
    #[error(transparent)]
    Building(#[from] BuildingError),
    #[error(transparent)]
    Weather(#[from] WeatherError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// One heating/cooling pair broadcast to every zone.
    Centralized,
    /// One pair per zone, one agent.
    MultiZone,
    /// One pair per zone; a heating agent and a cooling agent.
    MultiAgent,
}

impl ControlMode {
    /// Number of setpoint pairs K for a building with `num_zones` zones.
    pub fn slots(self, num_zones: usize) -> usize {
        match self {
            ControlMode::Centralized => 1,
            ControlMode::MultiZone | ControlMode::MultiAgent => num_zones,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ControlMode::Centralized => "centralized",
            ControlMode::MultiZone => "multi_zone",
            ControlMode::MultiAgent => "multi_agent",
        }
    }
}

impl std::str::FromStr for ControlMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "centralized" => Ok(ControlMode::Centralized),
            "multi_zone" => Ok(ControlMode::MultiZone),
            "multi_agent" => Ok(ControlMode::MultiAgent),
            other => Err(format!(
                "unknown control mode {other:?} (expected centralized, multi_zone or multi_agent)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub num_days: u32,
    pub timestep_s: u32,
    pub comfort_min: f64,
    pub comfort_max: f64,
    pub heating_setpoint_min: f64,
    pub heating_setpoint_max: f64,
    pub cooling_setpoint_min: f64,
    pub cooling_setpoint_max: f64,
    pub alpha: f64,
    pub lambda: f64,
    /// Reward units per kWh.
    pub energy_scale: f64,
    pub control_mode: ControlMode,
    /// 1-based day of the weather year at which episodes start.
    pub start_day_of_year: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_days: 365,
            timestep_s: 900,
            comfort_min: 20.0,
            comfort_max: 25.0,
            heating_setpoint_min: 15.0,
            heating_setpoint_max: 22.0,
            cooling_setpoint_min: 22.0,
            cooling_setpoint_max: 30.0,
            alpha: 1.0,
            lambda: 1.5,
            energy_scale: 1.0,
            control_mode: ControlMode::MultiZone,
            start_day_of_year: 1,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let err = |m: String| Err(EnvError::Config(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return err(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.lambda >= 1.0 && self.lambda.is_finite()) {
            return err(format!("lambda must be >= 1, got {}", self.lambda));
        }
        if !(self.energy_scale >= 0.0 && self.energy_scale.is_finite()) {
            return err(format!("energy_scale must be >= 0, got {}", self.energy_scale));
        }
        if self.num_days < 1 {
            return err("num_days must be >= 1".into());
        }
        if self.start_day_of_year < 1 {
            return err("start_day_of_year is 1-based and must be >= 1".into());
        }
        if self.timestep_s == 0 || SECONDS_PER_DAY % self.timestep_s != 0 {
            return err(format!(
                "timestep_s must be positive and divide 86400, got {}",
                self.timestep_s
            ));
        }
        if !(self.comfort_min < self.comfort_max) {
            return err(format!(
                "comfort_min ({}) must be below comfort_max ({})",
                self.comfort_min, self.comfort_max
            ));
        }
        if !(self.heating_setpoint_min <= self.heating_setpoint_max) {
            return err("heating_setpoint_min must be <= heating_setpoint_max".into());
        }
        if !(self.cooling_setpoint_min <= self.cooling_setpoint_max) {
            return err("cooling_setpoint_min must be <= cooling_setpoint_max".into());
        }
        if !(self.heating_setpoint_max <= self.cooling_setpoint_max) {
            return err("heating_setpoint_max must be <= cooling_setpoint_max".into());
        }
        Ok(())
    }

    pub fn steps_per_episode(&self) -> usize {
        (self.num_days * (SECONDS_PER_DAY / self.timestep_s)) as usize
    }

    /// Offset of the episode start into the weather series, seconds.
    pub fn start_offset_s(&self) -> f64 {
        (self.start_day_of_year - 1) as f64 * SECONDS_PER_DAY as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub zone_temperatures: Vec<f64>,
    /// Thermal heat added during the previous step, kWh.
    pub last_heating_energy: f64,
    /// Thermal heat removed during the previous step, kWh.
    pub last_cooling_energy: f64,
    pub outdoor_dry_bulb: f64,
    pub outdoor_wet_bulb: f64,
    /// Fraction of the day in [0, 1).
    pub time_of_day: f64,
    /// Fraction of the year in [0, 1).
    pub day_of_year: f64,
}

impl Observation {
    pub fn features(&self) -> Vec<f64> {
        encode_features(
            &self.zone_temperatures,
            self.last_heating_energy,
            self.last_cooling_energy,
            self.outdoor_dry_bulb,
            self.outdoor_wet_bulb,
            self.time_of_day,
            self.day_of_year,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetpointAction {
    pub heating_setpoints: Vec<f64>,
    pub cooling_setpoints: Vec<f64>,
}

impl SetpointAction {
    pub fn slots(&self) -> usize {
        self.heating_setpoints.len()
    }

    /// Setpoint pair applied to `zone`; a single slot is broadcast.
    pub fn for_zone(&self, zone: usize) -> (f64, f64) {
        let k = if self.slots() == 1 { 0 } else { zone };
        (self.heating_setpoints[k], self.cooling_setpoints[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Step total including base load, kWh.
    pub energy_kwh: f64,
    pub violation_per_zone: Vec<f64>,
    pub penalty_term: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub heating_thermal_kwh: f64,
    pub cooling_thermal_kwh: f64,
    /// Metered HVAC energy, excluding base load.
    pub hvac_kwh: f64,
    pub base_kwh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub energy: EnergyBreakdown,
    pub done: bool,
}

pub fn temperature_violation(zone_temp: f64, t_min: f64, t_max: f64) -> f64 {
    (t_min - zone_temp).max(zone_temp - t_max).max(0.0)
}

pub fn compute_reward(
    energy_kwh: f64,
    violations: &[f64],
    alpha: f64,
    lambda: f64,
    energy_scale: f64,
) -> RewardBreakdown {
    let penalty_term = alpha * violations.iter().map(|v| v.powf(lambda)).sum::<f64>();
    RewardBreakdown {
        energy_kwh,
        violation_per_zone: violations.to_vec(),
        penalty_term,
        reward: -(energy_kwh * energy_scale + penalty_term),
    }
}

/// Maps a raw policy output in `[-1, 1]^(2K)` onto the setpoint ranges.
///
/// The first K components drive heating setpoints and the last K cooling
/// setpoints. Components are clamped to `[-1, 1]` first. A pair with heating
/// above cooling collapses to its midpoint.
pub fn decode_action(raw: &[f64], config: &EnvConfig, num_zones: usize) -> Result<SetpointAction, EnvError> {
    let k = config.control_mode.slots(num_zones);
    if raw.len() != 2 * k {
        return Err(EnvError::Contract(format!(
            "raw action has length {}, expected {}",
            raw.len(),
            2 * k
        )));
    }
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(EnvError::Contract("raw action contains non-finite values".into()));
    }
    let affine = |x: f64, lo: f64, hi: f64| lo + (x.clamp(-1.0, 1.0) + 1.0) * 0.5 * (hi - lo);
    let mut heating: Vec<f64> = raw[..k]
        .iter()
        .map(|&x| affine(x, config.heating_setpoint_min, config.heating_setpoint_max))
        .collect();
    let mut cooling: Vec<f64> = raw[k..]
        .iter()
        .map(|&x| affine(x, config.cooling_setpoint_min, config.cooling_setpoint_max))
        .collect();
    let lo = config.heating_setpoint_min.max(config.cooling_setpoint_min);
    let hi = config.heating_setpoint_max.min(config.cooling_setpoint_max);
    for (h, c) in heating.iter_mut().zip(cooling.iter_mut()) {
        if *h > *c {
            let mid = (0.5 * (*h + *c)).clamp(lo, hi);
            *h = mid;
            *c = mid;
        }
    }
    Ok(SetpointAction {
        heating_setpoints: heating,
        cooling_setpoints: cooling,
    })
}

/// Inverse of [`decode_action`] for pairs already inside the ranges.
pub fn encode_action(action: &SetpointAction, config: &EnvConfig) -> Vec<f64> {
    let inv = |v: f64, lo: f64, hi: f64| {
        if hi > lo {
            2.0 * (v - lo) / (hi - lo) - 1.0
        } else {
            0.0
        }
    };
    action
        .heating_setpoints
        .iter()
        .map(|&h| inv(h, config.heating_setpoint_min, config.heating_setpoint_max))
        .chain(
            action
                .cooling_setpoints
                .iter()
                .map(|&c| inv(c, config.cooling_setpoint_min, config.cooling_setpoint_max)),
        )
        .collect()
}

/// Fixed standardisation: temperatures `(x − 22)/10`, energies `x/10`,
/// cyclic time features as raw sin/cos.
pub fn encode_features(
    zone_temperatures: &[f64],
    heating_kwh: f64,
    cooling_kwh: f64,
    dry_bulb: f64,
    wet_bulb: f64,
    time_of_day: f64,
    day_of_year: f64,
) -> Vec<f64> {
    let temp = |x: f64| (x - 22.0) / 10.0;
    let mut v = Vec::with_capacity(zone_temperatures.len() + EXTRA_FEATURES);
    v.extend(zone_temperatures.iter().map(|&t| temp(t)));
    v.push(heating_kwh / 10.0);
    v.push(cooling_kwh / 10.0);
    v.push(temp(dry_bulb));
    v.push(temp(wet_bulb));
    v.push((TAU * time_of_day).sin());
    v.push((TAU * time_of_day).cos());
    v.push((TAU * day_of_year).sin());
    v.push((TAU * day_of_year).cos());
    v
}

/// Builds the observation at absolute weather time `sim_time_s`.
pub fn encode_observation(
    state: &ZoneThermalState,
    energies: (f64, f64),
    weather: &WeatherRecord,
    sim_time_s: f64,
) -> Observation {
    let day = SECONDS_PER_DAY as f64;
    Observation {
        zone_temperatures: state.temperatures.clone(),
        last_heating_energy: energies.0,
        last_cooling_energy: energies.1,
        outdoor_dry_bulb: weather.dry_bulb,
        outdoor_wet_bulb: weather.wet_bulb,
        time_of_day: sim_time_s.rem_euclid(day) / day,
        day_of_year: (sim_time_s / day).rem_euclid(365.0) / 365.0,
    }
}

/// A single-threaded building environment instance.
#[derive(Debug, Clone)]
pub struct HvacEnv {
    config: EnvConfig,
    weather: Arc<WeatherSeries>,
    model: Arc<BuildingModel>,
    state: ZoneThermalState,
    step_index: usize,
    total_steps: usize,
    last_energy: (f64, f64),
    ready: bool,
}

impl HvacEnv {
    pub fn new(config: EnvConfig, weather: Arc<WeatherSeries>, model: Arc<BuildingModel>) -> Result<Self, EnvError> {
        config.validate()?;
        let needed = config.start_offset_s() + config.num_days as f64 * SECONDS_PER_DAY as f64;
        if needed > weather.span_s() {
            return Err(EnvError::Config(format!(
                "weather series covers {} days but the window day {} + {} days needs {}",
                weather.days(),
                config.start_day_of_year,
                config.num_days,
                (needed / SECONDS_PER_DAY as f64).ceil()
            )));
        }
        let n = model.num_zones();
        Ok(Self {
            total_steps: config.steps_per_episode(),
            config,
            weather,
            model,
            state: ZoneThermalState::uniform(n, INITIAL_TEMPERATURE),
            step_index: 0,
            last_energy: (0.0, 0.0),
            ready: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn model(&self) -> &BuildingModel {
        &self.model
    }

    pub fn num_zones(&self) -> usize {
        self.model.num_zones()
    }

    pub fn action_slots(&self) -> usize {
        self.config.control_mode.slots(self.num_zones())
    }

    pub fn action_dim(&self) -> usize {
        2 * self.action_slots()
    }

    pub fn observation_dim(&self) -> usize {
        self.num_zones() + EXTRA_FEATURES
    }

    pub fn steps_per_episode(&self) -> usize {
        self.total_steps
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn is_done(&self) -> bool {
        self.step_index >= self.total_steps
    }

    pub fn state(&self) -> &ZoneThermalState {
        &self.state
    }

    fn sim_time(&self) -> f64 {
        self.config.start_offset_s() + self.step_index as f64 * self.config.timestep_s as f64
    }

    pub fn observation(&self) -> Observation {
        let t = self.sim_time();
        let weather = self.weather.sample_wrapped(t);
        encode_observation(&self.state, self.last_energy, &weather, t)
    }

    /// Starts a new episode with zone temperatures `21 °C ± U[-1, 1]`.
    pub fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.num_zones();
        self.state = ZoneThermalState {
            temperatures: (0..n)
                .map(|_| INITIAL_TEMPERATURE + rng.gen_range(-INITIAL_NOISE..=INITIAL_NOISE))
                .collect(),
        };
        self.step_index = 0;
        self.last_energy = (0.0, 0.0);
        self.ready = true;
        self.observation()
    }

    /// Decodes a raw policy output and advances one step.
    pub fn step_raw(&mut self, raw: &[f64]) -> Result<Step, EnvError> {
        let action = decode_action(raw, &self.config, self.num_zones())?;
        self.step(&action)
    }

    pub fn step(&mut self, action: &SetpointAction) -> Result<Step, EnvError> {
        if !self.ready {
            return Err(EnvError::Contract("step called before reset".into()));
        }
        if self.is_done() {
            return Err(EnvError::Contract("step called after the episode finished".into()));
        }
        let k = self.action_slots();
        if action.heating_setpoints.len() != k || action.cooling_setpoints.len() != k {
            return Err(EnvError::Contract(format!("action must carry {k} setpoint pairs")));
        }
        let t = self.sim_time();
        let dt = self.config.timestep_s as f64;
        let outdoor = self.weather.sample(t)?;
        let hour = t.rem_euclid(SECONDS_PER_DAY as f64) / 3600.0;
        let gains = self.model.internal_gains(hour);
        let spec = self.model.hvac;
        let flows: Vec<HvacFlow> = self
            .state
            .temperatures
            .iter()
            .enumerate()
            .map(|(z, &temp)| {
                let (h, c) = action.for_zone(z);
                hvac_power(&spec, temp, h, c)
            })
            .collect();
        let next = step_thermal(&self.model, &self.state, outdoor.dry_bulb, &gains, &flows, dt)?;

        let to_kwh = dt / JOULES_PER_KWH;
        let mut energy = EnergyBreakdown::default();
        for f in &flows {
            energy.heating_thermal_kwh += f.heat_delivered * to_kwh;
            energy.cooling_thermal_kwh += f.cool_extracted * to_kwh;
            energy.hvac_kwh += electrical_power(&spec, f.heat_delivered, f.cool_extracted) * to_kwh;
        }
        energy.base_kwh = self.model.base_load * to_kwh;

        let cfg = &self.config;
        let violations: Vec<f64> = next
            .temperatures
            .iter()
            .map(|&tz| temperature_violation(tz, cfg.comfort_min, cfg.comfort_max))
            .collect();
        let reward = compute_reward(
            energy.hvac_kwh + energy.base_kwh,
            &violations,
            cfg.alpha,
            cfg.lambda,
            cfg.energy_scale,
        );

        self.state = next;
        self.step_index += 1;
        self.last_energy = (energy.heating_thermal_kwh, energy.cooling_thermal_kwh);
        Ok(Step {
            observation: self.observation(),
            reward,
            energy,
            done: self.is_done(),
        })
    }
}

/// Running totals over one or more episodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub steps: usize,
    pub reward_sum: f64,
    /// Total metered energy including base load, kWh.
    pub energy_kwh: f64,
    /// Metered HVAC energy, kWh.
    pub hvac_kwh: f64,
    pub violation_sum: f64,
    pub zone_steps: usize,
}

impl EpisodeMetrics {
    pub fn record(&mut self, step: &Step) {
        self.record_parts(&step.reward, &step.energy);
    }

    pub fn record_parts(&mut self, reward: &RewardBreakdown, energy: &EnergyBreakdown) {
        self.steps += 1;
        self.reward_sum += reward.reward;
        self.energy_kwh += reward.energy_kwh;
        self.hvac_kwh += energy.hvac_kwh;
        self.violation_sum += reward.violation_per_zone.iter().sum::<f64>();
        self.zone_steps += reward.violation_per_zone.len();
    }

    /// Reward normalised by episode length (mean per-step reward).
    pub fn mean_step_reward(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.reward_sum / self.steps as f64
        }
    }

    /// Average of per-zone, per-step violations, zeros included.
    pub fn mean_violation(&self) -> f64 {
        if self.zone_steps == 0 {
            0.0
        } else {
            self.violation_sum / self.zone_steps as f64
        }
    }

    /// Combines metrics from several episodes into per-episode averages.
    pub fn average(runs: &[EpisodeMetrics]) -> EpisodeMetrics {
        let n = runs.len().max(1) as f64;
        let mut total = EpisodeMetrics::default();
        for r in runs {
            total.steps += r.steps;
            total.reward_sum += r.reward_sum;
            total.energy_kwh += r.energy_kwh;
            total.hvac_kwh += r.hvac_kwh;
            total.violation_sum += r.violation_sum;
            total.zone_steps += r.zone_steps;
        }
        EpisodeMetrics {
            steps: (total.steps as f64 / n).round() as usize,
            reward_sum: total.reward_sum / n,
            energy_kwh: total.energy_kwh / n,
            hvac_kwh: total.hvac_kwh / n,
            violation_sum: total.violation_sum / n,
            zone_steps: (total.zone_steps as f64 / n).round() as usize,
        }
    }
}

/// Runs a full episode with `policy` choosing each action.
pub fn run_episode<F>(env: &mut HvacEnv, seed: u64, mut policy: F) -> Result<EpisodeMetrics, EnvError>
where
    F: FnMut(&Observation) -> SetpointAction,
{
    let mut obs = env.reset(seed);
    let mut metrics = EpisodeMetrics::default();
    loop {
        let action = policy(&obs);
        let step = env.step(&action)?;
        metrics.record(&step);
        obs = step.observation;
        if step.done {
            return Ok(metrics);
        }
    }
}
