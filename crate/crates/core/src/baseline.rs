//! Fixed-setpoint comparison controller.

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EnvError, SetpointAction};

/// Constant heating/cooling setpoints broadcast to every slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselinePolicy {
    pub heating_setpoint: f64,
    pub cooling_setpoint: f64,
}

impl Default for BaselinePolicy {
    fn default() -> Self {
        Self {
            heating_setpoint: 20.0,
            cooling_setpoint: 22.5,
        }
    }
}

impl BaselinePolicy {
    pub fn validate(&self, config: &EnvConfig) -> Result<(), EnvError> {
        let h = self.heating_setpoint;
        let c = self.cooling_setpoint;
        if !(h <= c) {
            return Err(EnvError::Config(format!(
                "baseline heating setpoint {h} exceeds cooling setpoint {c}"
            )));
        }
        if !(config.heating_setpoint_min..=config.heating_setpoint_max).contains(&h) {
            return Err(EnvError::Config(format!("baseline heating setpoint {h} outside its range")));
        }
        if !(config.cooling_setpoint_min..=config.cooling_setpoint_max).contains(&c) {
            return Err(EnvError::Config(format!("baseline cooling setpoint {c} outside its range")));
        }
        Ok(())
    }
}

/// The same action every step, independent of the observation.
pub fn baseline_action(policy: &BaselinePolicy, config: &EnvConfig, num_zones: usize) -> SetpointAction {
    let k = config.control_mode.slots(num_zones);
    SetpointAction {
        heating_setpoints: vec![policy.heating_setpoint; k],
        cooling_setpoints: vec![policy.cooling_setpoint; k],
    }
}
