//! Routing between the environment and one or two agents.
//!
//! In multi-agent mode the heating agent owns the first K action components
//! and the cooling agent the last K; both see the full observation and share
//! the scalar reward.

use crate::env::ControlMode;

use super::PolicyError;

pub const HEATING_AGENT: usize = 0;
pub const COOLING_AGENT: usize = 1;

/// Output width of each agent.
pub fn agent_action_dims(mode: ControlMode, num_zones: usize) -> Vec<usize> {
    let k = mode.slots(num_zones);
    match mode {
        ControlMode::MultiAgent => vec![k, k],
        ControlMode::Centralized | ControlMode::MultiZone => vec![2 * k],
    }
}

/// Every agent receives the same observation.
pub fn route_observation(obs: &[f64], agents: usize) -> Vec<Vec<f64>> {
    vec![obs.to_vec(); agents]
}

/// Concatenates per-agent actions into the environment's raw layout.
pub fn merge_actions(parts: &[Vec<f64>], dims: &[usize]) -> Result<Vec<f64>, PolicyError> {
    if parts.len() != dims.len() || parts.iter().zip(dims).any(|(p, &d)| p.len() != d) {
        return Err(PolicyError::Shape(format!(
            "agent actions {:?} do not match widths {dims:?}",
            parts.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    Ok(parts.concat())
}

/// Inverse of [`merge_actions`].
pub fn split_action(raw: &[f64], dims: &[usize]) -> Result<Vec<Vec<f64>>, PolicyError> {
    if raw.len() != dims.iter().sum::<usize>() {
        return Err(PolicyError::Shape(format!(
            "action of width {} cannot be split into {dims:?}",
            raw.len()
        )));
    }
    let mut out = Vec::with_capacity(dims.len());
    let mut start = 0;
    for &d in dims {
        out.push(raw[start..start + d].to_vec());
        start += d;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{decode_action, EnvConfig};

    #[test]
    fn widths_per_mode() {
        assert_eq!(agent_action_dims(ControlMode::Centralized, 15), vec![2]);
        assert_eq!(agent_action_dims(ControlMode::MultiZone, 15), vec![30]);
        assert_eq!(agent_action_dims(ControlMode::MultiAgent, 15), vec![15, 15]);
    }

    #[test]
    fn merge_then_split_round_trips() {
        let dims = [3, 3];
        let parts = vec![vec![0.1, 0.2, 0.3], vec![-0.1, -0.2, -0.3]];
        let raw = merge_actions(&parts, &dims).unwrap();
        assert_eq!(split_action(&raw, &dims).unwrap(), parts);
        assert!(merge_actions(&parts, &[2, 4]).is_err());
        assert!(split_action(&raw, &[3, 4]).is_err());
    }

    #[test]
    fn heating_agent_controls_heating_setpoints() {
        let cfg = EnvConfig {
            control_mode: ControlMode::MultiAgent,
            ..EnvConfig::default()
        };
        let heat = vec![-1.0, 1.0];
        let cool = vec![1.0, 1.0];
        let raw = merge_actions(&[heat, cool], &[2, 2]).unwrap();
        let a = decode_action(&raw, &cfg, 2).unwrap();
        assert_eq!(a.heating_setpoints, vec![cfg.heating_setpoint_min, cfg.heating_setpoint_max]);
        assert_eq!(a.cooling_setpoints, vec![cfg.cooling_setpoint_max; 2]);
        let routed = route_observation(&[1.0, 2.0], 2);
        assert_eq!(routed[HEATING_AGENT], routed[COOLING_AGENT]);
    }
}
