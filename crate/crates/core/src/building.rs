//! Lumped-parameter (RC network) multi-zone thermal model.
//!
//! Each zone is one capacitance node coupled to the outdoor air and to its
//! neighbours through conductances. HVAC is a capacity-limited proportional
//! tracker of the heating and cooling setpoints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest forward-Euler step taken internally by [`step_thermal`], seconds.
pub const MAX_SUBSTEP_S: f64 = 60.0;
/// Physical bounds used to detect numerical blow-up, °C.
pub const TEMPERATURE_BOUNDS: (f64, f64) = (-50.0, 70.0);

#[derive(Debug, Error, PartialEq)]
pub enum BuildingError {
    #[error("invalid building model: {0}")]
    InvalidModel(String),
    #[error("zone {zone} temperature {temperature:.3} °C left the physical range [-50, 70]")]
    BlowUp { zone: String, temperature: f64 },
    #[error("expected {expected} per-zone values, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("time step must be positive, got {0}")]
    TimeStep(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneSpec {
    pub name: String,
    /// J/°C
    pub thermal_capacitance: f64,
    /// W/°C, zero for zones without exterior walls.
    pub exterior_conductance: f64,
    /// W during occupied hours.
    pub internal_gain_occupied: f64,
    /// W outside occupied hours.
    pub internal_gain_unoccupied: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HvacSpec {
    /// W per zone
    pub max_heating_rate: f64,
    /// W per zone
    pub max_cooling_rate: f64,
    /// W/°C
    pub proportional_gain: f64,
    /// °C
    pub deadband: f64,
    pub heating_cop: f64,
    pub cooling_cop: f64,
}

impl Default for HvacSpec {
    fn default() -> Self {
        Self {
            max_heating_rate: 6000.0,
            max_cooling_rate: 8000.0,
            proportional_gain: 3000.0,
            deadband: 0.2,
            heating_cop: 1.0,
            cooling_cop: 3.0,
        }
    }
}

impl HvacSpec {
    pub fn validate(&self) -> Result<(), BuildingError> {
        let positive = [
            ("max_heating_rate", self.max_heating_rate),
            ("max_cooling_rate", self.max_cooling_rate),
            ("proportional_gain", self.proportional_gain),
            ("heating_cop", self.heating_cop),
            ("cooling_cop", self.cooling_cop),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(BuildingError::InvalidModel(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.deadband >= 0.0 && self.deadband.is_finite()) {
            return Err(BuildingError::InvalidModel(format!(
                "deadband must be >= 0, got {}",
                self.deadband
            )));
        }
        Ok(())
    }
}

/// Occupied hours `[start, end)` in local hours of the day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancySchedule {
    pub start_hour: f64,
    pub end_hour: f64,
}

impl Default for OccupancySchedule {
    fn default() -> Self {
        Self {
            start_hour: 8.0,
            end_hour: 18.0,
        }
    }
}

impl OccupancySchedule {
    pub fn is_occupied(&self, hour_of_day: f64) -> bool {
        hour_of_day >= self.start_hour && hour_of_day < self.end_hour
    }
}

/// Numeric parameters of the reference topology. Every field is overridable
/// from the `[building]` section of an experiment config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildingParams {
    pub perimeter_capacitance: f64,
    pub core_capacitance: f64,
    pub perimeter_exterior_conductance: f64,
    pub interzone_conductance: f64,
    pub proportional_gain: f64,
    pub max_heating_w: f64,
    pub max_cooling_w: f64,
    pub heating_cop: f64,
    pub cooling_cop: f64,
    pub deadband: f64,
    pub occupied_gain_w: f64,
    pub unoccupied_gain_w: f64,
    pub occupied_start_hour: f64,
    pub occupied_end_hour: f64,
    pub base_load_w: f64,
}

impl Default for BuildingParams {
    fn default() -> Self {
        let hvac = HvacSpec::default();
        Self {
            perimeter_capacitance: 3.0e6,
            core_capacitance: 5.0e6,
            perimeter_exterior_conductance: 150.0,
            interzone_conductance: 80.0,
            proportional_gain: hvac.proportional_gain,
            max_heating_w: hvac.max_heating_rate,
            max_cooling_w: hvac.max_cooling_rate,
            heating_cop: hvac.heating_cop,
            cooling_cop: hvac.cooling_cop,
            deadband: hvac.deadband,
            occupied_gain_w: 500.0,
            unoccupied_gain_w: 100.0,
            occupied_start_hour: 8.0,
            occupied_end_hour: 18.0,
            base_load_w: 5000.0,
        }
    }
}

impl BuildingParams {
    pub fn hvac(&self) -> HvacSpec {
        HvacSpec {
            max_heating_rate: self.max_heating_w,
            max_cooling_rate: self.max_cooling_w,
            proportional_gain: self.proportional_gain,
            deadband: self.deadband,
            heating_cop: self.heating_cop,
            cooling_cop: self.cooling_cop,
        }
    }
}

/// Symmetric zone coupling; stored once per unordered pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adjacency {
    pub a: usize,
    pub b: usize,
    /// W/°C
    pub conductance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingModel {
    zones: Vec<ZoneSpec>,
    adjacency: Vec<Adjacency>,
    neighbours: Vec<Vec<(usize, f64)>>,
    pub hvac: HvacSpec,
    /// W, lighting and other loads not tied to a zone.
    pub base_load: f64,
    pub occupancy: OccupancySchedule,
}

impl BuildingModel {
    pub fn new(
        zones: Vec<ZoneSpec>,
        adjacency: Vec<Adjacency>,
        hvac: HvacSpec,
        base_load: f64,
        occupancy: OccupancySchedule,
    ) -> Result<Self, BuildingError> {
        if zones.is_empty() {
            return Err(BuildingError::InvalidModel("a building needs at least one zone".into()));
        }
        for z in &zones {
            if !(z.thermal_capacitance > 0.0 && z.thermal_capacitance.is_finite()) {
                return Err(BuildingError::InvalidModel(format!(
                    "zone {} capacitance must be > 0",
                    z.name
                )));
            }
            if !(z.exterior_conductance >= 0.0
                && z.internal_gain_occupied >= 0.0
                && z.internal_gain_unoccupied >= 0.0)
            {
                return Err(BuildingError::InvalidModel(format!(
                    "zone {} conductance and gains must be >= 0",
                    z.name
                )));
            }
        }
        hvac.validate()?;
        if !(base_load >= 0.0 && base_load.is_finite()) {
            return Err(BuildingError::InvalidModel("base load must be >= 0".into()));
        }
        let n = zones.len();
        let mut neighbours = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::new();
        for adj in &adjacency {
            if adj.a >= n || adj.b >= n || adj.a == adj.b {
                return Err(BuildingError::InvalidModel(format!(
                    "adjacency ({}, {}) references an invalid zone pair",
                    adj.a, adj.b
                )));
            }
            if !(adj.conductance >= 0.0 && adj.conductance.is_finite()) {
                return Err(BuildingError::InvalidModel("conductances must be >= 0".into()));
            }
            if !seen.insert((adj.a.min(adj.b), adj.a.max(adj.b))) {
                return Err(BuildingError::InvalidModel(format!(
                    "zone pair ({}, {}) listed twice",
                    adj.a, adj.b
                )));
            }
            neighbours[adj.a].push((adj.b, adj.conductance));
            neighbours[adj.b].push((adj.a, adj.conductance));
        }
        Ok(Self {
            zones,
            adjacency,
            neighbours,
            hvac,
            base_load,
            occupancy,
        })
    }

    pub fn zones(&self) -> &[ZoneSpec] {
        &self.zones
    }

    pub fn num_zones(&self) -> usize {
        self.zones.len()
    }

    pub fn adjacency(&self) -> &[Adjacency] {
        &self.adjacency
    }

    pub fn zone_index(&self, name: &str) -> Option<usize> {
        self.zones.iter().position(|z| z.name == name)
    }

    /// Conductance between zones `a` and `b` (0 when not adjacent).
    pub fn conductance(&self, a: usize, b: usize) -> f64 {
        self.neighbours
            .get(a)
            .and_then(|ns| ns.iter().find(|(j, _)| *j == b))
            .map(|(_, u)| *u)
            .unwrap_or(0.0)
    }

    pub fn neighbours(&self, zone: usize) -> &[(usize, f64)] {
        &self.neighbours[zone]
    }

    /// Internal gains (W) per zone at the given hour of day.
    pub fn internal_gains(&self, hour_of_day: f64) -> Vec<f64> {
        let occupied = self.occupancy.is_occupied(hour_of_day);
        self.zones
            .iter()
            .map(|z| {
                if occupied {
                    z.internal_gain_occupied
                } else {
                    z.internal_gain_unoccupied
                }
            })
            .collect()
    }
}

pub const FLOORS: [&str; 3] = ["bottom", "mid", "top"];
const PERIMETER_FLOORS: [&str; 3] = ["bot", "mid", "top"];

/// Names of the 15 reference zones in model order.
pub fn reference_zone_names() -> Vec<String> {
    let mut names: Vec<String> = FLOORS.iter().map(|f| format!("Core_{f}")).collect();
    for f in PERIMETER_FLOORS {
        for k in 1..=4 {
            names.push(format!("Perimeter_{f}_ZN_{k}"));
        }
    }
    names
}

/// Three-floor medium office: per floor one core and four perimeter zones.
pub fn build_reference_topology() -> BuildingModel {
    build_reference_topology_with(&BuildingParams::default())
        .expect("default parameters are valid")
}

pub fn build_reference_topology_with(p: &BuildingParams) -> Result<BuildingModel, BuildingError> {
    let names = reference_zone_names();
    let core = |floor: usize| floor;
    let perimeter = |floor: usize, k: usize| 3 + floor * 4 + k;
    let zones = names
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let is_core = i < 3;
            ZoneSpec {
                name,
                thermal_capacitance: if is_core { p.core_capacitance } else { p.perimeter_capacitance },
                exterior_conductance: if is_core { 0.0 } else { p.perimeter_exterior_conductance },
                internal_gain_occupied: p.occupied_gain_w,
                internal_gain_unoccupied: p.unoccupied_gain_w,
            }
        })
        .collect();
    let u = p.interzone_conductance;
    let mut adjacency = Vec::new();
    for floor in 0..3 {
        for k in 0..4 {
            adjacency.push(Adjacency { a: perimeter(floor, k), b: core(floor), conductance: u });
            adjacency.push(Adjacency {
                a: perimeter(floor, k),
                b: perimeter(floor, (k + 1) % 4),
                conductance: u,
            });
        }
        if floor + 1 < 3 {
            adjacency.push(Adjacency { a: core(floor), b: core(floor + 1), conductance: u });
            for k in 0..4 {
                adjacency.push(Adjacency {
                    a: perimeter(floor, k),
                    b: perimeter(floor + 1, k),
                    conductance: u,
                });
            }
        }
    }
    let occupancy = OccupancySchedule {
        start_hour: p.occupied_start_hour,
        end_hour: p.occupied_end_hour,
    };
    BuildingModel::new(zones, adjacency, p.hvac(), p.base_load_w, occupancy)
}

/// Thermal power exchanged by one zone's HVAC, W.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HvacFlow {
    pub heat_delivered: f64,
    pub cool_extracted: f64,
}

/// Proportional heating/cooling with capacity limits and a deadband.
pub fn hvac_power(spec: &HvacSpec, zone_temp: f64, heat_setpoint: f64, cool_setpoint: f64) -> HvacFlow {
    let mut flow = HvacFlow::default();
    if zone_temp < heat_setpoint - spec.deadband {
        flow.heat_delivered =
            (spec.proportional_gain * (heat_setpoint - zone_temp)).clamp(0.0, spec.max_heating_rate);
    } else if zone_temp > cool_setpoint + spec.deadband {
        flow.cool_extracted =
            (spec.proportional_gain * (zone_temp - cool_setpoint)).clamp(0.0, spec.max_cooling_rate);
    }
    flow
}

/// Metered electrical power (W) for the given thermal flows.
pub fn electrical_power(spec: &HvacSpec, heat_delivered: f64, cool_extracted: f64) -> f64 {
    heat_delivered / spec.heating_cop + cool_extracted / spec.cooling_cop
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneThermalState {
    pub temperatures: Vec<f64>,
}

impl ZoneThermalState {
    pub fn uniform(num_zones: usize, temperature: f64) -> Self {
        Self {
            temperatures: vec![temperature; num_zones],
        }
    }
}

/// Net heat flow (W) into every zone for the given temperatures.
pub fn net_heat_flows(
    model: &BuildingModel,
    temperatures: &[f64],
    outdoor_temp: f64,
    gains: &[f64],
    hvac: &[HvacFlow],
) -> Vec<f64> {
    let mut flows = Vec::with_capacity(temperatures.len());
    for (z, spec) in model.zones.iter().enumerate() {
        let t = temperatures[z];
        let mut q = spec.exterior_conductance * (outdoor_temp - t) + gains[z];
        for &(j, u) in &model.neighbours[z] {
            q += u * (temperatures[j] - t);
        }
        q += hvac[z].heat_delivered - hvac[z].cool_extracted;
        flows.push(q);
    }
    flows
}

/// Number of equal forward-Euler sub-steps used for a step of `dt` seconds.
pub fn substep_count(dt: f64) -> usize {
    (dt / MAX_SUBSTEP_S).ceil().max(1.0) as usize
}

/// Advances zone temperatures by `dt` seconds with HVAC flows and gains held
/// constant over the step.
pub fn step_thermal(
    model: &BuildingModel,
    state: &ZoneThermalState,
    outdoor_temp: f64,
    gains: &[f64],
    hvac: &[HvacFlow],
    dt: f64,
) -> Result<ZoneThermalState, BuildingError> {
    let n = model.num_zones();
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(BuildingError::TimeStep(dt));
    }
    for len in [state.temperatures.len(), gains.len(), hvac.len()] {
        if len != n {
            return Err(BuildingError::Shape { expected: n, actual: len });
        }
    }
    let substeps = substep_count(dt);
    let h = dt / substeps as f64;
    let mut temps = state.temperatures.clone();
    for _ in 0..substeps {
        let flows = net_heat_flows(model, &temps, outdoor_temp, gains, hvac);
        for (z, (t, q)) in temps.iter_mut().zip(flows).enumerate() {
            *t += h * q / model.zones[z].thermal_capacitance;
        }
    }
    for (z, &t) in temps.iter().enumerate() {
        if !(t.is_finite() && (TEMPERATURE_BOUNDS.0..=TEMPERATURE_BOUNDS.1).contains(&t)) {
            return Err(BuildingError::BlowUp {
                zone: model.zones[z].name.clone(),
                temperature: t,
            });
        }
    }
    Ok(ZoneThermalState { temperatures: temps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single_zone(c: f64, u_ext: f64) -> BuildingModel {
        BuildingModel::new(
            vec![ZoneSpec {
                name: "z".into(),
                thermal_capacitance: c,
                exterior_conductance: u_ext,
                internal_gain_occupied: 0.0,
                internal_gain_unoccupied: 0.0,
            }],
            vec![],
            HvacSpec::default(),
            0.0,
            OccupancySchedule::default(),
        )
        .unwrap()
    }

    #[test]
    fn reference_topology_shape() {
        let m = build_reference_topology();
        assert_eq!(m.num_zones(), 15);
        assert_eq!(m.zones()[0].name, "Core_bottom");
        assert_eq!(m.zones()[14].name, "Perimeter_top_ZN_4");
        let core_mid = m.zone_index("Core_mid").unwrap();
        assert_eq!(m.zones()[core_mid].exterior_conductance, 0.0);
        let p = m.zone_index("Perimeter_bot_ZN_1").unwrap();
        let c = m.zone_index("Core_bottom").unwrap();
        assert!(m.conductance(p, c) > 0.0);
        assert_eq!(m.conductance(p, c), m.conductance(c, p));
        // ring neighbours and vertical stacking
        let p2 = m.zone_index("Perimeter_bot_ZN_2").unwrap();
        let p4 = m.zone_index("Perimeter_bot_ZN_4").unwrap();
        let p3 = m.zone_index("Perimeter_bot_ZN_3").unwrap();
        assert!(m.conductance(p, p2) > 0.0 && m.conductance(p, p4) > 0.0);
        assert_eq!(m.conductance(p, p3), 0.0);
        let pm1 = m.zone_index("Perimeter_mid_ZN_1").unwrap();
        let pt1 = m.zone_index("Perimeter_top_ZN_1").unwrap();
        assert!(m.conductance(p, pm1) > 0.0);
        assert_eq!(m.conductance(p, pt1), 0.0);
        assert!(m.conductance(c, core_mid) > 0.0);
        for z in m.zones().iter().filter(|z| z.name.starts_with("Perimeter")) {
            assert!(z.exterior_conductance > 0.0);
        }
    }

    #[test]
    fn hvac_examples() {
        let spec = HvacSpec::default();
        assert_eq!(hvac_power(&spec, 21.0, 20.0, 23.0), HvacFlow::default());
        let s = HvacSpec { proportional_gain: 500.0, max_heating_rate: 2000.0, ..spec };
        assert_eq!(hvac_power(&s, 15.0, 20.0, 23.0).heat_delivered, 2000.0);
        let s = HvacSpec { proportional_gain: 500.0, max_cooling_rate: 5000.0, ..spec };
        let f = hvac_power(&s, 26.0, 20.0, 24.0);
        assert_eq!(f.cool_extracted, 1000.0);
        assert_eq!(f.heat_delivered, 0.0);
        // inside the deadband below the heating setpoint
        assert_eq!(hvac_power(&spec, 19.9, 20.0, 23.0), HvacFlow::default());
    }

    #[test]
    fn electrical_power_examples() {
        let spec = HvacSpec::default();
        assert_eq!(electrical_power(&spec, 0.0, 0.0), 0.0);
        assert_eq!(electrical_power(&spec, 3000.0, 0.0), 3000.0);
        assert_eq!(electrical_power(&spec, 0.0, 3000.0), 1000.0);
    }

    #[test]
    fn balanced_single_zone_stays_put() {
        let m = single_zone(1e6, 100.0);
        let s = ZoneThermalState::uniform(1, 20.0);
        let heat = [HvacFlow { heat_delivered: 2000.0, cool_extracted: 0.0 }];
        let next = step_thermal(&m, &s, 0.0, &[0.0], &heat, 900.0).unwrap();
        assert!((next.temperatures[0] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn single_euler_step_loses_heat() {
        let m = single_zone(1e6, 100.0);
        let s = ZoneThermalState::uniform(1, 20.0);
        // one explicit step of 900 s: ΔT = 900·(−2000)/1e6
        let one_shot: f64 = 20.0 + 900.0 * (-2000.0) / 1e6;
        assert!((one_shot - 18.2).abs() < 1e-12);
        // with 60 s sub-steps the result is 15 compounded Euler steps: 20·(1 − 0.006)^15
        let next = step_thermal(&m, &s, 0.0, &[0.0], &[HvacFlow::default()], 900.0).unwrap();
        assert!((next.temperatures[0] - 20.0 * 0.994f64.powi(15)).abs() < 1e-12, "{}", next.temperatures[0]);
        assert!((next.temperatures[0] - 18.2).abs() < 0.1);
        // a 60 s step is a single Euler step
        let next = step_thermal(&m, &s, 0.0, &[0.0], &[HvacFlow::default()], 60.0).unwrap();
        assert_eq!(next.temperatures[0], 20.0 + 60.0 * (-2000.0) / 1e6);
    }

    #[test]
    fn coupled_equal_zones_unchanged() {
        let zone = |name: &str| ZoneSpec {
            name: name.into(),
            thermal_capacitance: 2e6,
            exterior_conductance: 0.0,
            internal_gain_occupied: 0.0,
            internal_gain_unoccupied: 0.0,
        };
        let m = BuildingModel::new(
            vec![zone("a"), zone("b")],
            vec![Adjacency { a: 0, b: 1, conductance: 80.0 }],
            HvacSpec::default(),
            0.0,
            OccupancySchedule::default(),
        )
        .unwrap();
        let s = ZoneThermalState::uniform(2, 21.5);
        let next = step_thermal(&m, &s, 0.0, &[0.0; 2], &[HvacFlow::default(); 2], 900.0).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn blow_up_names_zone() {
        let m = single_zone(1.0, 0.0);
        let s = ZoneThermalState::uniform(1, 20.0);
        let heat = [HvacFlow { heat_delivered: 1e6, cool_extracted: 0.0 }];
        match step_thermal(&m, &s, 0.0, &[0.0], &heat, 60.0) {
            Err(BuildingError::BlowUp { zone, .. }) => assert_eq!(zone, "z"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_models_rejected() {
        let hvac = HvacSpec::default();
        let occ = OccupancySchedule::default();
        assert!(BuildingModel::new(vec![], vec![], hvac, 0.0, occ).is_err());
        let m = single_zone(1e6, 1.0);
        let zones = m.zones().to_vec();
        assert!(BuildingModel::new(
            zones.clone(),
            vec![Adjacency { a: 0, b: 3, conductance: 1.0 }],
            hvac,
            0.0,
            occ
        )
        .is_err());
        let bad_hvac = HvacSpec { heating_cop: 0.0, ..hvac };
        assert!(BuildingModel::new(zones, vec![], bad_hvac, 0.0, occ).is_err());
    }

    #[test]
    fn shape_and_timestep_errors() {
        let m = single_zone(1e6, 1.0);
        let s = ZoneThermalState::uniform(1, 20.0);
        assert_eq!(
            step_thermal(&m, &s, 0.0, &[0.0, 0.0], &[HvacFlow::default()], 60.0),
            Err(BuildingError::Shape { expected: 1, actual: 2 })
        );
        assert_eq!(
            step_thermal(&m, &s, 0.0, &[0.0], &[HvacFlow::default()], 0.0),
            Err(BuildingError::TimeStep(0.0))
        );
    }

    #[test]
    fn gains_follow_occupancy() {
        let m = build_reference_topology();
        assert!(m.internal_gains(9.0).iter().all(|&g| g == 500.0));
        assert!(m.internal_gains(18.0).iter().all(|&g| g == 100.0));
        assert!(m.internal_gains(3.0).iter().all(|&g| g == 100.0));
    }

    proptest! {
        #[test]
        fn zone_permutation_commutes(
            seed_temps in proptest::collection::vec(10.0f64..30.0, 15),
            outdoor in -20.0f64..35.0,
            rotate in 0usize..15,
        ) {
            let m = build_reference_topology();
            let n = m.num_zones();
            let perm: Vec<usize> = (0..n).map(|i| (i + rotate) % n).collect(); // new i ← old perm[i]
            let mut inv = vec![0; n];
            for (new, &old) in perm.iter().enumerate() { inv[old] = new; }
            let zones: Vec<ZoneSpec> = perm.iter().map(|&o| m.zones()[o].clone()).collect();
            let adjacency: Vec<Adjacency> = m.adjacency().iter()
                .map(|a| Adjacency { a: inv[a.a], b: inv[a.b], conductance: a.conductance })
                .collect();
            let pm = BuildingModel::new(zones, adjacency, m.hvac, m.base_load, m.occupancy).unwrap();
            let gains = m.internal_gains(10.0);
            let hvac: Vec<HvacFlow> = seed_temps.iter()
                .map(|&t| hvac_power(&m.hvac, t, 20.0, 24.0)).collect();
            let s = ZoneThermalState { temperatures: seed_temps.clone() };
            let ps = ZoneThermalState { temperatures: perm.iter().map(|&o| seed_temps[o]).collect() };
            let pg: Vec<f64> = perm.iter().map(|&o| gains[o]).collect();
            let ph: Vec<HvacFlow> = perm.iter().map(|&o| hvac[o]).collect();
            let out = step_thermal(&m, &s, outdoor, &gains, &hvac, 900.0).unwrap();
            let pout = step_thermal(&pm, &ps, outdoor, &pg, &ph, 900.0).unwrap();
            for (new, &old) in perm.iter().enumerate() {
                prop_assert!((pout.temperatures[new] - out.temperatures[old]).abs() < 1e-9);
            }
        }

        #[test]
        fn raising_heating_setpoint_never_cools(
            temps in proptest::collection::vec(12.0f64..28.0, 15),
            outdoor in -25.0f64..35.0,
            sp in 15.0f64..21.0,
            bump in 0.0f64..1.0,
        ) {
            let m = build_reference_topology();
            let gains = m.internal_gains(12.0);
            let s = ZoneThermalState { temperatures: temps.clone() };
            let run = |h: f64| {
                let flows: Vec<HvacFlow> = temps.iter().map(|&t| hvac_power(&m.hvac, t, h, 26.0)).collect();
                step_thermal(&m, &s, outdoor, &gains, &flows, 900.0).unwrap()
            };
            let lo = run(sp);
            let hi = run(sp + bump);
            for (a, b) in lo.temperatures.iter().zip(&hi.temperatures) {
                prop_assert!(b + 1e-12 >= *a);
            }
        }
    }
}
