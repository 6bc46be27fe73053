// Drives the 15-zone RC model directly for a few July days with fixed
// setpoints and prints zone temperatures and HVAC power at noon.

use anyhow::Result;
use hvac_drl::building::{
    build_reference_topology, electrical_power, hvac_power, step_thermal, ZoneThermalState,
};
use hvac_drl::weather::WeatherSeries;

const DT: f64 = 900.0;

pub fn simulate(days: usize, heat_sp: f64, cool_sp: f64) -> Result<ZoneThermalState> {
    let weather = WeatherSeries::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/data/toronto_synthetic.epw"))?;
    let model = build_reference_topology();
    let spec = model.hvac;
    let start = 181.0 * 86400.0;
    let mut state = ZoneThermalState::uniform(model.num_zones(), 22.0);
    let steps_per_day = (86400.0 / DT) as usize;
    for step in 0..days * steps_per_day {
        let t = start + step as f64 * DT;
        let outdoor = weather.sample(t)?.dry_bulb;
        let hour = (t % 86400.0) / 3600.0;
        let gains = model.internal_gains(hour);
        let hvac: Vec<_> = state
            .temperatures
            .iter()
            .map(|&z| hvac_power(&spec, z, heat_sp, cool_sp))
            .collect();
        if step % steps_per_day == 48 {
            let kw: f64 = hvac
                .iter()
                .map(|f| electrical_power(&spec, f.heat_delivered, f.cool_extracted))
                .sum::<f64>()
                / 1000.0;
            let (lo, hi) = state
                .temperatures
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            println!(
                "day {} 12:00  outdoor {outdoor:5.1} C  zones [{lo:5.2}, {hi:5.2}] C  hvac {kw:5.2} kW",
                step / steps_per_day + 1
            );
        }
        state = step_thermal(&model, &state, outdoor, &gains, &hvac, DT)?;
    }
    Ok(state)
}

pub fn run_example() -> Result<()> {
    let model = build_reference_topology();
    println!("{} zones, {} couplings", model.num_zones(), model.adjacency().len());
    simulate(3, 20.0, 22.5)?;
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
