// Writes a synthetic typical-year EPW file for one of the built-in climate
// profiles and reads it back.
//
// ```text
// cargo run --example generate_weather -- toronto data/toronto_synthetic.epw
// ```

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use hvac_drl::runtime::SYNTHETIC_WEATHER_SEED;
use hvac_drl::weather::synthetic::{generate_epw, ClimateProfile};
use hvac_drl::weather::WeatherSeries;

pub fn write_preset(preset: &str, path: &Path) -> Result<WeatherSeries> {
    let profile = ClimateProfile::preset(preset).ok_or_else(|| anyhow!("unknown preset {preset}"))?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, generate_epw(&profile, SYNTHETIC_WEATHER_SEED))?;
    Ok(WeatherSeries::from_path(path)?)
}

pub fn run_example() -> Result<()> {
    let dir = tempfile::tempdir()?;
    for preset in ["toronto", "tampa", "san_francisco"] {
        let series = write_preset(preset, &dir.path().join(format!("{preset}.epw")))?;
        let temps: Vec<f64> = series.records().iter().map(|r| r.dry_bulb).collect();
        let mean = temps.iter().sum::<f64>() / temps.len() as f64;
        let min = temps.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = temps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("{preset:>14}: {} hours, mean {mean:5.1} C, range [{min:5.1}, {max:5.1}] C", series.len());
    }
    Ok(())
}

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.as_slice() {
        [preset, out] => {
            let series = write_preset(preset, &PathBuf::from(out))?;
            println!("wrote {out} ({} records, {})", series.len(), series.location());
            Ok(())
        }
        [] => run_example(),
        _ => Err(anyhow!("usage: generate_weather [PRESET OUT.epw]")),
    }
}
