// Reads the bundled EPW file and prints monthly outdoor conditions.
//
// ```text
// cargo run --example parse_weather [-- path/to/file.epw]
// ```

use anyhow::Result;
use hvac_drl::weather::WeatherSeries;

pub fn summarize(path: &str) -> Result<Vec<(u8, f64, f64)>> {
    let series = WeatherSeries::from_path(path)?;
    println!("{}: {} hourly records", series.location(), series.len());
    let mut months = Vec::new();
    for month in 1..=12u8 {
        let rows: Vec<_> = series.records().iter().filter(|r| r.timestamp.month == month).collect();
        if rows.is_empty() {
            continue;
        }
        let n = rows.len() as f64;
        let dry = rows.iter().map(|r| r.dry_bulb).sum::<f64>() / n;
        let wet = rows.iter().map(|r| r.wet_bulb).sum::<f64>() / n;
        println!("  month {month:2}: dry bulb {dry:5.1} C, wet bulb {wet:5.1} C");
        months.push((month, dry, wet));
    }
    Ok(months)
}

pub fn run_example() -> Result<()> {
    summarize(concat!(env!("CARGO_MANIFEST_DIR"), "/data/toronto_synthetic.epw"))?;
    Ok(())
}

fn main() -> Result<()> {
    match std::env::args().nth(1) {
        Some(path) => summarize(&path).map(|_| ()),
        None => run_example(),
    }
}
