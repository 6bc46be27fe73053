//! Deterministic synthetic typical-year weather written in EPW layout.
//!
//! Dry-bulb = annual sinusoid + diurnal sinusoid (peak 15:00) + AR(1)
//! synoptic noise. Relative humidity peaks before dawn. Dew-point is the
//! Magnus inversion of (dry-bulb, RH), so dew ≤ dry holds for every row.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const DAYS_IN_MONTH: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

#[derive(Debug, Clone, PartialEq)]
pub struct ClimateProfile {
    pub name: String,
    pub state: String,
    pub country: String,
    pub wmo: String,
    pub latitude: f64,
    pub longitude: f64,
    pub timezone: f64,
    pub elevation: f64,
    /// Annual mean dry-bulb, °C.
    pub annual_mean: f64,
    /// Half the difference between warmest and coldest monthly mean, °C.
    pub annual_amplitude: f64,
    /// Day of year (0-based) of the coldest daily mean.
    pub coldest_day: f64,
    /// Half the mean diurnal range, °C.
    pub diurnal_amplitude: f64,
    pub mean_relative_humidity: f64,
    pub diurnal_rh_amplitude: f64,
    /// Stationary standard deviation of the synoptic noise, °C.
    pub synoptic_std: f64,
    /// Hour-to-hour autocorrelation of the synoptic noise.
    pub synoptic_persistence: f64,
}

impl ClimateProfile {
    /// Cold-winter, warm-summer continental climate (Toronto-like normals).
    pub fn toronto() -> Self {
        Self {
            name: "Toronto".into(),
            state: "ON".into(),
            country: "CAN".into(),
            wmo: "716240".into(),
            latitude: 43.67,
            longitude: -79.63,
            timezone: -5.0,
            elevation: 173.0,
            annual_mean: 8.2,
            annual_amplitude: 14.0,
            coldest_day: 20.0,
            diurnal_amplitude: 4.5,
            mean_relative_humidity: 72.0,
            diurnal_rh_amplitude: 12.0,
            synoptic_std: 3.0,
            synoptic_persistence: 0.97,
        }
    }

    /// Hot-humid subtropical climate (Tampa-like normals).
    pub fn tampa() -> Self {
        Self {
            name: "Tampa".into(),
            state: "FL".into(),
            country: "USA".into(),
            wmo: "722110".into(),
            latitude: 27.97,
            longitude: -82.53,
            timezone: -5.0,
            elevation: 3.0,
            annual_mean: 22.9,
            annual_amplitude: 6.3,
            coldest_day: 15.0,
            diurnal_amplitude: 4.5,
            mean_relative_humidity: 75.0,
            diurnal_rh_amplitude: 15.0,
            synoptic_std: 1.5,
            synoptic_persistence: 0.96,
        }
    }

    /// Mild marine climate (San Francisco-like normals).
    pub fn san_francisco() -> Self {
        Self {
            name: "San Francisco".into(),
            state: "CA".into(),
            country: "USA".into(),
            wmo: "724940".into(),
            latitude: 37.62,
            longitude: -122.4,
            timezone: -8.0,
            elevation: 2.0,
            annual_mean: 14.2,
            annual_amplitude: 3.3,
            coldest_day: 10.0,
            diurnal_amplitude: 3.5,
            mean_relative_humidity: 75.0,
            diurnal_rh_amplitude: 10.0,
            synoptic_std: 1.5,
            synoptic_persistence: 0.95,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "toronto" => Some(Self::toronto()),
            "tampa" => Some(Self::tampa()),
            "san_francisco" | "san-francisco" | "sanfrancisco" => Some(Self::san_francisco()),
            _ => None,
        }
    }
}

fn dew_point(dry_bulb: f64, rh: f64) -> f64 {
    const B: f64 = 17.62;
    const C: f64 = 243.12;
    let g = (rh / 100.0).ln() + B * dry_bulb / (C + dry_bulb);
    C * g / (B - g)
}

/// Generates 8760 hourly rows (non-leap year) as EPW text.
pub fn generate_epw(profile: &ClimateProfile, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = profile.synoptic_persistence;
    let innovation = Normal::new(0.0, profile.synoptic_std * (1.0 - phi * phi).sqrt())
        .expect("finite std");
    let rh_noise = Normal::new(0.0, 4.0).expect("finite std");
    let mut synoptic = 0.0;

    let mut out = String::with_capacity(8760 * 120);
    let p = profile;
    let _ = writeln!(
        out,
        "LOCATION,{},{},{},Synthetic typical year,{},{:.2},{:.2},{:.1},{:.1}",
        p.name, p.state, p.country, p.wmo, p.latitude, p.longitude, p.timezone, p.elevation
    );
    out.push_str("DESIGN CONDITIONS,0\n");
    out.push_str("TYPICAL/EXTREME PERIODS,0\n");
    out.push_str("GROUND TEMPERATURES,0\n");
    out.push_str("HOLIDAYS/DAYLIGHT SAVINGS,No,0,0,0\n");
    out.push_str("COMMENTS 1,Synthetic weather: annual and diurnal harmonics with AR(1) synoptic noise\n");
    let _ = writeln!(out, "COMMENTS 2,generator seed {seed}");
    out.push_str("DATA PERIODS,1,1,Data,Sunday, 1/ 1,12/31\n");

    let mut day_of_year = 0u32;
    for (m, &days) in DAYS_IN_MONTH.iter().enumerate() {
        for day in 1..=days {
            for hour in 1..=24u32 {
                let hour_mid = hour as f64 - 0.5;
                let seasonal = p.annual_mean
                    - p.annual_amplitude
                        * (2.0 * PI * (day_of_year as f64 + hour_mid / 24.0 - p.coldest_day) / 365.0).cos();
                let diurnal = p.diurnal_amplitude * (2.0 * PI * (hour_mid - 15.0) / 24.0).cos();
                synoptic = phi * synoptic + innovation.sample(&mut rng);
                let dry = seasonal + diurnal + synoptic;
                let rh = (p.mean_relative_humidity
                    + p.diurnal_rh_amplitude * (2.0 * PI * (hour_mid - 5.0) / 24.0).cos()
                    + rh_noise.sample(&mut rng))
                .clamp(15.0, 100.0)
                .round();
                let dry = (dry * 10.0).round() / 10.0;
                let dew = ((dew_point(dry, rh) * 10.0).round() / 10.0).min(dry);
                let _ = writeln!(
                    out,
                    "1999,{},{},{},60,?9?9?9?9E0?9?9?9?9*9?9?9?9?9?9?9?9?9?9*_*9*9*9*9*9,{:.1},{:.1},{:.0},101325,0,0,300,0,0,0,0,0,0,0,180,3.0,5,5,24.1,77777,9,999999999,10,0.1,0,88,0.2,0.0,0.0",
                    m + 1,
                    day,
                    hour,
                    dry,
                    dew,
                    rh
                );
            }
            day_of_year += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weather::parse_epw;

    #[test]
    fn toronto_like_year_parses_with_expected_shape() {
        let text = generate_epw(&ClimateProfile::toronto(), 7);
        let series = parse_epw(&text).unwrap();
        assert_eq!(series.len(), 8760);
        let monthly = |month: u8| {
            let v: Vec<f64> = series
                .records()
                .iter()
                .filter(|r| r.timestamp.month == month)
                .map(|r| r.dry_bulb)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(monthly(1) < -2.0, "January mean {}", monthly(1));
        assert!(monthly(7) > 18.0, "July mean {}", monthly(7));
        for r in series.records() {
            assert!(r.dew_point <= r.dry_bulb);
            assert!(r.wet_bulb <= r.dry_bulb);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = ClimateProfile::tampa();
        assert_eq!(generate_epw(&p, 3), generate_epw(&p, 3));
        assert_ne!(generate_epw(&p, 3), generate_epw(&p, 4));
    }
}
