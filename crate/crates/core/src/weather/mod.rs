//! EPW weather ingestion and per-timestep outdoor conditions.
//!
//! Only dry-bulb, dew-point and relative humidity are consumed; wet-bulb is
//! derived with Stull's empirical fit. Records are hourly and the series is
//! treated as cyclic when sampled (typical-year files wrap Dec 31 → Jan 1).

pub mod synthetic;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of header lines preceding the data section of an EPW file.
pub const EPW_HEADER_LINES: usize = 8;
/// Minimum number of comma separated fields in a data row.
pub const EPW_MIN_FIELDS: usize = 10;
/// Seconds between consecutive EPW records.
pub const RECORD_INTERVAL_S: f64 = 3600.0;

const FIELD_DRY_BULB: usize = 6;
const FIELD_DEW_POINT: usize = 7;
const FIELD_RELATIVE_HUMIDITY: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum WeatherError {
    #[error("malformed EPW header: {0}")]
    Format(String),
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("EPW file contains no data rows")]
    EmptySeries,
    #[error("line {line}: record is not one hour after the previous record")]
    Discontinuity { line: usize },
    #[error("relative humidity {0}% outside [0, 100]")]
    Domain(f64),
    #[error("simulation time {time_s} s outside the weather span [0, {span_s}) s")]
    OutOfRange { time_s: f64, span_s: f64 },
    #[error("cannot read weather file {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamp {
    pub year: i32,
    pub month: u8,
    pub day: u8,
    /// EPW convention: 1..=24, the hour ending at this record.
    pub hour: u8,
    pub minute: u8,
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:04}-{:02}-{:02} {:02}:{:02}",
            self.year, self.month, self.day, self.hour, self.minute
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub timestamp: Timestamp,
    /// °C
    pub dry_bulb: f64,
    /// °C
    pub dew_point: f64,
    /// %, within [0, 100]
    pub relative_humidity: f64,
    /// °C
    pub wet_bulb: f64,
}

/// Immutable hourly weather series; share it behind an `Arc`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    location: String,
    records: Vec<WeatherRecord>,
}

impl WeatherSeries {
    pub fn location(&self) -> &str {
        &self.location
    }

    pub fn records(&self) -> &[WeatherRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Length of the half-open sampling interval in seconds.
    pub fn span_s(&self) -> f64 {
        self.records.len() as f64 * RECORD_INTERVAL_S
    }

    /// Number of whole days covered.
    pub fn days(&self) -> usize {
        self.records.len() / 24
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, WeatherError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| WeatherError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        parse_epw(&text)
    }

    /// Outdoor conditions at `sim_time_s` seconds after the first record.
    pub fn sample(&self, sim_time_s: f64) -> Result<WeatherRecord, WeatherError> {
        sample(self, sim_time_s)
    }

    /// Like [`sample`](Self::sample) but wraps `sim_time_s` into the span first.
    pub fn sample_wrapped(&self, sim_time_s: f64) -> WeatherRecord {
        let span = self.span_s();
        let t = sim_time_s.rem_euclid(span);
        sample(self, t).expect("wrapped time lies inside the span")
    }
}

/// Parses EPW text. The location is the second field of the `LOCATION` line.
pub fn parse_epw(raw_text: &str) -> Result<WeatherSeries, WeatherError> {
    let mut lines = raw_text.lines().enumerate();
    let mut location = None;
    for expected in 0..EPW_HEADER_LINES {
        let (idx, line) = lines.next().ok_or_else(|| {
            WeatherError::Format(format!(
                "expected {EPW_HEADER_LINES} header lines, file ends after {expected}"
            ))
        })?;
        if looks_like_data_row(line) {
            return Err(WeatherError::Format(format!(
                "expected {EPW_HEADER_LINES} header lines, found data on line {}",
                idx + 1
            )));
        }
        if expected == 0 {
            let mut fields = line.split(',');
            let keyword = fields.next().unwrap_or("").trim();
            if !keyword.eq_ignore_ascii_case("LOCATION") {
                return Err(WeatherError::Format(format!(
                    "first line must start with LOCATION, found {keyword:?}"
                )));
            }
            let name = fields.next().map(str::trim).unwrap_or("");
            if name.is_empty() {
                return Err(WeatherError::Format("LOCATION line has no name".into()));
            }
            location = Some(name.to_string());
        }
    }

    let mut records: Vec<WeatherRecord> = Vec::with_capacity(8784);
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_row(line, line_no)?;
        if let Some(prev) = records.last() {
            if !is_next_hour(&prev.timestamp, &record.timestamp) {
                return Err(WeatherError::Discontinuity { line: line_no });
            }
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(WeatherError::EmptySeries);
    }
    Ok(WeatherSeries {
        location: location.expect("header parsed"),
        records,
    })
}

fn looks_like_data_row(line: &str) -> bool {
    line.split(',')
        .next()
        .map(|f| f.trim().parse::<i32>().is_ok())
        .unwrap_or(false)
}

fn parse_row(line: &str, line_no: usize) -> Result<WeatherRecord, WeatherError> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() < EPW_MIN_FIELDS {
        return Err(WeatherError::Row {
            line: line_no,
            message: format!("expected at least {EPW_MIN_FIELDS} fields, found {}", fields.len()),
        });
    }
    let int = |i: usize, name: &str| -> Result<i64, WeatherError> {
        fields[i].parse::<i64>().map_err(|_| WeatherError::Row {
            line: line_no,
            message: format!("{name} field {:?} is not an integer", fields[i]),
        })
    };
    let real = |i: usize, name: &str| -> Result<f64, WeatherError> {
        fields[i]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| WeatherError::Row {
                line: line_no,
                message: format!("{name} field {:?} is not a number", fields[i]),
            })
    };
    let timestamp = Timestamp {
        year: int(0, "year")? as i32,
        month: int(1, "month")? as u8,
        day: int(2, "day")? as u8,
        hour: int(3, "hour")? as u8,
        minute: int(4, "minute")? as u8,
    };
    if !(1..=12).contains(&timestamp.month) || !(1..=31).contains(&timestamp.day) || !(1..=24).contains(&timestamp.hour) {
        return Err(WeatherError::Row {
            line: line_no,
            message: format!("invalid date/hour {timestamp}"),
        });
    }
    let dry_bulb = real(FIELD_DRY_BULB, "dry-bulb")?;
    let dew_point = real(FIELD_DEW_POINT, "dew-point")?;
    let rh = real(FIELD_RELATIVE_HUMIDITY, "relative humidity")?;
    if !(0.0..=100.0).contains(&rh) {
        return Err(WeatherError::Row {
            line: line_no,
            message: format!("relative humidity {rh} outside [0, 100]"),
        });
    }
    let wet_bulb = wet_bulb(dry_bulb, rh).map_err(|e| WeatherError::Row {
        line: line_no,
        message: e.to_string(),
    })?;
    Ok(WeatherRecord {
        timestamp,
        dry_bulb,
        dew_point,
        relative_humidity: rh,
        wet_bulb,
    })
}

fn days_in_month(month: u8) -> u8 {
    match month {
        2 => 29,
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    }
}

fn is_next_hour(prev: &Timestamp, next: &Timestamp) -> bool {
    if prev.hour < 24 {
        return next.month == prev.month && next.day == prev.day && next.hour == prev.hour + 1;
    }
    if next.hour != 1 {
        return false;
    }
    let same_month_next_day = next.month == prev.month && next.day == prev.day + 1;
    // Feb 28 → Mar 1 is accepted alongside Feb 28 → Feb 29 (leap rows used as-is).
    let month_rollover = next.day == 1
        && next.month == prev.month % 12 + 1
        && (prev.day == days_in_month(prev.month) || (prev.month == 2 && prev.day == 28));
    same_month_next_day || month_rollover
}

/// Lower bound of relative humidity for which Stull's fit is validated.
pub const STULL_RH_MIN: f64 = 5.0;
/// Upper bound of relative humidity for which Stull's fit is validated.
pub const STULL_RH_MAX: f64 = 99.0;

/// Whether `relative_humidity` lies in the validated range of [`wet_bulb`].
pub fn wet_bulb_in_valid_range(relative_humidity: f64) -> bool {
    (STULL_RH_MIN..=STULL_RH_MAX).contains(&relative_humidity)
}

/// Wet-bulb temperature (°C) from Stull's empirical fit, capped at the dry-bulb.
///
/// Outside `5 % ≤ rh ≤ 99 %` the value is an extrapolation; check with
/// [`wet_bulb_in_valid_range`].
pub fn wet_bulb(dry_bulb: f64, relative_humidity: f64) -> Result<f64, WeatherError> {
    if !(0.0..=100.0).contains(&relative_humidity) || !relative_humidity.is_finite() {
        return Err(WeatherError::Domain(relative_humidity));
    }
    let t = dry_bulb;
    let rh = relative_humidity;
    let tw = t * (0.151977 * (rh + 8.313659).sqrt()).atan() + (t + rh).atan()
        - (rh - 1.676331).atan()
        + 0.00391838 * rh.powf(1.5) * (0.023101 * rh).atan()
        - 4.686035;
    Ok(tw.min(dry_bulb))
}

/// Linear interpolation between the bracketing hourly records.
///
/// The valid interval is `[0, span)`; the last hour interpolates towards the
/// first record.
pub fn sample(series: &WeatherSeries, sim_time_s: f64) -> Result<WeatherRecord, WeatherError> {
    let span_s = series.span_s();
    if !(0.0..span_s).contains(&sim_time_s) {
        return Err(WeatherError::OutOfRange {
            time_s: sim_time_s,
            span_s,
        });
    }
    let n = series.records.len();
    let pos = sim_time_s / RECORD_INTERVAL_S;
    let i = (pos.floor() as usize).min(n - 1);
    let frac = pos - i as f64;
    let a = &series.records[i];
    if frac == 0.0 {
        return Ok(*a);
    }
    let b = &series.records[(i + 1) % n];
    let lerp = |x: f64, y: f64| x + (y - x) * frac;
    let mut timestamp = a.timestamp;
    timestamp.minute = (frac * 60.0).floor() as u8;
    Ok(WeatherRecord {
        timestamp,
        dry_bulb: lerp(a.dry_bulb, b.dry_bulb),
        dew_point: lerp(a.dew_point, b.dew_point),
        relative_humidity: lerp(a.relative_humidity, b.relative_humidity).clamp(0.0, 100.0),
        wet_bulb: lerp(a.wet_bulb, b.wet_bulb),
    })
}
