//! Hourly capacity-factor tables: CSV ingestion and a seeded synthetic
//! generator used as the default fixture.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, TimeZone, Timelike, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Capacity factors per hour for onshore wind and solar.
#[derive(Clone, Debug, PartialEq)]
pub struct WeatherTable {
    pub timestamps: Vec<DateTime<Utc>>,
    pub onwind: Vec<f64>,
    pub solar: Vec<f64>,
    /// Values pulled back into `[0, 1]` while loading.
    pub clipped: usize,
}

#[derive(Debug, Deserialize)]
struct Row {
    timestamp: String,
    onwind: f64,
    solar: f64,
}

impl WeatherTable {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let table = Self::parse(reader)?;
        table.check_hourly()?;
        Ok(table)
    }

    /// Reads a table saved with [`WeatherTable::write`]. Skips the continuity
    /// check, since a saved table may join non-adjacent weather years.
    pub fn read_saved(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Weather(format!("{}: {e}", path.display())))?;
        Self::parse(file)
    }

    fn parse<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["timestamp", "onwind", "solar"] {
            return Err(Error::Weather(format!(
                "expected header `timestamp,onwind,solar`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut table = WeatherTable {
            timestamps: Vec::new(),
            onwind: Vec::new(),
            solar: Vec::new(),
            clipped: 0,
        };
        for (i, rec) in rdr.deserialize::<Row>().enumerate() {
            // Header is line 1.
            let line = i + 2;
            let row = rec.map_err(|e| Error::Weather(format!("malformed row at line {line}: {e}")))?;
            let ts = DateTime::parse_from_rfc3339(row.timestamp.trim())
                .map_err(|e| Error::Weather(format!("bad timestamp at line {line}: {e}")))?
                .with_timezone(&Utc);
            let mut clip = |v: f64| -> Result<f64> {
                if !v.is_finite() {
                    return Err(Error::Weather(format!("non-finite capacity factor at line {line}")));
                }
                let c = v.clamp(0.0, 1.0);
                if c != v {
                    table.clipped += 1;
                }
                Ok(c)
            };
            let (w, s) = (clip(row.onwind)?, clip(row.solar)?);
            table.timestamps.push(ts);
            table.onwind.push(w);
            table.solar.push(s);
        }
        if table.clipped > 0 {
            log::warn!("clipped {} capacity factors into [0, 1]", table.clipped);
        }
        Ok(table)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Weather(format!("{}: {e}", path.display())))?;
        Self::from_reader(file)
    }

    fn check_hourly(&self) -> Result<()> {
        let mut missing = Vec::new();
        for (i, pair) in self.timestamps.windows(2).enumerate() {
            let step = pair[1] - pair[0];
            if step == Duration::hours(1) {
                continue;
            }
            if step <= Duration::zero() || step.num_seconds() % 3600 != 0 {
                return Err(Error::Weather(format!(
                    "misaligned resolution between rows {} and {} ({} then {})",
                    i + 2,
                    i + 3,
                    pair[0].to_rfc3339(),
                    pair[1].to_rfc3339()
                )));
            }
            let mut t = pair[0] + Duration::hours(1);
            while t < pair[1] {
                missing.push(t.to_rfc3339());
                t += Duration::hours(1);
            }
        }
        if !missing.is_empty() {
            return Err(Error::Weather(format!("missing hours: {}", missing.join(", "))));
        }
        Ok(())
    }

    pub fn write<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp", "onwind", "solar"])?;
        for i in 0..self.len() {
            w.write_record([
                self.timestamps[i].to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                self.onwind[i].to_string(),
                self.solar[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rows `[start, start + hours)`, erroring when not fully covered.
    pub fn window(&self, start: DateTime<Utc>, hours: usize) -> Result<WeatherTable> {
        let first = self
            .timestamps
            .iter()
            .position(|t| *t == start)
            .ok_or_else(|| Error::Weather(format!("window start {} not in table", start.to_rfc3339())))?;
        if first + hours > self.len() {
            let end = start + Duration::hours(hours as i64);
            return Err(Error::Weather(format!(
                "table ends at {} before window end {}",
                self.timestamps.last().map(|t| t.to_rfc3339()).unwrap_or_default(),
                end.to_rfc3339()
            )));
        }
        let r = first..first + hours;
        Ok(WeatherTable {
            timestamps: self.timestamps[r.clone()].to_vec(),
            onwind: self.onwind[r.clone()].to_vec(),
            solar: self.solar[r].to_vec(),
            clipped: 0,
        })
    }

    pub fn availability<T: Scalar>(&self) -> (Vec<T>, Vec<T>) {
        (
            self.onwind.iter().map(|v| T::lit(*v)).collect(),
            self.solar.iter().map(|v| T::lit(*v)).collect(),
        )
    }

    /// Concatenation of several tables, e.g. individual weather years.
    pub fn concat(parts: &[WeatherTable]) -> WeatherTable {
        let mut out = WeatherTable {
            timestamps: Vec::new(),
            onwind: Vec::new(),
            solar: Vec::new(),
            clipped: 0,
        };
        for p in parts {
            out.timestamps.extend(&p.timestamps);
            out.onwind.extend(&p.onwind);
            out.solar.extend(&p.solar);
            out.clipped += p.clipped;
        }
        out
    }
}

/// Aligns a table to `snapshots`, which must all be present.
pub fn load_weather(path: &Path, snapshots: &[DateTime<Utc>]) -> Result<WeatherTable> {
    align(&WeatherTable::from_path(path)?, snapshots)
}

pub fn align(table: &WeatherTable, snapshots: &[DateTime<Utc>]) -> Result<WeatherTable> {
    let index: BTreeMap<_, _> = table.timestamps.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let mut out = WeatherTable {
        timestamps: Vec::with_capacity(snapshots.len()),
        onwind: Vec::with_capacity(snapshots.len()),
        solar: Vec::with_capacity(snapshots.len()),
        clipped: table.clipped,
    };
    let mut missing = Vec::new();
    for s in snapshots {
        match index.get(s) {
            Some(&i) => {
                out.timestamps.push(*s);
                out.onwind.push(table.onwind[i]);
                out.solar.push(table.solar[i]);
            }
            None => missing.push(s.to_rfc3339()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Weather(format!("no weather for: {}", missing.join(", "))));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    /// Mean wind capacity factor.
    pub wind_target: f64,
    /// Mean solar capacity factor.
    pub solar_target: f64,
    /// Relative winter/summer swing of wind output.
    pub seasonal_wind_amplitude: f64,
    /// Strength of the daily solar cycle relative to a cloud-free sky.
    pub diurnal_solar_amplitude: f64,
    /// Standard deviation of the weather innovations.
    pub noise_scale: f64,
    /// Degrees north, used for the solar geometry.
    pub latitude: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            wind_target: 0.21,
            solar_target: 0.12,
            seasonal_wind_amplitude: 0.35,
            diurnal_solar_amplitude: 1.0,
            noise_scale: 1.0,
            latitude: 51.0,
        }
    }
}

fn year_rng(seed: u64, year: i32) -> ChaCha8Rng {
    let mix = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((year as i64 as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    ChaCha8Rng::seed_from_u64(mix)
}

/// Multiplier `k` such that `mean(min(k·x, 1)) = target`, by bisection.
fn calibrate(raw: &[f64], target: f64) -> f64 {
    let mean = |k: f64| raw.iter().map(|x| (k * x).min(1.0)).sum::<f64>() / raw.len() as f64;
    let (mut lo, mut hi) = (0.0, 1.0);
    while mean(hi) < target && hi < 1e6 {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One calendar year of hourly weather.
///
/// Wind is a persistent log-normal process with a winter peak; solar follows
/// the sun's elevation at noon UTC longitude, damped by a daily cloudiness
/// process, so it is exactly zero between sunset and sunrise. Each year draws
/// from its own stream, so a year's weather does not depend on which other
/// years are requested.
fn synth_year(seed: u64, year: i32, params: &SynthParams) -> WeatherTable {
    let mut rng = year_rng(seed, year);
    let start = Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).unwrap();
    let end = Utc.with_ymd_and_hms(year + 1, 1, 1, 0, 0, 0).unwrap();
    let n = (end - start).num_hours() as usize;
    let timestamps: Vec<_> = (0..n).map(|h| start + Duration::hours(h as i64)).collect();
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    // Year-to-year variation of the resource, a few percent.
    let year_factor_w = 1.0 + 0.02 * params.noise_scale * normal();
    let year_factor_s = 1.0 + 0.02 * params.noise_scale * normal();

    let phi: f64 = 0.97;
    let sigma = 0.6 * params.noise_scale * (1.0 - phi * phi).sqrt();
    let mut z = 0.0;
    let mut wind_raw = Vec::with_capacity(n);
    let mut cloud = 0.0;
    let mut solar_raw = Vec::with_capacity(n);
    let lat = params.latitude.to_radians();
    for t in &timestamps {
        z = phi * z + sigma * normal();
        let doy = t.ordinal0() as f64;
        let season = 1.0 + params.seasonal_wind_amplitude * (2.0 * PI * doy / 365.25).cos();
        wind_raw.push(season * (z - 0.5 * (0.6 * params.noise_scale).powi(2)).exp());

        if t.hour() == 0 {
            cloud = 0.6 * cloud + 0.8 * params.noise_scale * normal();
        }
        let decl = (-23.44_f64).to_radians() * (2.0 * PI * (doy + 10.0) / 365.25).cos();
        let hour_angle = (t.hour() as f64 + 0.5 - 12.0) * PI / 12.0;
        let elev = lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos();
        let clear = elev.max(0.0).powf(params.diurnal_solar_amplitude.max(1e-6));
        let clearness = 1.0 / (1.0 + (-(cloud + 0.5)).exp());
        solar_raw.push(clear * clearness);
    }
    let kw = calibrate(&wind_raw, (params.wind_target * year_factor_w).clamp(0.0, 0.95));
    let ks = calibrate(&solar_raw, (params.solar_target * year_factor_s).clamp(0.0, 0.5));
    WeatherTable {
        timestamps,
        onwind: wind_raw.iter().map(|x| (kw * x).min(1.0)).collect(),
        solar: solar_raw.iter().map(|x| (ks * x).min(1.0)).collect(),
        clipped: 0,
    }
}

/// Deterministic synthetic weather for the given calendar years, concatenated
/// in the order given.
pub fn synth_weather(seed: u64, years: &[i32], params: &SynthParams) -> Result<WeatherTable> {
    if years.is_empty() {
        return Err(Error::Weather("at least one year is required".into()));
    }
    let parts: Vec<_> = years.iter().map(|y| synth_year(seed, *y, params)).collect();
    Ok(WeatherTable::concat(&parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_of(rows: &[(&str, f64, f64)]) -> String {
        let mut s = String::from("timestamp,onwind,solar\n");
        for (t, w, p) in rows {
            s.push_str(&format!("{t},{w},{p}\n"));
        }
        s
    }

    #[test]
    fn day_file_loads() {
        let rows: Vec<String> = (0..24).map(|h| format!("2020-01-01T{h:02}:00:00Z")).collect();
        let data: Vec<_> = rows.iter().map(|t| (t.as_str(), 0.3, 0.0)).collect();
        let table = WeatherTable::from_reader(csv_of(&data).as_bytes()).unwrap();
        assert_eq!(table.len(), 24);
        let snaps = table.timestamps.clone();
        let aligned = align(&table, &snaps).unwrap();
        assert_eq!(aligned.onwind.len(), 24);
        assert_eq!(aligned.solar.len(), 24);
    }

    #[test]
    fn clipping_counted() {
        let data = [("2020-01-01T00:00:00Z", 1.03, 0.0), ("2020-01-01T01:00:00Z", 0.5, 0.1)];
        let table = WeatherTable::from_reader(csv_of(&data).as_bytes()).unwrap();
        assert_eq!(table.onwind[0], 1.0);
        assert_eq!(table.clipped, 1);
    }

    #[test]
    fn gap_names_timestamp() {
        let data = [("2020-01-01T00:00:00Z", 0.1, 0.0), ("2020-01-01T02:00:00Z", 0.1, 0.0)];
        let err = WeatherTable::from_reader(csv_of(&data).as_bytes()).unwrap_err().to_string();
        assert!(err.contains("2020-01-01T01:00:00+00:00"), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "timestamp,onwind,solar\n2020-01-01T00:00:00Z,0.1,0.0\n2020-01-01T01:00:00Z,abc,0.0\n";
        let err = WeatherTable::from_reader(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn half_hour_step_is_misaligned() {
        let data = [("2020-01-01T00:00:00Z", 0.1, 0.0), ("2020-01-01T00:30:00Z", 0.1, 0.0)];
        let err = WeatherTable::from_reader(csv_of(&data).as_bytes()).unwrap_err().to_string();
        assert!(err.contains("misaligned"), "{err}");
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = synth_weather(1, &[2011], &SynthParams::default()).unwrap();
        let b = synth_weather(1, &[2011], &SynthParams::default()).unwrap();
        assert_eq!(a, b);
        let mut x = Vec::new();
        let mut y = Vec::new();
        a.write(&mut x).unwrap();
        b.write(&mut y).unwrap();
        assert_eq!(x, y);
        let c = synth_weather(2, &[2011], &SynthParams::default()).unwrap();
        assert_ne!(a.onwind, c.onwind);
    }

    #[test]
    fn synthetic_means_and_night() {
        let table = synth_weather(1, &[2001], &SynthParams::default()).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&table.onwind) - 0.21).abs() <= 0.01, "{}", mean(&table.onwind));
        assert!((mean(&table.solar) - 0.12).abs() <= 0.01, "{}", mean(&table.solar));
        for (t, s) in table.timestamps.iter().zip(&table.solar) {
            if t.hour() == 0 {
                assert_eq!(*s, 0.0);
            }
        }
        assert!(table.onwind.iter().chain(&table.solar).all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn year_streams_are_independent() {
        let both = synth_weather(7, &[1990, 1991], &SynthParams::default()).unwrap();
        let second = synth_weather(7, &[1991], &SynthParams::default()).unwrap();
        assert_eq!(&both.onwind[8760..], &second.onwind[..]);
    }

    #[test]
    fn csv_round_trip() {
        let table = synth_weather(3, &[2020], &SynthParams::default()).unwrap();
        let mut buf = Vec::new();
        table.write(&mut buf).unwrap();
        let back = WeatherTable::from_reader(buf.as_slice()).unwrap();
        assert_eq!(back, table);
    }
}
