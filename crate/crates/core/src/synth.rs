//! Seeded generator of station files in the PVOD layout.
//!
//! Each station sits at a latitude with a south-facing array at some tilt.
//! Clear-sky irradiance follows the sun's elevation; a smooth per-day cloud
//! process attenuates it and shifts the diffuse share. Measured features are
//! noisy readings of that weather, and power is computed from the measured
//! irradiance transposed onto the array plane, derated by a module
//! temperature that lags the irradiance, then scaled by the array size.

use crate::data::{
    write_metadata_csv, write_station_csv, DataError, PipelineConfig, StationMetadata, StationRow,
    StationTable, SLOTS_PER_DAY,
};
use crate::rng::{derive_seed, seeded};
use chrono::{Datelike, Duration, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// Peak output of one panel unit in MW per m² of panel size.
const MW_PER_M2: f64 = 8.0;
const NWP_COLUMNS: [&str; 4] = [
    "nwp_globalirrad",
    "nwp_temperature",
    "nwp_windspeed",
    "nwp_pressure",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthStationSpec {
    pub station_id: String,
    pub panel_count: u32,
    /// m².
    pub panel_size: f64,
    /// Array tilt, degrees.
    pub panel_angle: f64,
    pub latitude: f64,
    pub longitude: f64,
    /// 0 is always clear; 1 is heavily and variably overcast.
    pub cloudiness: f64,
    /// Relative standard deviation of multiplicative power noise.
    pub noise_scale: f64,
    pub days: usize,
    /// Calendar days between consecutive generated days.
    pub day_stride: usize,
    pub first_day: NaiveDate,
    pub seed: u64,
}

impl SynthStationSpec {
    pub fn metadata(&self) -> StationMetadata {
        StationMetadata {
            station_id: self.station_id.clone(),
            capacity: self.panel_count as f64 * self.panel_size * MW_PER_M2 * 1000.0,
            panel_size: self.panel_size,
            panel_count: self.panel_count,
            panel_angle: self.panel_angle,
            longitude: self.longitude,
            latitude: self.latitude,
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        self.metadata().validate()?;
        let bad = |m: &str| Err(DataError::Invalid(format!("station {}: {m}", self.station_id)));
        if self.days == 0 || self.day_stride == 0 {
            return bad("days and day_stride must be positive");
        }
        if !(0.0..=1.0).contains(&self.cloudiness) {
            return bad("cloudiness must lie in [0, 1]");
        }
        if !(self.noise_scale >= 0.0) {
            return bad("noise_scale must be non-negative");
        }
        if !(0.0..90.0).contains(&self.panel_angle) {
            return bad("panel angle must lie in [0, 90)");
        }
        Ok(())
    }

    /// Calendar dates of the generated days, skipping 29 February.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let mut out = Vec::with_capacity(self.days);
        let mut d = self.first_day;
        for _ in 0..self.days {
            if d.month() == 2 && d.day() == 29 {
                d += Duration::days(1);
            }
            out.push(d);
            d += Duration::days(self.day_stride as i64);
        }
        out
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Fraction of clear-sky irradiance let through at each slot of one day.
fn cloud_attenuation(cloudiness: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
    let level: f64 = rng.random_range(0.0..1.0);
    let waves: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.05..0.2),
                rng.random_range(12.0..48.0),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let a = (0..SLOTS_PER_DAY)
        .map(|t| {
            let wiggle: f64 = waves
                .iter()
                .map(|(amp, period, phase)| amp * (2.0 * PI * t as f64 / period + phase).sin())
                .sum();
            (1.0 - cloudiness * (0.6 * level + wiggle + 0.25)).clamp(0.05, 1.0)
        })
        .collect();
    (a, level)
}

struct Sun {
    sin_elevation: f64,
    /// Cosine of the incidence angle on a south-facing plane.
    cos_incidence: f64,
}

fn sun(latitude: f64, tilt: f64, day_of_year: usize, slot: usize) -> Sun {
    let decl = (23.45f64).to_radians() * (2.0 * PI * (284.0 + day_of_year as f64) / 365.0).sin();
    let hours = (slot as f64 + 0.5) / 4.0;
    let omega = (15.0 * (hours - 12.0)).to_radians();
    let phi = latitude.to_radians();
    let beta = tilt.to_radians();
    Sun {
        sin_elevation: phi.sin() * decl.sin() + phi.cos() * decl.cos() * omega.cos(),
        cos_incidence: (phi - beta).sin() * decl.sin() + (phi - beta).cos() * decl.cos() * omega.cos(),
    }
}

/// One station's table and metadata. Same spec, same bytes.
pub fn generate_station(spec: &SynthStationSpec) -> Result<(StationTable, StationMetadata), DataError> {
    spec.validate()?;
    let meta = spec.metadata();
    let mut rng = seeded(spec.seed, "synth-station");
    let rating = spec.panel_size * MW_PER_M2 / (1.0 + spec.panel_count as f64 / 200.0);
    let tilt = spec.panel_angle.to_radians();
    let mut wind_dir: f64 = rng.random_range(0.0..360.0);
    let mut rows = Vec::with_capacity(spec.days * SLOTS_PER_DAY);

    for date in spec.dates() {
        let doy = crate::data::day_of_year(date)?;
        let (atten, level) = cloud_attenuation(spec.cloudiness, &mut rng);
        let season = -(2.0 * PI * (doy as f64 + 10.0) / 365.0).cos();
        let base_temp = 12.0 + 14.0 * season - 4.0 * spec.cloudiness * level;
        let mut module_temp = base_temp;
        for (slot, &a) in atten.iter().enumerate() {
            let s = sun(spec.latitude, spec.panel_angle, doy, slot);
            let elev = s.sin_elevation.max(0.0);
            let clear = 1000.0 * elev.powf(1.2);
            let ghi_true = clear * a;
            let diffuse_share = 0.12 + 0.75 * (1.0 - a);
            let noisy = |v: f64, rel: f64, rng: &mut ChaCha8Rng| (v * (1.0 + rel * gauss(rng))).max(0.0);
            let ghi = if ghi_true > 0.0 { noisy(ghi_true, 0.005, &mut rng) } else { 0.0 };
            let dhi = if ghi > 0.0 { (diffuse_share * ghi).min(ghi) } else { 0.0 };
            let diurnal = (PI * (slot as f64 / 4.0 - 9.0) / 12.0).sin().max(-0.5);
            let air = base_temp + 7.0 * diurnal * a + 0.2 * gauss(&mut rng);
            let pressure = 1013.0 - 9.0 * spec.cloudiness * level
                + 1.2 * (2.0 * PI * slot as f64 / 48.0).cos()
                + 0.3 * gauss(&mut rng);
            let wind = (2.0 + 5.0 * spec.cloudiness * level + 0.5 * (1.0 - a) * 4.0 + 0.4 * gauss(&mut rng)).max(0.0);
            wind_dir = (wind_dir + 8.0 * gauss(&mut rng)).rem_euclid(360.0);

            // Measured irradiance transposed onto the tilted array.
            let beam = if elev > 0.05 {
                (ghi - dhi) * s.cos_incidence.max(0.0) / elev
            } else {
                0.0
            };
            let poa = beam.min(1400.0) + dhi * (1.0 + tilt.cos()) / 2.0;
            let target_temp = air + 0.035 * poa;
            module_temp += 0.3 * (target_temp - module_temp);
            let derate = 1.0 - 0.004 * (module_temp - 25.0);
            let mut power = rating * poa / 1000.0 * derate;
            if power > 0.0 && spec.noise_scale > 0.0 {
                power *= 1.0 + spec.noise_scale * gauss(&mut rng);
            }
            let power = power.max(0.0) * spec.panel_count as f64;

            let nwp = vec![
                clear * (1.0 - spec.cloudiness * 0.5 * level),
                base_temp + 6.0 * diurnal,
                2.0 + 4.0 * spec.cloudiness * level,
                1013.0 - 8.0 * spec.cloudiness * level,
            ];
            rows.push(StationRow {
                timestamp: date.and_hms_opt(0, 0, 0).expect("midnight") + Duration::minutes(15 * slot as i64),
                nwp,
                lmd: vec![ghi, dhi, air, pressure, wind_dir, wind],
                power,
            });
        }
    }
    Ok((
        StationTable {
            station_id: spec.station_id.clone(),
            nwp_columns: NWP_COLUMNS.map(String::from).to_vec(),
            rows,
        },
        meta,
    ))
}

/// Parameters for a whole synthetic fleet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetSpec {
    pub stations: usize,
    pub days: usize,
    pub noise_scale: f64,
    pub day_stride: usize,
    pub seed: u64,
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self {
            stations: 10,
            days: 25,
            noise_scale: 0.02,
            day_stride: 14,
            seed: 0,
        }
    }
}

/// Per-station specs with metadata drawn from seeded ranges.
pub fn fleet_specs(fleet: &FleetSpec) -> Vec<SynthStationSpec> {
    let mut rng = seeded(fleet.seed, "synth-fleet");
    (0..fleet.stations)
        .map(|i| {
            let offset = rng.random_range(0..fleet.day_stride.max(1)) as i64;
            SynthStationSpec {
                station_id: format!("station{i:02}"),
                panel_count: rng.random_range(10..=120),
                panel_size: rng.random_range(1.2..2.4),
                panel_angle: rng.random_range(5.0..45.0),
                latitude: rng.random_range(25.0..48.0),
                longitude: rng.random_range(100.0..125.0),
                cloudiness: rng.random_range(0.1..0.8),
                noise_scale: fleet.noise_scale,
                days: fleet.days,
                day_stride: fleet.day_stride,
                first_day: NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date") + Duration::days(offset),
                seed: derive_seed(fleet.seed, i as u64),
            }
        })
        .collect()
}

pub fn generate_fleet(fleet: &FleetSpec) -> Result<(Vec<StationTable>, Vec<StationMetadata>), DataError> {
    if fleet.stations == 0 {
        return Err(DataError::Invalid("a fleet needs at least one station".into()));
    }
    let mut tables = Vec::with_capacity(fleet.stations);
    let mut metadata = Vec::with_capacity(fleet.stations);
    for spec in fleet_specs(fleet) {
        let (t, m) = generate_station(&spec)?;
        tables.push(t);
        metadata.push(m);
    }
    Ok((tables, metadata))
}

/// Writes `metadata.csv` and one `<station_id>.csv` per station into `dir`.
pub fn write_fleet(
    dir: &Path,
    tables: &[StationTable],
    metadata: &[StationMetadata],
    config: &PipelineConfig,
) -> Result<(), DataError> {
    std::fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    for t in tables {
        write_station_csv(&dir.join(format!("{}.csv", t.station_id)), t, config)?;
    }
    write_metadata_csv(&dir.join(&config.metadata_file), metadata, config)
}
