//! From raw station CSVs to scaled, split training samples.
//!
//! Station tables hold 15-minute local measurements and power; each complete
//! day becomes one [`PreparedSample`] whose weather rows are prefixed with
//! the cyclic time-of-day encoding and whose metadata vector is prefixed with
//! the cyclic day-of-year encoding. Power is divided by the panel count.

mod dataset;
mod ingest;
mod prepare;
mod scaler;
mod split;

pub use dataset::{PreparedDataset, DATASET_SCHEMA_VERSION};
pub use ingest::{
    read_fleet, read_metadata_csv, read_station_csv, write_metadata_csv, write_station_csv,
    MetadataColumns, PipelineConfig, StationColumns,
};
pub use prepare::{
    day_of_year, prepare_dataset, reshape_station, sample_from_day, DayRecord, PreparedSample,
    ReshapedStation,
};
pub use scaler::ZScoreScaler;
pub use split::{make_folds, stratified_split, DatasetSplit, Fold};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// 15-minute slots per day.
pub const SLOTS_PER_DAY: usize = 96;
/// Days per year used by the day encoding; leap days are rejected.
pub const DAYS_PER_YEAR: usize = 365;
/// Number of cyclic columns at the front of each weather row and of each
/// metadata vector.
pub const CYCLIC_COLUMNS: usize = 2;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: missing column {column:?}")]
    MissingColumn { path: String, column: String },
    #[error("{path}, line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("station {0} has no metadata row")]
    MissingMetadata(String),
    #[error("station {station}: {message}")]
    InvalidMetadata { station: String, message: String },
    #[error("station {station} has {have} samples, fewer than {need}")]
    TooFewSamples {
        station: String,
        have: usize,
        need: usize,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error(transparent)]
    Container(#[from] crate::container::ContainerError),
}

/// `(cos 2π·index/period, sin 2π·index/period)`.
pub fn encode_cyclic(index: usize, period: usize) -> Result<(f64, f64), DataError> {
    if period == 0 {
        return Err(DataError::Invalid("cyclic period must be positive".into()));
    }
    let angle = 2.0 * PI * (index % period) as f64 / period as f64;
    Ok((angle.cos(), angle.sin()))
}

/// One 15-minute measurement row.
#[derive(Clone, Debug, PartialEq)]
pub struct StationRow {
    pub timestamp: NaiveDateTime,
    /// Forecast fields, parsed for completeness but never fed to the model.
    pub nwp: Vec<f64>,
    /// Local measurements in pipeline column order.
    pub lmd: Vec<f64>,
    /// Station output in MW.
    pub power: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationTable {
    pub station_id: String,
    pub nwp_columns: Vec<String>,
    pub rows: Vec<StationRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationMetadata {
    pub station_id: String,
    /// kW.
    pub capacity: f64,
    /// m² per panel.
    pub panel_size: f64,
    pub panel_count: u32,
    /// Tilt in degrees.
    pub panel_angle: f64,
    pub longitude: f64,
    pub latitude: f64,
}

impl StationMetadata {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |message: String| {
            Err(DataError::InvalidMetadata {
                station: self.station_id.clone(),
                message,
            })
        };
        if self.panel_count == 0 {
            return fail("panel count must be at least 1".into());
        }
        if !(self.panel_size > 0.0) {
            return fail(format!("panel size {} must be positive", self.panel_size));
        }
        if !(self.latitude.abs() <= 90.0) {
            return fail(format!("latitude {} out of range", self.latitude));
        }
        if !(self.longitude.abs() <= 180.0) {
            return fail(format!("longitude {} out of range", self.longitude));
        }
        if !self.panel_angle.is_finite() || !self.capacity.is_finite() {
            return fail("non-finite metadata value".into());
        }
        Ok(())
    }

    /// Numeric fields fed to the model, after the two cyclic day columns.
    pub fn features(&self) -> [f64; 5] {
        [
            self.panel_size,
            self.panel_count as f64,
            self.panel_angle,
            self.latitude,
            self.longitude,
        ]
    }
}
