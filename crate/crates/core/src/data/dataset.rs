use super::{
    make_folds, prepare_dataset, stratified_split, DataError, DatasetSplit, PreparedSample,
    StationMetadata, StationTable, ZScoreScaler, CYCLIC_COLUMNS, SLOTS_PER_DAY,
};
use crate::container::{Container, NamedArray};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DATASET_SCHEMA_VERSION: u32 = 1;
const KIND: &str = "solartformer-dataset";
const TEST_FRACTION: f64 = 0.1;

/// Scaled samples with their split, the fitted scalers and the station
/// metadata they came from. Sample values are rounded to `f32`, the
/// precision of the on-disk format, so a loaded dataset equals the one
/// that was saved.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedDataset {
    pub samples: Vec<PreparedSample>,
    pub split: DatasetSplit,
    pub weather_scaler: ZScoreScaler,
    pub metadata_scaler: ZScoreScaler,
    pub stations: Vec<StationMetadata>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct SampleKey {
    station: String,
    date: NaiveDate,
    day_of_year: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    schema_version: u32,
    seed: u64,
    weather_dim: usize,
    metadata_dim: usize,
    stations: Vec<StationMetadata>,
    weather_scaler: ZScoreScaler,
    metadata_scaler: ZScoreScaler,
    samples: Vec<SampleKey>,
    split: DatasetSplit,
}

fn cyclic_mask(width: usize) -> Vec<bool> {
    (0..width).map(|j| j < CYCLIC_COLUMNS).collect()
}

fn round_f32(v: &mut [f64]) {
    for x in v {
        *x = *x as f32 as f64;
    }
}

impl PreparedDataset {
    /// Prepares samples, splits 9:1 by station, fits both scalers on the
    /// train part, scales everything and builds `folds` folds over train.
    pub fn build(
        tables: &[StationTable],
        metadata: &[StationMetadata],
        seed: u64,
        folds: usize,
    ) -> Result<Self, DataError> {
        let mut samples = prepare_dataset(tables, metadata)?;
        if samples.is_empty() {
            return Err(DataError::Invalid("no complete station-days in the input".into()));
        }
        let dw = samples[0].weather_dim();
        let dm = samples[0].metadata.len();
        if samples.iter().any(|s| s.weather_dim() != dw) {
            return Err(DataError::Invalid("stations disagree on the weather columns".into()));
        }
        let strata: Vec<&str> = samples.iter().map(|s| s.station_id.as_str()).collect();
        let (train, test) = stratified_split(&strata, TEST_FRACTION, seed)?;
        let train_strata: Vec<&str> = train.iter().map(|&i| strata[i]).collect();
        let folds = make_folds(&train_strata, folds, seed)?
            .into_iter()
            .map(|f| super::Fold {
                train: f.train.iter().map(|&p| train[p]).collect(),
                val: f.val.iter().map(|&p| train[p]).collect(),
            })
            .collect();

        let weather_rows: Vec<f64> = train.iter().flat_map(|&i| samples[i].weather.iter().copied()).collect();
        let meta_rows: Vec<f64> = train.iter().flat_map(|&i| samples[i].metadata.iter().copied()).collect();
        let weather_scaler = ZScoreScaler::fit(&weather_rows, dw, &cyclic_mask(dw))?;
        let metadata_scaler = ZScoreScaler::fit(&meta_rows, dm, &cyclic_mask(dm))?;
        for s in &mut samples {
            weather_scaler.apply(&mut s.weather)?;
            metadata_scaler.apply(&mut s.metadata)?;
            round_f32(&mut s.weather);
            round_f32(&mut s.metadata);
            round_f32(&mut s.target);
        }

        let mut stations: Vec<StationMetadata> = metadata
            .iter()
            .filter(|m| samples.iter().any(|s| s.station_id == m.station_id))
            .cloned()
            .collect();
        stations.sort_by(|a, b| a.station_id.cmp(&b.station_id));
        Ok(Self {
            samples,
            split: DatasetSplit { train, test, folds },
            weather_scaler,
            metadata_scaler,
            stations,
            seed,
        })
    }

    pub fn weather_dim(&self) -> usize {
        self.weather_scaler.width()
    }

    pub fn metadata_dim(&self) -> usize {
        self.metadata_scaler.width()
    }

    pub fn select(&self, indices: &[usize]) -> Vec<&PreparedSample> {
        indices.iter().map(|&i| &self.samples[i]).collect()
    }

    pub fn station(&self, id: &str) -> Option<&StationMetadata> {
        self.stations.iter().find(|m| m.station_id == id)
    }

    pub fn to_container(&self) -> Result<Container, DataError> {
        let n = self.samples.len();
        let (dw, dm) = (self.weather_dim(), self.metadata_dim());
        let manifest = Manifest {
            schema_version: DATASET_SCHEMA_VERSION,
            seed: self.seed,
            weather_dim: dw,
            metadata_dim: dm,
            stations: self.stations.clone(),
            weather_scaler: self.weather_scaler.clone(),
            metadata_scaler: self.metadata_scaler.clone(),
            samples: self
                .samples
                .iter()
                .map(|s| SampleKey {
                    station: s.station_id.clone(),
                    date: s.date,
                    day_of_year: s.day_of_year,
                })
                .collect(),
            split: self.split.clone(),
        };
        let flat = |f: fn(&PreparedSample) -> &Vec<f64>| -> Vec<f64> {
            self.samples.iter().flat_map(|s| f(s).iter().copied()).collect()
        };
        let arrays = vec![
            NamedArray {
                name: "weather".into(),
                shape: vec![n, SLOTS_PER_DAY, dw],
                data: flat(|s| &s.weather),
            },
            NamedArray {
                name: "metadata".into(),
                shape: vec![n, dm],
                data: flat(|s| &s.metadata),
            },
            NamedArray {
                name: "target".into(),
                shape: vec![n, SLOTS_PER_DAY],
                data: flat(|s| &s.target),
            },
        ];
        let meta = serde_json::to_value(manifest).map_err(|e| DataError::Invalid(e.to_string()))?;
        Ok(Container::new(KIND, meta, arrays))
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        Ok(self.to_container()?.write(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let c = Container::read(path)?;
        let bad = |m: String| DataError::Invalid(format!("{}: {m}", path.display()));
        if c.kind != KIND {
            return Err(bad(format!("holds {:?}, not a prepared dataset", c.kind)));
        }
        let version = c.meta.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(DATASET_SCHEMA_VERSION as u64) {
            return Err(bad(format!("schema version {version:?}, expected {DATASET_SCHEMA_VERSION}")));
        }
        let m: Manifest = serde_json::from_value(c.meta.clone()).map_err(|e| bad(e.to_string()))?;
        let n = m.samples.len();
        let (dw, dm) = (m.weather_dim, m.metadata_dim);
        let array = |name: &str, shape: Vec<usize>| -> Result<&NamedArray, DataError> {
            let a = c.get(name).ok_or_else(|| bad(format!("missing array {name}")))?;
            if a.shape != shape {
                return Err(bad(format!("array {name} has shape {:?}, expected {shape:?}", a.shape)));
            }
            Ok(a)
        };
        let weather = array("weather", vec![n, SLOTS_PER_DAY, dw])?;
        let metadata = array("metadata", vec![n, dm])?;
        let target = array("target", vec![n, SLOTS_PER_DAY])?;
        if m.weather_scaler.width() != dw || m.metadata_scaler.width() != dm {
            return Err(bad("scaler widths disagree with the arrays".into()));
        }
        let in_range = |v: &[usize]| v.iter().all(|&i| i < n);
        let s = &m.split;
        if !in_range(&s.train) || !in_range(&s.test) || !s.folds.iter().all(|f| in_range(&f.train) && in_range(&f.val)) {
            return Err(bad("split index out of range".into()));
        }
        let wl = SLOTS_PER_DAY * dw;
        let samples = m
            .samples
            .into_iter()
            .enumerate()
            .map(|(i, k)| PreparedSample {
                weather: weather.data[i * wl..(i + 1) * wl].to_vec(),
                metadata: metadata.data[i * dm..(i + 1) * dm].to_vec(),
                target: target.data[i * SLOTS_PER_DAY..(i + 1) * SLOTS_PER_DAY].to_vec(),
                station_id: k.station,
                date: k.date,
                day_of_year: k.day_of_year,
            })
            .collect();
        Ok(Self {
            samples,
            split: m.split,
            weather_scaler: m.weather_scaler,
            metadata_scaler: m.metadata_scaler,
            stations: m.stations,
            seed: m.seed,
        })
    }
}
