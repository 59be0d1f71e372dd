use super::{DataError, StationMetadata, StationRow, StationTable};
use crate::container::write_atomic;
use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

const TIMESTAMP_FORMATS: [&str; 2] = ["%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"];

/// Column names of a station file. Defaults follow the public PVOD layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationColumns {
    pub timestamp: String,
    /// Columns starting with this prefix are read as forecast fields.
    pub nwp_prefix: String,
    /// Local measurement columns, in model input order.
    pub lmd: Vec<String>,
    pub power: String,
}

impl Default for StationColumns {
    fn default() -> Self {
        Self {
            timestamp: "date_time".into(),
            nwp_prefix: "nwp_".into(),
            lmd: [
                "lmd_totalirrad",
                "lmd_diffuseirrad",
                "lmd_temperature",
                "lmd_pressure",
                "lmd_winddirection",
                "lmd_windspeed",
            ]
            .map(String::from)
            .to_vec(),
            power: "power".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetadataColumns {
    pub station_id: String,
    pub capacity: String,
    pub panel_size: String,
    pub panel_count: String,
    pub panel_angle: String,
    pub longitude: String,
    pub latitude: String,
}

impl Default for MetadataColumns {
    fn default() -> Self {
        Self {
            station_id: "Station_ID".into(),
            capacity: "Capacity".into(),
            panel_size: "Panel_Size".into(),
            panel_count: "Panel_Number".into(),
            panel_angle: "Array_Tilt".into(),
            longitude: "Longitude".into(),
            latitude: "Latitude".into(),
        }
    }
}

/// Where the input files live and how their columns are named. Read from
/// TOML; every key is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Metadata file name inside the data directory. Every other `*.csv`
    /// there is a station file named `<station_id>.csv`.
    pub metadata_file: String,
    pub station: StationColumns,
    pub metadata: MetadataColumns,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            metadata_file: "metadata.csv".into(),
            station: StationColumns::default(),
            metadata: MetadataColumns::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        let cfg: Self = toml::from_str(text).map_err(|e| DataError::Config(e.to_string()))?;
        if cfg.station.lmd.is_empty() {
            return Err(DataError::Config("at least one local measurement column is required".into()));
        }
        Ok(cfg)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> DataError + '_ {
    move |source| DataError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| DataError::MissingColumn {
            path: path.display().to_string(),
            column: name.to_string(),
        })
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s.trim(), f).ok())
}

/// `Ok(None)` for an empty or NaN cell.
fn parse_value(s: &str) -> Result<Option<f64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_nan() => Ok(None),
        Ok(v) if v.is_infinite() => Err(format!("infinite value {s:?}")),
        Ok(v) => Ok(Some(v)),
        Err(_) => Err(format!("not a number: {s:?}")),
    }
}

/// Reads one station file. Rows with a missing measurement are skipped,
/// which leaves their day incomplete; malformed or unordered timestamps
/// are errors.
pub fn read_station_csv(
    path: &Path,
    station_id: &str,
    config: &PipelineConfig,
) -> Result<StationTable, DataError> {
    let cols = &config.station;
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let ts_col = column(&headers, &cols.timestamp, path)?;
    let power_col = column(&headers, &cols.power, path)?;
    let lmd_cols = cols
        .lmd
        .iter()
        .map(|c| column(&headers, c, path))
        .collect::<Result<Vec<_>, _>>()?;
    let nwp: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !cols.nwp_prefix.is_empty() && h.trim().starts_with(&cols.nwp_prefix))
        .map(|(i, h)| (i, h.trim().to_string()))
        .collect();

    let mut rows = Vec::new();
    let mut previous: Option<NaiveDateTime> = None;
    let mut skipped = 0usize;
    for record in reader.records() {
        let record = record.map_err(csv_err(path))?;
        let line = record.position().map_or(0, |p| p.line());
        let fail = |message: String| DataError::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        let raw_ts = record.get(ts_col).unwrap_or("");
        let ts = parse_timestamp(raw_ts).ok_or_else(|| fail(format!("bad timestamp {raw_ts:?}")))?;
        if ts.minute() % 15 != 0 || ts.second() != 0 {
            return Err(fail(format!("{ts} is off the 15-minute grid")));
        }
        if ts.month() == 2 && ts.day() == 29 {
            return Err(fail(format!("{ts}: leap days are not supported")));
        }
        if previous.is_some_and(|p| ts <= p) {
            return Err(fail(format!("{ts} does not follow the previous timestamp")));
        }
        previous = Some(ts);

        let mut lmd = Vec::with_capacity(lmd_cols.len());
        let mut complete = true;
        for &c in &lmd_cols {
            match parse_value(record.get(c).unwrap_or("")).map_err(&fail)? {
                Some(v) => lmd.push(v),
                None => complete = false,
            }
        }
        let power = parse_value(record.get(power_col).unwrap_or("")).map_err(&fail)?;
        let (Some(power), true) = (power, complete) else {
            skipped += 1;
            continue;
        };
        let nwp_values = nwp
            .iter()
            .map(|(c, _)| {
                parse_value(record.get(*c).unwrap_or(""))
                    .ok()
                    .flatten()
                    .unwrap_or(f64::NAN)
            })
            .collect();
        rows.push(StationRow {
            timestamp: ts,
            nwp: nwp_values,
            lmd,
            power,
        });
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} rows with missing values", path.display());
    }
    Ok(StationTable {
        station_id: station_id.to_string(),
        nwp_columns: nwp.into_iter().map(|(_, n)| n).collect(),
        rows,
    })
}

pub fn write_station_csv(
    path: &Path,
    table: &StationTable,
    config: &PipelineConfig,
) -> Result<(), DataError> {
    let cols = &config.station;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![cols.timestamp.clone()];
    header.extend(table.nwp_columns.iter().cloned());
    header.extend(cols.lmd.iter().cloned());
    header.push(cols.power.clone());
    w.write_record(&header).map_err(csv_err(path))?;
    for row in &table.rows {
        if row.lmd.len() != cols.lmd.len() || row.nwp.len() != table.nwp_columns.len() {
            return Err(DataError::Invalid(format!(
                "row at {} does not match the column layout",
                row.timestamp
            )));
        }
        let mut fields = vec![row.timestamp.format(TIMESTAMP_FORMATS[0]).to_string()];
        fields.extend(row.nwp.iter().chain(&row.lmd).map(|v| v.to_string()));
        fields.push(row.power.to_string());
        w.write_record(&fields).map_err(csv_err(path))?;
    }
    let bytes = w.into_inner().map_err(|e| DataError::Invalid(e.to_string()))?;
    write_atomic(path, &bytes).map_err(io_err(path))
}

/// Accepts either an area in m² or a `length×width[×depth]` size in mm.
fn parse_panel_size(s: &str) -> Option<f64> {
    if let Ok(v) = s.trim().parse::<f64>() {
        return Some(v);
    }
    let dims: Vec<f64> = s
        .split(['×', 'x', 'X', '*'])
        .map(|p| p.trim().trim_end_matches("mm").trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .ok()?;
    (dims.len() >= 2).then(|| dims[0] * dims[1] / 1e6)
}

pub fn read_metadata_csv(path: &Path, config: &PipelineConfig) -> Result<Vec<StationMetadata>, DataError> {
    let cols = &config.metadata;
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let idx = |name: &str| column(&headers, name, path);
    let (id_c, cap_c, size_c, count_c, angle_c, lon_c, lat_c) = (
        idx(&cols.station_id)?,
        idx(&cols.capacity)?,
        idx(&cols.panel_size)?,
        idx(&cols.panel_count)?,
        idx(&cols.panel_angle)?,
        idx(&cols.longitude)?,
        idx(&cols.latitude)?,
    );
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(csv_err(path))?;
        let line = record.position().map_or(0, |p| p.line());
        let fail = |message: String| DataError::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        let get = |c: usize| record.get(c).unwrap_or("").trim();
        let num = |c: usize, what: &str| -> Result<f64, DataError> {
            match parse_value(get(c)) {
                Ok(Some(v)) => Ok(v),
                _ => Err(fail(format!("{what}: expected a number, got {:?}", get(c)))),
            }
        };
        let station_id = get(id_c).to_string();
        if station_id.is_empty() {
            return Err(fail("empty station id".into()));
        }
        if !seen.insert(station_id.clone()) {
            return Err(fail(format!("duplicate station {station_id}")));
        }
        let count = num(count_c, "panel count")?;
        if count < 1.0 || count.fract() != 0.0 || count > u32::MAX as f64 {
            return Err(DataError::InvalidMetadata {
                station: station_id,
                message: format!("panel count {count} is not a positive integer"),
            });
        }
        let panel_size = parse_panel_size(get(size_c))
            .ok_or_else(|| fail(format!("panel size: unreadable {:?}", get(size_c))))?;
        let meta = StationMetadata {
            station_id,
            capacity: num(cap_c, "capacity")?,
            panel_size,
            panel_count: count as u32,
            panel_angle: num(angle_c, "panel angle")?,
            longitude: num(lon_c, "longitude")?,
            latitude: num(lat_c, "latitude")?,
        };
        meta.validate()?;
        out.push(meta);
    }
    Ok(out)
}

pub fn write_metadata_csv(
    path: &Path,
    metadata: &[StationMetadata],
    config: &PipelineConfig,
) -> Result<(), DataError> {
    let c = &config.metadata;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        &c.station_id,
        &c.capacity,
        &c.panel_size,
        &c.panel_count,
        &c.panel_angle,
        &c.longitude,
        &c.latitude,
    ])
    .map_err(csv_err(path))?;
    for m in metadata {
        w.write_record([
            m.station_id.clone(),
            m.capacity.to_string(),
            m.panel_size.to_string(),
            m.panel_count.to_string(),
            m.panel_angle.to_string(),
            m.longitude.to_string(),
            m.latitude.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    let bytes = w.into_inner().map_err(|e| DataError::Invalid(e.to_string()))?;
    write_atomic(path, &bytes).map_err(io_err(path))
}

/// Reads the metadata file and every station file of a data directory,
/// ordered by station id. Metadata rows without a station file are skipped;
/// station files without metadata are an error.
pub fn read_fleet(
    dir: &Path,
    config: &PipelineConfig,
) -> Result<(Vec<StationTable>, Vec<StationMetadata>), DataError> {
    let metadata = read_metadata_csv(&dir.join(&config.metadata_file), config)?;
    let by_id: BTreeMap<&str, &StationMetadata> =
        metadata.iter().map(|m| (m.station_id.as_str(), m)).collect();

    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let is_csv = path.extension().is_some_and(|e| e == "csv");
        let is_meta = path.file_name().is_some_and(|n| n == config.metadata_file.as_str());
        if !is_csv || is_meta {
            continue;
        }
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if !by_id.contains_key(stem.as_str()) {
            return Err(DataError::MissingMetadata(stem));
        }
        files.insert(stem, path);
    }

    let mut tables = Vec::new();
    let mut used = Vec::new();
    for (id, meta) in by_id {
        match files.get(id) {
            Some(path) => {
                tables.push(read_station_csv(path, id, config)?);
                used.push(meta.clone());
            }
            None => log::warn!("station {id} has metadata but no data file"),
        }
    }
    Ok((tables, used))
}
