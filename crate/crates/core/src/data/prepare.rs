use super::{
    encode_cyclic, DataError, StationMetadata, StationTable, CYCLIC_COLUMNS, DAYS_PER_YEAR,
    SLOTS_PER_DAY,
};
use chrono::{Datelike, NaiveDate, Timelike};
use std::collections::{BTreeMap, HashMap};

/// One complete day of a station.
#[derive(Clone, Debug, PartialEq)]
pub struct DayRecord {
    pub date: NaiveDate,
    /// `96 × D_raw` local measurements, row-major.
    pub weather: Vec<f64>,
    /// Station power per slot, MW.
    pub power: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReshapedStation {
    pub station_id: String,
    pub days: Vec<DayRecord>,
    /// Days with at least one row but fewer than all 96 slots.
    pub dropped: usize,
}

/// A station-day ready for the model.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSample {
    /// `96 × D_w`, each row `(time_cos, time_sin, measurements…)`.
    pub weather: Vec<f64>,
    /// `(day_cos, day_sin, panel_size, panel_count, panel_angle, latitude,
    /// longitude)`.
    pub metadata: Vec<f64>,
    /// Power per panel for each slot.
    pub target: Vec<f64>,
    pub station_id: String,
    pub date: NaiveDate,
    /// 1..=365.
    pub day_of_year: usize,
}

impl PreparedSample {
    pub fn weather_dim(&self) -> usize {
        self.weather.len() / SLOTS_PER_DAY
    }
}

/// Day of year counted on a 365-day calendar.
pub fn day_of_year(date: NaiveDate) -> Result<usize, DataError> {
    NaiveDate::from_ymd_opt(2019, date.month(), date.day())
        .map(|d| d.ordinal() as usize)
        .ok_or_else(|| DataError::Invalid(format!("{date}: leap days are not supported")))
}

fn slot_of(t: chrono::NaiveTime) -> usize {
    t.hour() as usize * 4 + t.minute() as usize / 15
}

/// Groups rows into days, keeping only days where every slot is present.
pub fn reshape_station(table: &StationTable) -> ReshapedStation {
    let width = table.rows.first().map_or(0, |r| r.lmd.len());
    let mut by_day: BTreeMap<NaiveDate, Vec<Option<usize>>> = BTreeMap::new();
    let mut ragged = false;
    for (i, row) in table.rows.iter().enumerate() {
        ragged |= row.lmd.len() != width;
        let slots = by_day
            .entry(row.timestamp.date())
            .or_insert_with(|| vec![None; SLOTS_PER_DAY]);
        if row.timestamp.minute() % 15 == 0 && row.timestamp.second() == 0 {
            slots[slot_of(row.timestamp.time())] = Some(i);
        }
    }
    let mut days = Vec::new();
    let mut dropped = 0;
    for (date, slots) in by_day {
        if ragged || slots.iter().any(Option::is_none) {
            dropped += 1;
            continue;
        }
        let mut weather = Vec::with_capacity(SLOTS_PER_DAY * width);
        let mut power = Vec::with_capacity(SLOTS_PER_DAY);
        for i in slots.into_iter().flatten() {
            weather.extend_from_slice(&table.rows[i].lmd);
            power.push(table.rows[i].power);
        }
        days.push(DayRecord { date, weather, power });
    }
    if dropped > 0 {
        log::info!("station {}: dropped {dropped} incomplete days", table.station_id);
    }
    ReshapedStation {
        station_id: table.station_id.clone(),
        days,
        dropped,
    }
}

/// Encodes one day: time encodings prepended to each weather row, day
/// encodings prepended to the metadata features, power divided by the panel
/// count.
pub fn sample_from_day(day: &DayRecord, meta: &StationMetadata) -> Result<PreparedSample, DataError> {
    meta.validate()?;
    if day.power.len() != SLOTS_PER_DAY || day.weather.len() % SLOTS_PER_DAY != 0 {
        return Err(DataError::Invalid(format!(
            "{} {}: day record is not {SLOTS_PER_DAY} slots long",
            meta.station_id, day.date
        )));
    }
    let raw = day.weather.len() / SLOTS_PER_DAY;
    let mut weather = Vec::with_capacity(SLOTS_PER_DAY * (raw + CYCLIC_COLUMNS));
    for (slot, row) in day.weather.chunks(raw.max(1)).enumerate().take(SLOTS_PER_DAY) {
        let (c, s) = encode_cyclic(slot, SLOTS_PER_DAY)?;
        weather.push(c);
        weather.push(s);
        if raw > 0 {
            weather.extend_from_slice(row);
        }
    }
    let doy = day_of_year(day.date)?;
    let (dc, ds) = encode_cyclic(doy - 1, DAYS_PER_YEAR)?;
    let mut metadata = vec![dc, ds];
    metadata.extend(meta.features());
    let panels = meta.panel_count as f64;
    Ok(PreparedSample {
        weather,
        metadata,
        target: day.power.iter().map(|p| p / panels).collect(),
        station_id: meta.station_id.clone(),
        date: day.date,
        day_of_year: doy,
    })
}

/// Turns station tables into unscaled samples ordered by station id, then
/// date. Every table needs a metadata row.
pub fn prepare_dataset(
    tables: &[StationTable],
    metadata: &[StationMetadata],
) -> Result<Vec<PreparedSample>, DataError> {
    let by_id: HashMap<&str, &StationMetadata> =
        metadata.iter().map(|m| (m.station_id.as_str(), m)).collect();
    let mut ordered: Vec<&StationTable> = tables.iter().collect();
    ordered.sort_by(|a, b| a.station_id.cmp(&b.station_id));
    let mut samples = Vec::new();
    for table in ordered {
        let meta = by_id
            .get(table.station_id.as_str())
            .ok_or_else(|| DataError::MissingMetadata(table.station_id.clone()))?;
        meta.validate()?;
        for day in reshape_station(table).days {
            samples.push(sample_from_day(&day, meta)?);
        }
    }
    Ok(samples)
}
