use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::plot;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;
use solartformer::container::write_atomic;
use solartformer::data::{
    read_fleet, read_metadata_csv, read_station_csv, reshape_station, sample_from_day, PipelineConfig,
    PreparedDataset, PreparedSample, StationMetadata, ZScoreScaler,
};
use solartformer::metrics::{evaluate_series, persistence_report, predict_samples, MetricsReport};
use solartformer::model::{load_checkpoint, save_checkpoint, SolarTformer};
use solartformer::synth::{generate_fleet, write_fleet};
use solartformer::train::{ablate, artifacts, cross_validate, train_final};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const DATASET_FILE: &str = "dataset.stfc";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const PREDICTIONS_FILE: &str = "test_predictions.csv";

/// Everything besides the weights that `predict` needs to turn raw station
/// rows into model inputs.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointExtra {
    pub weather_scaler: ZScoreScaler,
    pub metadata_scaler: ZScoreScaler,
    pub columns: PipelineConfig,
    pub stations: Vec<StationMetadata>,
}

/// Creates the output directory: `--out` when given, otherwise a
/// timestamped directory under `runs/`.
pub fn run_dir(cfg: &RunConfig, command: &str) -> CliResult<PathBuf> {
    let dir = match &cfg.out {
        Some(d) => d.clone(),
        None => {
            let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
            let base = PathBuf::from("runs").join(format!("{command}-{stamp}"));
            let mut dir = base.clone();
            let mut n = 2;
            while dir.exists() {
                dir = PathBuf::from(format!("{}-{n}", base.display()));
                n += 1;
            }
            dir
        }
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

pub fn write_file(dir: &Path, name: &str, text: &str) -> CliResult<PathBuf> {
    let path = dir.join(name);
    write_atomic(&path, text.as_bytes()).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_snapshot(dir: &Path, command: &str, cfg: &RunConfig) -> CliResult<()> {
    write_file(dir, "config.json", &to_json(&json!({ "command": command, "config": cfg }))?)?;
    Ok(())
}

fn dataset_path(flag: Option<PathBuf>, cfg: &RunConfig) -> CliResult<PathBuf> {
    flag.or_else(|| cfg.data.dataset.clone())
        .ok_or_else(|| CliError::Config("no prepared dataset: pass --dataset or set data.dataset".into()))
}

fn load_dataset(path: &Path) -> CliResult<PreparedDataset> {
    if !path.exists() {
        return Err(CliError::Data(format!("{}: no such dataset", path.display())));
    }
    Ok(PreparedDataset::load(path)?)
}

pub fn synth(cfg: &RunConfig, dir: &Path) -> CliResult<()> {
    let (tables, metadata) = generate_fleet(&cfg.synth)?;
    let data = dir.join("data");
    write_fleet(&data, &tables, &metadata, &cfg.data.columns)?;
    println!("wrote {} stations to {}", tables.len(), data.display());
    Ok(())
}

pub fn prepare(cfg: &RunConfig, dir: &Path, data: Option<PathBuf>) -> CliResult<()> {
    let data = data.unwrap_or_else(|| cfg.data.dir.clone());
    if !data.is_dir() {
        return Err(CliError::Data(format!("{}: no such data directory", data.display())));
    }
    let (tables, metadata) = read_fleet(&data, &cfg.data.columns)?;
    let dropped: Vec<_> = tables
        .iter()
        .map(|t| json!({ "station": t.station_id, "dropped_days": reshape_station(t).dropped }))
        .collect();
    let ds = PreparedDataset::build(&tables, &metadata, cfg.seed, cfg.data.folds)?;
    let path = dir.join(DATASET_FILE);
    ds.save(&path)?;
    let summary = json!({
        "samples": ds.samples.len(),
        "train": ds.split.train.len(),
        "test": ds.split.test.len(),
        "fold_sizes": ds.split.folds.iter().map(|f| f.val.len()).collect::<Vec<_>>(),
        "weather_dim": ds.weather_dim(),
        "metadata_dim": ds.metadata_dim(),
        "stations": dropped,
    });
    write_file(dir, "prepare.json", &to_json(&summary)?)?;
    println!(
        "prepared {} samples ({} train, {} test) into {}",
        ds.samples.len(),
        ds.split.train.len(),
        ds.split.test.len(),
        path.display()
    );
    Ok(())
}

pub fn cv(cfg: &RunConfig, dir: &Path, dataset: Option<PathBuf>) -> CliResult<()> {
    let ds = load_dataset(&dataset_path(dataset, cfg)?)?;
    let mc = cfg.model_for(ds.weather_dim(), ds.metadata_dim());
    let report = cross_validate(&ds, &mc, &cfg.train_with_epochs(cfg.cv.epochs), cfg.cv.compare)?;
    write_file(dir, "cv.json", &to_json(&report)?)?;
    let path = write_file(dir, "cv.csv", &artifacts::cv_csv(&report))?;
    for run in &report.runs {
        println!(
            "{}: mean train {:.6} val {:.6} gap {:.6}",
            if run.regularized { "regularized" } else { "unregularized" },
            run.mean_train(),
            run.mean_val(),
            run.mean_gap()
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn metrics_json(report: &MetricsReport, persistence: &MetricsReport, samples: usize) -> CliResult<String> {
    to_json(&json!({ "test": report, "persistence": persistence, "test_samples": samples }))
}

fn print_report(label: &str, r: &MetricsReport) {
    println!("{label}: MSE {:.6} PE {:.4}% KLD {:.6} CCC {:.6}", r.mse, r.pe, r.kld, r.ccc);
}

pub fn train(cfg: &RunConfig, dir: &Path, dataset: Option<PathBuf>) -> CliResult<()> {
    let ds = load_dataset(&dataset_path(dataset, cfg)?)?;
    let mc = cfg.model_for(ds.weather_dim(), ds.metadata_dim());
    let out = train_final(&ds, &mc, &cfg.train, &cfg.metrics)?;
    let extra = CheckpointExtra {
        weather_scaler: ds.weather_scaler.clone(),
        metadata_scaler: ds.metadata_scaler.clone(),
        columns: cfg.data.columns.clone(),
        stations: ds.stations.clone(),
    };
    save_checkpoint(&dir.join(CHECKPOINT_FILE), &out.model, serde_json::to_value(extra)?)?;
    write_file(dir, LOSS_FILE, &artifacts::loss_csv(&out.curve))?;
    let test = ds.select(&ds.split.test);
    write_file(dir, METRICS_FILE, &metrics_json(&out.report, &out.persistence, test.len())?)?;
    write_file(dir, PREDICTIONS_FILE, &artifacts::predictions_csv(&test, &out.predictions))?;
    print_report("test", &out.report);
    print_report("persistence", &out.persistence);
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, dir: &Path, dataset: Option<PathBuf>, checkpoint: &Path) -> CliResult<()> {
    let ds = load_dataset(&dataset_path(dataset, cfg)?)?;
    let ck = load_checkpoint(checkpoint)?;
    check_dims(&ck.model, ds.weather_dim(), ds.metadata_dim())?;
    if ck.extra.is_null() {
        log::warn!("checkpoint carries no scalers; assuming it matches the dataset");
    } else {
        let extra: CheckpointExtra = serde_json::from_value(ck.extra)?;
        if extra.weather_scaler != ds.weather_scaler || extra.metadata_scaler != ds.metadata_scaler {
            return Err(CliError::Data(
                "scaler mismatch: the checkpoint was trained on a differently scaled dataset".into(),
            ));
        }
    }
    let test = ds.select(&ds.split.test);
    let predictions = predict_samples(&ck.model, &test, 32)?;
    let y: Vec<f64> = test.iter().flat_map(|s| s.target.iter().copied()).collect();
    let y_hat: Vec<f64> = predictions.iter().flatten().copied().collect();
    let report = evaluate_series(&y, &y_hat, &cfg.metrics)?;
    let persistence = persistence_report(&test, &cfg.metrics)?;
    write_file(dir, METRICS_FILE, &metrics_json(&report, &persistence, test.len())?)?;
    write_file(dir, PREDICTIONS_FILE, &artifacts::predictions_csv(&test, &predictions))?;
    print_report("test", &report);
    print_report("persistence", &persistence);
    Ok(())
}

pub fn ablate_cmd(cfg: &RunConfig, dir: &Path, dataset: Option<PathBuf>) -> CliResult<()> {
    let ds = load_dataset(&dataset_path(dataset, cfg)?)?;
    let mc = cfg.model_for(ds.weather_dim(), ds.metadata_dim());
    let settings = cfg.ablation.parsed()?;
    let rows = ablate(&ds, &mc, &cfg.train_with_epochs(cfg.ablation.epochs), &settings)?;
    let path = write_file(dir, "ablation.csv", &artifacts::ablation_csv(&rows))?;
    for r in &rows {
        println!("{:<26} test MSE {:.6}", r.setting.label(), r.test_mse);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn check_dims(model: &SolarTformer, weather: usize, metadata: usize) -> CliResult<()> {
    let c = model.config();
    if c.weather_dim != weather || c.metadata_dim != metadata {
        return Err(CliError::Data(format!(
            "feature mismatch: checkpoint expects weather {} / metadata {}, inputs have {weather} / {metadata}",
            c.weather_dim, c.metadata_dim
        )));
    }
    Ok(())
}

pub struct PredictArgs {
    pub checkpoint: PathBuf,
    pub input: PathBuf,
    pub date: NaiveDate,
    pub station: Option<String>,
    pub metadata: Option<PathBuf>,
}

fn find_metadata(args: &PredictArgs, extra: &CheckpointExtra, station: &str) -> CliResult<StationMetadata> {
    let sibling = args
        .input
        .parent()
        .map(|p| p.join(&extra.columns.metadata_file))
        .filter(|p| p.exists());
    if let Some(path) = args.metadata.clone().or(sibling) {
        let rows = read_metadata_csv(&path, &extra.columns)?;
        return rows
            .into_iter()
            .find(|m| m.station_id == station)
            .ok_or_else(|| CliError::Data(format!("{}: no row for station {station}", path.display())));
    }
    extra
        .stations
        .iter()
        .find(|m| m.station_id == station)
        .cloned()
        .ok_or_else(|| CliError::Data(format!("no metadata for station {station}; pass --metadata")))
}

/// Builds the scaled model input for one station-day, exactly as a
/// prepared dataset would hold it.
pub fn predict_input(args: &PredictArgs, extra: &CheckpointExtra) -> CliResult<(PreparedSample, u32)> {
    let station = match &args.station {
        Some(s) => s.clone(),
        None => args
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| CliError::Config("cannot infer the station id; pass --station".into()))?,
    };
    let meta = find_metadata(args, extra, &station)?;
    let table = read_station_csv(&args.input, &station, &extra.columns)?;
    let day = reshape_station(&table)
        .days
        .into_iter()
        .find(|d| d.date == args.date)
        .ok_or_else(|| CliError::Data(format!("station {station} has no complete day {}", args.date)))?;
    let mut sample = sample_from_day(&day, &meta)?;
    if extra.weather_scaler.width() != sample.weather_dim() || extra.metadata_scaler.width() != sample.metadata.len() {
        return Err(CliError::Data(format!(
            "scaler mismatch: scalers cover {} / {} features, input has {} / {}",
            extra.weather_scaler.width(),
            extra.metadata_scaler.width(),
            sample.weather_dim(),
            sample.metadata.len()
        )));
    }
    extra.weather_scaler.apply(&mut sample.weather)?;
    extra.metadata_scaler.apply(&mut sample.metadata)?;
    for v in sample.weather.iter_mut().chain(sample.metadata.iter_mut()) {
        *v = *v as f32 as f64;
    }
    Ok((sample, meta.panel_count))
}

pub fn predict(dir: &Path, args: &PredictArgs) -> CliResult<()> {
    let ck = load_checkpoint(&args.checkpoint)?;
    if ck.extra.is_null() {
        return Err(CliError::Data("checkpoint carries no input scalers".into()));
    }
    let extra: CheckpointExtra = serde_json::from_value(ck.extra.clone())?;
    let (sample, panels) = predict_input(args, &extra)?;
    check_dims(&ck.model, sample.weather_dim(), sample.metadata.len())?;
    let pred = predict_samples(&ck.model, &[&sample], 1)?.remove(0);
    let mut s = String::from("slot,predicted_power_per_panel,predicted_power_total\n");
    for (slot, p) in pred.iter().enumerate() {
        let _ = writeln!(s, "{slot},{p},{}", p * panels as f64);
    }
    let path = write_file(dir, "forecast.csv", &s)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn plot_cmd(dir: &Path, run: &Path, samples: &[usize], deterministic: bool) -> CliResult<()> {
    let read = |name: &str| {
        let p = run.join(name);
        std::fs::read_to_string(&p).map_err(|e| CliError::Data(format!("missing artifact {}: {e}", p.display())))
    };
    let stamp = (!deterministic).then(|| chrono::Local::now().to_rfc3339());
    let curve = artifacts::parse_loss_csv(&read(LOSS_FILE)?).map_err(CliError::Data)?;
    write_file(dir, "loss.svg", &plot::loss_svg(&curve, stamp.as_deref()))?;
    let days = plot::parse_predictions(&read(PREDICTIONS_FILE)?).map_err(CliError::Data)?;
    let picked: Vec<usize> = if samples.is_empty() {
        (0..days.len().min(3)).collect()
    } else {
        samples.to_vec()
    };
    for &i in &picked {
        let day = days
            .get(i)
            .ok_or_else(|| CliError::Config(format!("sample {i} out of range; the run has {} test days", days.len())))?;
        write_file(dir, &format!("sample_{i}.svg"), &plot::overlay_svg(day, stamp.as_deref()))?;
        write_file(dir, &format!("sample_{i}.csv"), &plot::overlay_csv(day))?;
    }
    println!("wrote {} figures to {}", picked.len() + 1, dir.display());
    Ok(())
}
