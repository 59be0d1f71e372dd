//! `solartformer`: synthetic data, dataset preparation, cross-validation,
//! training, evaluation, ablation, prediction and plotting.
//!
//! Exit status: 0 success, 1 config error, 2 data error, 3 numeric failure,
//! 4 internal invariant violation.

mod commands;
mod config;
mod error;
mod plot;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use commands::PredictArgs;
use config::{EpochTarget, Overrides, RunConfig};
use error::CliResult;
use solartformer::model::ReadoutMode;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "solartformer", version, about = "Day-ahead PV power forecasting with a causal transformer")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Run directory. Defaults to runs/<command>-<timestamp>.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Epoch budget of the command (final, CV or ablation training).
    #[arg(long, global = true, value_name = "N")]
    epochs: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    blocks: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    batch_size: Option<usize>,
    /// Train without the elastic-net penalty (cv runs only this variant).
    #[arg(long, global = true)]
    no_regularization: bool,
    /// Restrict ablate to one setting: no-norm, no-metadata, no-skip, no-attention or n<blocks>.
    #[arg(long, global = true, value_name = "SETTING")]
    ablation: Option<String>,
    #[arg(long, global = true, value_name = "MODE", value_parser = parse_readout)]
    readout_mode: Option<ReadoutMode>,
    /// Leave timestamps out of generated figures.
    #[arg(long, global = true)]
    deterministic: bool,
}

fn parse_readout(s: &str) -> Result<ReadoutMode, String> {
    s.parse()
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fleet of station files.
    Synth {
        #[arg(long)]
        stations: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        noise_scale: Option<f64>,
    },
    /// Read station files, split, scale and store a prepared dataset.
    Prepare {
        /// Data directory; defaults to data.dir.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// K-fold cross-validation with and without the elastic net.
    Cv {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train the final model and score it on the test split.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset's test split.
    Evaluate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and score the architecture ablation grid.
    Ablate {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Forecast one day of one station from its raw CSV.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Station CSV; the station id defaults to the file stem.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        date: NaiveDate,
        #[arg(long)]
        station: Option<String>,
        /// Metadata CSV; defaults to the one next to the input, then to the checkpoint.
        #[arg(long)]
        metadata: Option<PathBuf>,
    },
    /// Loss curve and forecast overlays from a training run.
    Plot {
        #[arg(long)]
        run: PathBuf,
        /// Test sample indices, comma separated; defaults to the first three.
        #[arg(long, value_delimiter = ',')]
        samples: Vec<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Synth { .. } => "synth",
            Self::Prepare { .. } => "prepare",
            Self::Cv { .. } => "cv",
            Self::Train { .. } => "train",
            Self::Evaluate { .. } => "evaluate",
            Self::Ablate { .. } => "ablate",
            Self::Predict { .. } => "predict",
            Self::Plot { .. } => "plot",
        }
    }

    fn epoch_target(&self) -> EpochTarget {
        match self {
            Self::Train { .. } => EpochTarget::Final,
            Self::Cv { .. } => EpochTarget::Cv,
            Self::Ablate { .. } => EpochTarget::Ablation,
            _ => EpochTarget::None,
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    let mut cfg = RunConfig::load(g.config.as_deref())?;
    if let Command::Synth { stations, days, noise_scale } = &cli.command {
        cfg.synth.stations = stations.unwrap_or(cfg.synth.stations);
        cfg.synth.days = days.unwrap_or(cfg.synth.days);
        cfg.synth.noise_scale = noise_scale.unwrap_or(cfg.synth.noise_scale);
    }
    let overrides = Overrides {
        seed: g.seed,
        out: g.out.clone(),
        epochs: g.epochs,
        blocks: g.blocks,
        batch_size: g.batch_size,
        no_regularization: g.no_regularization,
        ablation: g.ablation.clone(),
        readout_mode: g.readout_mode,
    };
    let name = cli.command.name();
    let cfg = cfg.resolve(&overrides, cli.command.epoch_target())?;
    let dir = commands::run_dir(&cfg, name)?;
    commands::write_snapshot(&dir, name, &cfg)?;
    match cli.command {
        Command::Synth { .. } => commands::synth(&cfg, &dir),
        Command::Prepare { data } => commands::prepare(&cfg, &dir, data),
        Command::Cv { dataset } => commands::cv(&cfg, &dir, dataset),
        Command::Train { dataset } => commands::train(&cfg, &dir, dataset),
        Command::Evaluate { dataset, checkpoint } => commands::evaluate(&cfg, &dir, dataset, &checkpoint),
        Command::Ablate { dataset } => commands::ablate_cmd(&cfg, &dir, dataset),
        Command::Predict { checkpoint, input, date, station, metadata } => commands::predict(
            &dir,
            &PredictArgs { checkpoint, input, date, station, metadata },
        ),
        Command::Plot { run, samples } => commands::plot_cmd(&dir, &run, &samples, g.deterministic),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

