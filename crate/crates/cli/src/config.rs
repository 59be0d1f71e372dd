//! Run configuration: an optional TOML file with every section optional,
//! overlaid by command-line flags.
//!
//! ```toml
//! seed = 0
//! out = "runs/baseline"
//!
//! [data]
//! dir = "data"
//! dataset = "runs/prep/dataset.stfc"
//! folds = 5
//!
//! [data.columns]          # input column names, see PipelineConfig
//! metadata_file = "metadata.csv"
//!
//! [synth]                 # FleetSpec
//! [model]                 # SolarTformerConfig
//! [train]                 # TrainConfig for the final model
//! [cv]
//! epochs = 200
//! compare = true
//! [ablation]
//! epochs = 200
//! settings = ["no-norm", "no-metadata", "no-skip", "no-attention", "n1", "n2", "n4", "n6"]
//! [metrics]               # MetricsConfig
//! ```
//!
//! `seed` drives every random stream: it overrides `train.seed` and
//! `synth.seed`.

use crate::error::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use solartformer::data::PipelineConfig;
use solartformer::metrics::MetricsConfig;
use solartformer::model::{ReadoutMode, SolarTformerConfig};
use solartformer::synth::FleetSpec;
use solartformer::train::{ablation_settings, AblationSetting, TrainConfig};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory of station CSVs plus the metadata file.
    pub dir: PathBuf,
    /// Prepared dataset used by cv, train, evaluate and ablate.
    pub dataset: Option<PathBuf>,
    pub folds: usize,
    pub columns: PipelineConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            dataset: None,
            folds: 5,
            columns: PipelineConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub epochs: usize,
    /// Train every fold with and without the elastic net.
    pub compare: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { epochs: 200, compare: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub epochs: usize,
    pub settings: Vec<String>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            settings: ablation_settings().iter().map(AblationSetting::key).collect(),
        }
    }
}

impl AblationConfig {
    pub fn parsed(&self) -> CliResult<Vec<AblationSetting>> {
        if self.settings.is_empty() {
            return Err(CliError::Config("ablation.settings is empty".into()));
        }
        self.settings
            .iter()
            .map(|s| s.parse().map_err(CliError::Config))
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    pub synth: FleetSpec,
    pub model: SolarTformerConfig,
    pub train: TrainConfig,
    pub cv: CvConfig,
    pub ablation: AblationConfig,
    pub metrics: MetricsConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub blocks: Option<usize>,
    pub batch_size: Option<usize>,
    pub no_regularization: bool,
    pub ablation: Option<String>,
    pub readout_mode: Option<ReadoutMode>,
}

/// Which epoch budget `--epochs` replaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpochTarget {
    Final,
    Cv,
    Ablation,
    None,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| match e {
                    CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    /// Applies the overrides and checks the result.
    pub fn resolve(mut self, o: &Overrides, epochs: EpochTarget) -> CliResult<Self> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        self.train.seed = self.seed;
        self.synth.seed = self.seed;
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(e) = o.epochs {
            match epochs {
                EpochTarget::Final => self.train.epochs = e,
                EpochTarget::Cv => self.cv.epochs = e,
                EpochTarget::Ablation => self.ablation.epochs = e,
                EpochTarget::None => {}
            }
        }
        if let Some(b) = o.blocks {
            self.model.blocks = b;
        }
        if let Some(b) = o.batch_size {
            self.train.batch_size = b;
        }
        if o.no_regularization {
            self.train.elastic_net.enabled = false;
            self.cv.compare = false;
        }
        if let Some(a) = &o.ablation {
            self.ablation.settings = vec![a.clone()];
        }
        if let Some(r) = o.readout_mode {
            self.model.readout = r;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.metrics.validate()?;
        self.ablation.parsed()?;
        if self.cv.epochs == 0 || self.ablation.epochs == 0 {
            return Err(CliError::Config("epochs must be at least 1".into()));
        }
        if self.data.folds < 2 {
            return Err(CliError::Config("data.folds must be at least 2".into()));
        }
        if self.data.columns.station.lmd.is_empty() {
            return Err(CliError::Config("data.columns.station.lmd is empty".into()));
        }
        Ok(())
    }

    /// The model config adapted to a dataset's feature widths.
    pub fn model_for(&self, weather_dim: usize, metadata_dim: usize) -> SolarTformerConfig {
        SolarTformerConfig {
            weather_dim,
            metadata_dim,
            ..self.model.clone()
        }
    }

    pub fn train_with_epochs(&self, epochs: usize) -> TrainConfig {
        TrainConfig { epochs, ..self.train.clone() }
    }
}
