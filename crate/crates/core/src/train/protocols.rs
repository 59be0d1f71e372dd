use super::fit::{evaluate_mse, fit, EpochLog};
use super::{TrainConfig, TrainError};
use crate::data::{stratified_split, PreparedDataset, PreparedSample};
use crate::metrics::{evaluate_series, persistence_report, predict_samples, MetricsConfig, MetricsReport};
use crate::model::{AblationFlags, SolarTformer, SolarTformerConfig};
use crate::rng::{derive_seed, stream_id};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub curve: Vec<EpochLog>,
    /// MSE of the trained model on the fold's training part.
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvRun {
    pub regularized: bool,
    pub folds: Vec<FoldResult>,
}

impl CvRun {
    pub fn mean_train(&self) -> f64 {
        self.folds.iter().map(|f| f.train_mse).sum::<f64>() / self.folds.len() as f64
    }

    pub fn mean_val(&self) -> f64 {
        self.folds.iter().map(|f| f.val_mse).sum::<f64>() / self.folds.len() as f64
    }

    /// Mean of `val − train` over folds.
    pub fn mean_gap(&self) -> f64 {
        self.mean_val() - self.mean_train()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub runs: Vec<CvRun>,
}

/// One line of the fold table; `fold` is `None` for the mean row.
#[derive(Clone, Debug, PartialEq)]
pub struct CvRow {
    pub fold: Option<usize>,
    /// `(train, val)` per run, in run order.
    pub values: Vec<(f64, f64)>,
}

impl CvReport {
    pub fn run(&self, regularized: bool) -> Option<&CvRun> {
        self.runs.iter().find(|r| r.regularized == regularized)
    }

    pub fn rows(&self) -> Vec<CvRow> {
        let k = self.runs.first().map_or(0, |r| r.folds.len());
        let mut rows: Vec<CvRow> = (0..k)
            .map(|i| CvRow {
                fold: Some(i + 1),
                values: self.runs.iter().map(|r| (r.folds[i].train_mse, r.folds[i].val_mse)).collect(),
            })
            .collect();
        rows.push(CvRow {
            fold: None,
            values: self.runs.iter().map(|r| (r.mean_train(), r.mean_val())).collect(),
        });
        rows
    }
}

/// K-fold training with a fresh model per fold. With `compare` set, every
/// fold is trained once without and once with the elastic net; otherwise
/// only the variant selected in `config` runs.
pub fn cross_validate(
    dataset: &PreparedDataset,
    model_config: &SolarTformerConfig,
    config: &TrainConfig,
    compare: bool,
) -> Result<CvReport, TrainError> {
    config.validate()?;
    if dataset.split.folds.is_empty() {
        return Err(TrainError::Empty("fold list"));
    }
    let variants = if compare {
        vec![false, true]
    } else {
        vec![config.elastic_net.enabled]
    };
    let mut runs = Vec::new();
    for regularized in variants {
        let mut cfg = config.clone();
        cfg.elastic_net.enabled = regularized;
        let mut folds = Vec::new();
        for (k, fold) in dataset.split.folds.iter().enumerate() {
            if fold.train.is_empty() || fold.val.is_empty() {
                return Err(TrainError::Empty("fold"));
            }
            let train = dataset.select(&fold.train);
            let val = dataset.select(&fold.val);
            let seed = derive_seed(config.seed, stream_id(&format!("fold-{k}")));
            let out = fit(model_config, &train, Some(&val), &cfg, seed)?;
            let result = FoldResult {
                fold: k + 1,
                train_mse: evaluate_mse(&out.model, &train)?,
                val_mse: evaluate_mse(&out.model, &val)?,
                curve: out.curve,
            };
            log::info!(
                "cv {} fold {}: train {:.6} val {:.6}",
                if regularized { "regularized" } else { "unregularized" },
                k + 1,
                result.train_mse,
                result.val_mse
            );
            folds.push(result);
        }
        runs.push(CvRun { regularized, folds });
    }
    Ok(CvReport { runs })
}

#[derive(Clone, Debug)]
pub struct FinalOutput {
    /// Weights rounded to `f32`, exactly as a checkpoint stores them.
    pub model: SolarTformer,
    /// Per epoch, with the test MSE in `val_mse`.
    pub curve: Vec<EpochLog>,
    pub report: MetricsReport,
    pub persistence: MetricsReport,
    /// Test-set forecasts in `dataset.split.test` order.
    pub predictions: Vec<Vec<f64>>,
}

/// Trains on the whole training split and scores the test split.
pub fn train_final(
    dataset: &PreparedDataset,
    model_config: &SolarTformerConfig,
    config: &TrainConfig,
    metrics: &MetricsConfig,
) -> Result<FinalOutput, TrainError> {
    let train = dataset.select(&dataset.split.train);
    let test = dataset.select(&dataset.split.test);
    if test.is_empty() {
        return Err(TrainError::Empty("test set"));
    }
    let seed = derive_seed(config.seed, stream_id("final"));
    let mut out = fit(model_config, &train, Some(&test), config, seed)?;
    out.model.params_mut().round_to_f32();
    let predictions = predict_samples(&out.model, &test, 32)?;
    let y: Vec<f64> = test.iter().flat_map(|s| s.target.iter().copied()).collect();
    let y_hat: Vec<f64> = predictions.iter().flatten().copied().collect();
    Ok(FinalOutput {
        report: evaluate_series(&y, &y_hat, metrics)?,
        persistence: persistence_report(&test, metrics)?,
        model: out.model,
        curve: out.curve,
        predictions,
    })
}

/// One row of the architecture grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationSetting {
    NoNormalization,
    NoMetadata,
    NoSkip,
    NoAttention,
    Blocks(usize),
}

/// The eight settings, in table order.
pub fn ablation_settings() -> Vec<AblationSetting> {
    use AblationSetting::*;
    vec![
        NoNormalization,
        NoMetadata,
        NoSkip,
        NoAttention,
        Blocks(1),
        Blocks(2),
        Blocks(4),
        Blocks(6),
    ]
}

impl AblationSetting {
    /// Short name, also accepted by [`str::parse`].
    pub fn key(&self) -> String {
        match self {
            Self::NoNormalization => "no-norm".into(),
            Self::NoMetadata => "no-metadata".into(),
            Self::NoSkip => "no-skip".into(),
            Self::NoAttention => "no-attention".into(),
            Self::Blocks(n) => format!("n{n}"),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::NoNormalization => "Without Normalization".into(),
            Self::NoMetadata => "Without Metadata".into(),
            Self::NoSkip => "Without Skip Connections".into(),
            Self::NoAttention => "Without Attention layers".into(),
            Self::Blocks(n) => format!("N = {n}"),
        }
    }

    pub fn apply(&self, base: &SolarTformerConfig) -> SolarTformerConfig {
        let mut c = base.clone();
        let flags = &mut c.ablation;
        match *self {
            Self::NoNormalization => flags.disable_norm = true,
            Self::NoMetadata => flags.disable_metadata = true,
            Self::NoSkip => flags.disable_skip = true,
            Self::NoAttention => flags.disable_attention = true,
            Self::Blocks(n) => {
                c.blocks = n;
                c.ablation = AblationFlags::default();
            }
        }
        c
    }
}

impl std::str::FromStr for AblationSetting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no-norm" | "no-normalization" => Ok(Self::NoNormalization),
            "no-metadata" => Ok(Self::NoMetadata),
            "no-skip" => Ok(Self::NoSkip),
            "no-attention" => Ok(Self::NoAttention),
            other => other
                .strip_prefix('n')
                .and_then(|n| n.parse().ok())
                .filter(|&n| n > 0)
                .map(Self::Blocks)
                .ok_or_else(|| {
                    format!("unknown ablation {other:?} (no-norm|no-metadata|no-skip|no-attention|n<blocks>)")
                }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: AblationSetting,
    pub train_mse: f64,
    pub val_mse: f64,
    pub test_mse: f64,
}

/// Splits the training part 8:2 by station, then trains and scores each
/// setting on the same split with the same seed.
pub fn ablate(
    dataset: &PreparedDataset,
    base: &SolarTformerConfig,
    config: &TrainConfig,
    settings: &[AblationSetting],
) -> Result<Vec<AblationRow>, TrainError> {
    config.validate()?;
    let train_idx = &dataset.split.train;
    let strata: Vec<&str> = train_idx
        .iter()
        .map(|&i| dataset.samples[i].station_id.as_str())
        .collect();
    let (a_train, a_val) = stratified_split(&strata, 0.2, derive_seed(config.seed, stream_id("ablation-split")))?;
    let pick = |pos: &[usize]| -> Vec<&PreparedSample> { pos.iter().map(|&p| &dataset.samples[train_idx[p]]).collect() };
    let (train, val) = (pick(&a_train), pick(&a_val));
    let test = dataset.select(&dataset.split.test);
    if val.is_empty() || test.is_empty() {
        return Err(TrainError::Empty("ablation validation or test set"));
    }
    let seed = derive_seed(config.seed, stream_id("ablation"));
    let mut rows = Vec::new();
    for &setting in settings {
        let out = fit(&setting.apply(base), &train, None, config, seed)?;
        let row = AblationRow {
            setting,
            train_mse: evaluate_mse(&out.model, &train)?,
            val_mse: evaluate_mse(&out.model, &val)?,
            test_mse: evaluate_mse(&out.model, &test)?,
        };
        log::info!("ablation {}: test {:.6}", setting.key(), row.test_mse);
        rows.push(row);
    }
    Ok(rows)
}
