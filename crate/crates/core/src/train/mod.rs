//! Optimization and the experiment protocols built on it: cross-validation,
//! final training with test metrics, and the architecture ablation grid.

mod adamw;
pub mod artifacts;
mod fit;
mod protocols;

pub use adamw::{AdamWConfig, AdamWState};
pub use fit::{elastic_net_term, evaluate_mse, fit, train_epoch, EpochLog, FitOutput};
pub use protocols::{
    ablate, ablation_settings, cross_validate, train_final, AblationRow, AblationSetting, CvReport,
    CvRow, CvRun, FinalOutput, FoldResult,
};

use crate::autodiff::{Tensor, TensorError};
use crate::data::DataError;
use crate::metrics::MetricsError;
use crate::model::ModelError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite gradient for parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl TrainError {
    /// True when the failure came from a NaN or infinity.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Self::NonFiniteGradient { .. }
                | Self::NonFiniteLoss { .. }
                | Self::Tensor(TensorError::NonFinite { .. })
                | Self::Model(ModelError::Tensor(TensorError::NonFinite { .. }))
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElasticNetConfig {
    pub enabled: bool,
    pub l1: f64,
    pub l2: f64,
}

impl Default for ElasticNetConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            l1: 1e-4,
            l2: 1e-4,
        }
    }
}

/// `λ1·Σ|θ| + λ2·Σθ²` over every tensor, regardless of `enabled`.
pub fn elastic_net_penalty(params: &[Tensor], config: &ElasticNetConfig) -> f64 {
    let (mut l1, mut l2) = (0.0, 0.0);
    for v in params.iter().flat_map(|t| t.data()) {
        l1 += v.abs();
        l2 += v * v;
    }
    config.l1 * l1 + config.l2 * l2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    pub elastic_net: ElasticNetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 32,
            seed: 0,
            optimizer: AdamWConfig::default(),
            elastic_net: ElasticNetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        let e = &self.elastic_net;
        if !(e.l1 >= 0.0 && e.l2 >= 0.0) {
            return Err(TrainError::Config("elastic-net coefficients must be non-negative".into()));
        }
        self.optimizer.validate()
    }
}
