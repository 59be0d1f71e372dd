//! The forecaster: weather and metadata embeddings, a trainable start token,
//! modality fusion, pre-norm causal encoder blocks and a per-step readout.

mod checkpoint;
mod forward;
mod mask;
mod params;

#[cfg(test)]
mod tests;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use forward::{ForwardOutput, SolarTformer};
pub use mask::{build_causal_mask, CausalMask};
pub use params::{BlockSlots, LinearSlot, ModelParams, NormSlot, ParamLayout};

use crate::autodiff::{TensorError, LAYER_NORM_EPS};
use crate::container::ContainerError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input {what} has shape {got:?}, expected {expected:?}")]
    InputShape {
        what: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("parameters do not match config: {0}")]
    ParamMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Which hidden positions feed the per-step readout.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadoutMode {
    /// Positions `0..T`: the start token through weather step `T-1`, so the
    /// prediction for step `t` only sees weather steps before `t`.
    #[default]
    Shifted,
    /// Positions `1..=T`, dropping the start token; step `t` also sees the
    /// weather at `t`.
    Algorithmic,
}

impl std::str::FromStr for ReadoutMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shifted" => Ok(Self::Shifted),
            "algorithmic" => Ok(Self::Algorithmic),
            other => Err(format!("unknown readout mode {other:?} (shifted|algorithmic)")),
        }
    }
}

/// Architectural switches used by the ablation study.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    /// Layer norms inside the blocks become the identity.
    pub disable_norm: bool,
    /// The metadata embedding is replaced by zeros.
    pub disable_metadata: bool,
    /// Residual connections inside the blocks are dropped.
    pub disable_skip: bool,
    /// Multi-head attention contributes zero.
    pub disable_attention: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolarTformerConfig {
    pub seq_len: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub weather_dim: usize,
    pub metadata_dim: usize,
    pub ffn_hidden: usize,
    pub layer_norm_eps: f64,
    pub ablation: AblationFlags,
    pub readout: ReadoutMode,
}

impl Default for SolarTformerConfig {
    fn default() -> Self {
        Self {
            seq_len: 96,
            model_dim: 64,
            heads: 4,
            blocks: 2,
            weather_dim: 8,
            metadata_dim: 7,
            ffn_hidden: 256,
            layer_norm_eps: LAYER_NORM_EPS,
            ablation: AblationFlags::default(),
            readout: ReadoutMode::Shifted,
        }
    }
}

impl SolarTformerConfig {
    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads.max(1)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.seq_len == 0 || self.weather_dim == 0 || self.metadata_dim == 0 {
            return fail("seq_len, weather_dim and metadata_dim must be positive".into());
        }
        if self.heads == 0 || self.model_dim == 0 || self.model_dim % self.heads != 0 {
            return fail(format!(
                "model_dim {} must be a positive multiple of heads {}",
                self.model_dim, self.heads
            ));
        }
        if self.blocks == 0 {
            return fail("at least one encoder block is required".into());
        }
        if self.ffn_hidden == 0 {
            return fail("ffn_hidden must be positive".into());
        }
        if !(self.layer_norm_eps > 0.0) {
            return fail("layer_norm_eps must be positive".into());
        }
        Ok(())
    }

    /// Number of trainable scalars, derived from the layer sizes.
    pub fn param_count(&self) -> usize {
        let d = self.model_dim;
        let linear = |i: usize, o: usize| i * o + o;
        let block = 4 * linear(d, d) + 2 * 2 * d + linear(d, self.ffn_hidden) + linear(self.ffn_hidden, d);
        linear(self.weather_dim, d)
            + linear(self.metadata_dim, d)
            + d
            + linear(2 * d, d)
            + self.blocks * block
            + linear(d, 1)
    }
}
