use super::{ModelError, ModelParams, SolarTformer, SolarTformerConfig};
use crate::autodiff::Tensor;
use crate::container::{Container, NamedArray};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const KIND: &str = "solartformer-checkpoint";

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    format_version: u32,
    config: SolarTformerConfig,
    parameters: Vec<ParamRecord>,
    /// Caller-defined payload, e.g. the input scalers.
    extra: serde_json::Value,
}

/// A model loaded from disk together with the payload saved alongside it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: SolarTformer,
    pub extra: serde_json::Value,
}

/// Writes the model as `f32` arrays. Weights that are not already
/// `f32`-representable lose precision; see [`ModelParams::round_to_f32`].
pub fn save_checkpoint(
    path: &Path,
    model: &SolarTformer,
    extra: serde_json::Value,
) -> Result<(), ModelError> {
    let params = model.params();
    let meta = CheckpointMeta {
        format_version: CHECKPOINT_FORMAT_VERSION,
        config: model.config().clone(),
        parameters: params
            .names()
            .iter()
            .zip(params.tensors())
            .map(|(n, t)| ParamRecord {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        extra,
    };
    let arrays = params
        .names()
        .iter()
        .zip(params.tensors())
        .map(|(n, t)| NamedArray {
            name: n.clone(),
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        })
        .collect();
    let meta = serde_json::to_value(meta).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    Container::new(KIND, meta, arrays).write(path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let c = Container::read(path)?;
    if c.kind != KIND {
        return Err(ModelError::Checkpoint(format!(
            "{} holds {:?}, not a checkpoint",
            path.display(),
            c.kind
        )));
    }
    let version = c.meta.get("format_version").and_then(|v| v.as_u64());
    if version != Some(CHECKPOINT_FORMAT_VERSION as u64) {
        return Err(ModelError::Checkpoint(format!(
            "format version {version:?}, expected {CHECKPOINT_FORMAT_VERSION}"
        )));
    }
    let meta: CheckpointMeta =
        serde_json::from_value(c.meta.clone()).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    meta.config.validate()?;
    let mut named = Vec::with_capacity(meta.parameters.len());
    for rec in &meta.parameters {
        let array = c
            .get(&rec.name)
            .ok_or_else(|| ModelError::Checkpoint(format!("missing array {}", rec.name)))?;
        if array.shape != rec.shape {
            return Err(ModelError::Checkpoint(format!(
                "{}: manifest shape {:?} but stored {:?}",
                rec.name, rec.shape, array.shape
            )));
        }
        named.push((rec.name.clone(), Tensor::new(array.shape.clone(), array.data.clone())?));
    }
    let params = ModelParams::from_named(&meta.config, named)?;
    Ok(Checkpoint {
        model: SolarTformer::from_parts(meta.config, params)?,
        extra: meta.extra,
    })
}
