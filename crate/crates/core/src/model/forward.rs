use super::mask::{build_causal_mask, CausalMask};
use super::params::{BlockSlots, LinearSlot, ModelParams, NormSlot};
use super::{ModelError, ReadoutMode, SolarTformerConfig};
use crate::autodiff::{Graph, Tensor, Var};
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SolarTformer {
    config: SolarTformerConfig,
    params: ModelParams,
}

/// Graph handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `[B, T]` per-step power predictions.
    pub prediction: Var,
    /// Per block, the `[B, h, T+1, T+1]` attention weights (absent when
    /// attention is disabled).
    pub attention: Vec<Option<Var>>,
}

fn linear(g: &mut Graph, vars: &[Var], slot: LinearSlot, x: Var) -> Result<Var, ModelError> {
    let y = g.matmul(x, vars[slot.weight])?;
    Ok(g.add(y, vars[slot.bias])?)
}

fn norm(g: &mut Graph, vars: &[Var], slot: NormSlot, x: Var, eps: f64) -> Result<Var, ModelError> {
    Ok(g.layer_norm(x, vars[slot.gain], vars[slot.bias], eps)?)
}

/// Causal multi-head self-attention over `x: [B, L, d]`.
///
/// Each head computes `softmax(Q Kᵀ / √d_k + M) V` in a `d/heads`
/// dimensional subspace; heads are concatenated and projected back to `d`.
/// Returns the output and the attention weights.
pub fn multi_head_attention(
    g: &mut Graph,
    vars: &[Var],
    slots: &BlockSlots,
    x: Var,
    mask: &CausalMask,
    heads: usize,
) -> Result<(Var, Var), ModelError> {
    let shape = g.shape(x).to_vec();
    let (b, l, d) = (shape[0], shape[1], shape[2]);
    if heads == 0 || d % heads != 0 {
        return Err(ModelError::Config(format!("{d} is not divisible by {heads} heads")));
    }
    let dk = d / heads;
    let split = |g: &mut Graph, slot: LinearSlot, axes: &[usize]| -> Result<Var, ModelError> {
        let p = linear(g, vars, slot, x)?;
        let p = g.reshape(p, &[b, l, heads, dk])?;
        Ok(g.permute(p, axes)?)
    };
    let q = split(g, slots.query, &[0, 2, 1, 3])?;
    let kt = split(g, slots.key, &[0, 2, 3, 1])?;
    let v = split(g, slots.value, &[0, 2, 1, 3])?;
    let scores = g.matmul(q, kt)?;
    let scores = g.scale(scores, 1.0 / (dk as f64).sqrt())?;
    let weights = g.masked_softmax(scores, mask.tensor())?;
    let ctx = g.matmul(weights, v)?;
    let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = g.reshape(ctx, &[b, l, d])?;
    Ok((linear(g, vars, slots.output, ctx)?, weights))
}

/// One pre-norm encoder block: `u = x + MHA(LN(x))`, `out = u + FFN(LN(u))`,
/// with the ablation switches of `config` applied.
pub fn encoder_block(
    g: &mut Graph,
    vars: &[Var],
    slots: &BlockSlots,
    x: Var,
    mask: &CausalMask,
    config: &SolarTformerConfig,
) -> Result<(Var, Option<Var>), ModelError> {
    let flags = config.ablation;
    let eps = config.layer_norm_eps;
    let skip = !flags.disable_skip;

    let mut weights = None;
    let u = if flags.disable_attention {
        if skip {
            x
        } else {
            let shape = g.shape(x).to_vec();
            g.constant(Tensor::zeros(&shape))
        }
    } else {
        let normed = if flags.disable_norm {
            x
        } else {
            norm(g, vars, slots.norm_attn, x, eps)?
        };
        let (attn, w) = multi_head_attention(g, vars, slots, normed, mask, config.heads)?;
        weights = Some(w);
        if skip {
            g.add(x, attn)?
        } else {
            attn
        }
    };

    let normed = if flags.disable_norm {
        u
    } else {
        norm(g, vars, slots.norm_ffn, u, eps)?
    };
    let hidden = linear(g, vars, slots.ffn_in, normed)?;
    let hidden = g.relu(hidden)?;
    let ffn = linear(g, vars, slots.ffn_out, hidden)?;
    let out = if skip { g.add(u, ffn)? } else { ffn };
    Ok((out, weights))
}

impl SolarTformer {
    pub fn new<R: Rng>(config: SolarTformerConfig, rng: &mut R) -> Result<Self, ModelError> {
        let params = ModelParams::init(&config, rng)?;
        Ok(Self { config, params })
    }

    pub fn from_parts(config: SolarTformerConfig, params: ModelParams) -> Result<Self, ModelError> {
        let expected = ModelParams::zeros(&config)?;
        if expected.names() != params.names() {
            return Err(ModelError::ParamMismatch("parameter names differ from config layout".into()));
        }
        for ((name, want), got) in expected.names().iter().zip(expected.tensors()).zip(params.tensors()) {
            if want.shape() != got.shape() {
                return Err(ModelError::ParamMismatch(format!(
                    "{name} has shape {:?}, expected {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &SolarTformerConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    /// Puts every weight on the graph, as parameters when `trainable`.
    pub fn register(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params
            .tensors()
            .iter()
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect()
    }

    /// Records the forward pass for a batch: `weather: [B, T, D_w]`,
    /// `metadata: [B, D_m]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        vars: &[Var],
        weather: Var,
        metadata: Var,
    ) -> Result<ForwardOutput, ModelError> {
        let c = &self.config;
        let layout = self.params.layout();
        let (t, d) = (c.seq_len, c.model_dim);
        if vars.len() != self.params.tensors().len() {
            return Err(ModelError::ParamMismatch(format!(
                "{} graph variables for {} parameters",
                vars.len(),
                self.params.tensors().len()
            )));
        }
        let ws = g.shape(weather).to_vec();
        if ws.len() != 3 || ws[1] != t || ws[2] != c.weather_dim {
            return Err(ModelError::InputShape {
                what: "weather",
                expected: vec![ws.first().copied().unwrap_or(1), t, c.weather_dim],
                got: ws,
            });
        }
        let b = ws[0];
        if g.shape(metadata) != [b, c.metadata_dim] {
            return Err(ModelError::InputShape {
                what: "metadata",
                expected: vec![b, c.metadata_dim],
                got: g.shape(metadata).to_vec(),
            });
        }

        let ew = linear(g, vars, layout.weather_embed, weather)?;
        let ew = g.relu(ew)?;
        let em = if c.ablation.disable_metadata {
            g.constant(Tensor::zeros(&[b, d]))
        } else {
            let em = linear(g, vars, layout.metadata_embed, metadata)?;
            g.relu(em)?
        };

        let start = g.tile(vars[layout.start_token], 0, b)?;
        let start = g.tile(start, 1, 1)?;
        let z = g.concat(&[start, ew], 1)?;
        let tiled = g.tile(em, 1, t + 1)?;
        let fused = g.concat(&[z, tiled], 2)?;
        let h = linear(g, vars, layout.fusion, fused)?;
        let mut h = g.relu(h)?;

        let mask = build_causal_mask(t + 1)?;
        let mut attention = Vec::with_capacity(layout.blocks.len());
        for slots in &layout.blocks {
            let (out, w) = encoder_block(g, vars, slots, h, &mask, c)?;
            h = out;
            attention.push(w);
        }

        let first = match c.readout {
            ReadoutMode::Shifted => 0,
            ReadoutMode::Algorithmic => 1,
        };
        let h = g.slice(h, 1, first, t)?;
        let y = linear(g, vars, layout.readout, h)?;
        let prediction = g.reshape(y, &[b, t])?;
        Ok(ForwardOutput {
            prediction,
            attention,
        })
    }

    /// Inference on a batch; returns `[B, T]`.
    pub fn predict_batch(&self, weather: &Tensor, metadata: &Tensor) -> Result<Tensor, ModelError> {
        let mut g = Graph::new();
        let vars = self.register(&mut g, false);
        let w = g.constant(weather.clone());
        let m = g.constant(metadata.clone());
        let out = self.forward(&mut g, &vars, w, m)?;
        Ok(g.value(out.prediction).clone())
    }

    /// Inference on one day: `weather: [T, D_w]`, `metadata: [D_m]`.
    pub fn predict(&self, weather: &Tensor, metadata: &Tensor) -> Result<Vec<f64>, ModelError> {
        let c = &self.config;
        let w = weather.clone().reshaped(&[1, c.seq_len, c.weather_dim]).map_err(|_| {
            ModelError::InputShape {
                what: "weather",
                expected: vec![c.seq_len, c.weather_dim],
                got: weather.shape().to_vec(),
            }
        })?;
        let m = metadata.clone().reshaped(&[1, c.metadata_dim]).map_err(|_| {
            ModelError::InputShape {
                what: "metadata",
                expected: vec![c.metadata_dim],
                got: metadata.shape().to_vec(),
            }
        })?;
        Ok(self.predict_batch(&w, &m)?.into_data())
    }

    /// Attention weights of every block for one batch.
    pub fn attention_weights(
        &self,
        weather: &Tensor,
        metadata: &Tensor,
    ) -> Result<Vec<Option<Tensor>>, ModelError> {
        let mut g = Graph::new();
        let vars = self.register(&mut g, false);
        let w = g.constant(weather.clone());
        let m = g.constant(metadata.clone());
        let out = self.forward(&mut g, &vars, w, m)?;
        Ok(out
            .attention
            .iter()
            .map(|a| a.map(|v| g.value(v).clone()))
            .collect())
    }
}
