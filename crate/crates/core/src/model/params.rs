use super::{ModelError, SolarTformerConfig};
use crate::autodiff::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinearSlot {
    pub weight: usize,
    pub bias: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NormSlot {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSlots {
    pub query: LinearSlot,
    pub key: LinearSlot,
    pub value: LinearSlot,
    pub output: LinearSlot,
    pub norm_attn: NormSlot,
    pub norm_ffn: NormSlot,
    pub ffn_in: LinearSlot,
    pub ffn_out: LinearSlot,
}

/// Positions of each weight in the flat parameter list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub weather_embed: LinearSlot,
    pub metadata_embed: LinearSlot,
    pub start_token: usize,
    pub fusion: LinearSlot,
    pub blocks: Vec<BlockSlots>,
    pub readout: LinearSlot,
}

/// All trainable weights, as an ordered list of named tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    layout: ParamLayout,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

enum Init {
    Glorot,
    Zeros,
    Ones,
    Normal(f64),
}

struct Builder<'a, R: Rng> {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    rng: Option<&'a mut R>,
}

impl<R: Rng> Builder<'_, R> {
    fn push(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        let mut t = Tensor::zeros(shape);
        if let Some(rng) = self.rng.as_deref_mut() {
            match init {
                Init::Zeros => {}
                Init::Ones => t.data_mut().fill(1.0),
                Init::Glorot => {
                    let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                    for v in t.data_mut() {
                        *v = rng.random_range(-limit..=limit);
                    }
                }
                Init::Normal(sd) => {
                    let normal = Normal::new(0.0, sd).expect("positive std");
                    for v in t.data_mut() {
                        *v = normal.sample(rng);
                    }
                }
            }
        }
        self.names.push(name);
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> LinearSlot {
        LinearSlot {
            weight: self.push(format!("{name}.weight"), &[fan_in, fan_out], Init::Glorot),
            bias: self.push(format!("{name}.bias"), &[fan_out], Init::Zeros),
        }
    }

    fn norm(&mut self, name: &str, d: usize) -> NormSlot {
        NormSlot {
            gain: self.push(format!("{name}.gain"), &[d], Init::Ones),
            bias: self.push(format!("{name}.bias"), &[d], Init::Zeros),
        }
    }
}

fn build<R: Rng>(config: &SolarTformerConfig, rng: Option<&mut R>) -> ModelParams {
    let d = config.model_dim;
    let mut b = Builder {
        names: Vec::new(),
        tensors: Vec::new(),
        rng,
    };
    let weather_embed = b.linear("weather_embed", config.weather_dim, d);
    let metadata_embed = b.linear("metadata_embed", config.metadata_dim, d);
    let start_token = b.push("start_token".into(), &[d], Init::Normal(0.02));
    let fusion = b.linear("fusion", 2 * d, d);
    let blocks = (0..config.blocks)
        .map(|i| BlockSlots {
            query: b.linear(&format!("blocks.{i}.attn.query"), d, d),
            key: b.linear(&format!("blocks.{i}.attn.key"), d, d),
            value: b.linear(&format!("blocks.{i}.attn.value"), d, d),
            output: b.linear(&format!("blocks.{i}.attn.output"), d, d),
            norm_attn: b.norm(&format!("blocks.{i}.norm_attn"), d),
            norm_ffn: b.norm(&format!("blocks.{i}.norm_ffn"), d),
            ffn_in: b.linear(&format!("blocks.{i}.ffn.hidden"), d, config.ffn_hidden),
            ffn_out: b.linear(&format!("blocks.{i}.ffn.output"), config.ffn_hidden, d),
        })
        .collect();
    let readout = b.linear("readout", d, 1);
    ModelParams {
        layout: ParamLayout {
            weather_embed,
            metadata_embed,
            start_token,
            fusion,
            blocks,
            readout,
        },
        names: b.names,
        tensors: b.tensors,
    }
}

impl ModelParams {
    /// Glorot-uniform matrices, zero biases, unit norm gains and a
    /// `N(0, 0.02²)` start token.
    pub fn init<R: Rng>(config: &SolarTformerConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(build(config, Some(rng)))
    }

    /// All-zero parameters with the layout of `config`.
    pub fn zeros(config: &SolarTformerConfig) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(build::<rand_chacha::ChaCha8Rng>(config, None))
    }

    /// Rebuilds parameters from named tensors, checking names and shapes
    /// against the layout implied by `config`.
    pub fn from_named(
        config: &SolarTformerConfig,
        named: Vec<(String, Tensor)>,
    ) -> Result<Self, ModelError> {
        let mut params = Self::zeros(config)?;
        if named.len() != params.tensors.len() {
            return Err(ModelError::ParamMismatch(format!(
                "expected {} tensors, got {}",
                params.tensors.len(),
                named.len()
            )));
        }
        for (i, (name, t)) in named.into_iter().enumerate() {
            if name != params.names[i] {
                return Err(ModelError::ParamMismatch(format!(
                    "tensor {i} is {name:?}, expected {:?}",
                    params.names[i]
                )));
            }
            if t.shape() != params.tensors[i].shape() {
                return Err(ModelError::ParamMismatch(format!(
                    "{name} has shape {:?}, expected {:?}",
                    t.shape(),
                    params.tensors[i].shape()
                )));
            }
            params.tensors[i] = t;
        }
        Ok(params)
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &mut self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// `Σ|θ|` over every parameter.
    pub fn l1_norm(&self) -> f64 {
        self.tensors.iter().flat_map(|t| t.data()).map(|v| v.abs()).sum()
    }

    /// Rounds every weight to `f32` precision, the precision checkpoints
    /// store.
    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            t.round_to_f32();
        }
    }
}
