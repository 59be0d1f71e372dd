use super::{AdamWState, ElasticNetConfig, TrainConfig, TrainError};
use crate::autodiff::{Graph, Tensor, TensorError, Var};
use crate::data::PreparedSample;
use crate::metrics::predict_samples;
use crate::model::{SolarTformer, SolarTformerConfig};
use crate::rng::seeded;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Point-weighted mean of the batch MSEs seen during the epoch.
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct FitOutput {
    pub model: SolarTformer,
    pub curve: Vec<EpochLog>,
}

/// `λ1·Σ|θ| + λ2·Σθ²` recorded on the graph.
pub fn elastic_net_term(g: &mut Graph, vars: &[Var], config: &ElasticNetConfig) -> Result<Var, TensorError> {
    let mut total = g.constant(Tensor::scalar(0.0));
    for &v in vars {
        let a = g.abs(v)?;
        let a = g.sum(a)?;
        let a = g.scale(a, config.l1)?;
        let s = g.square(v)?;
        let s = g.sum(s)?;
        let s = g.scale(s, config.l2)?;
        total = g.add(total, a)?;
        total = g.add(total, s)?;
    }
    Ok(total)
}

fn batch_tensors(
    samples: &[&PreparedSample],
    config: &SolarTformerConfig,
) -> Result<(Tensor, Tensor, Tensor), TensorError> {
    let b = samples.len();
    let w = samples.iter().flat_map(|s| s.weather.iter().copied()).collect();
    let m = samples.iter().flat_map(|s| s.metadata.iter().copied()).collect();
    let y = samples.iter().flat_map(|s| s.target.iter().copied()).collect();
    Ok((
        Tensor::new(vec![b, config.seq_len, config.weather_dim], w)?,
        Tensor::new(vec![b, config.metadata_dim], m)?,
        Tensor::new(vec![b, config.seq_len], y)?,
    ))
}

/// One shuffled pass in minibatches. The loss is MSE plus the elastic-net
/// term when enabled; the returned value is the MSE alone.
pub fn train_epoch(
    model: &mut SolarTformer,
    samples: &[&PreparedSample],
    optimizer: &mut AdamWState,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::Empty("training set"));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for chunk in order.chunks(config.batch_size) {
        let batch: Vec<&PreparedSample> = chunk.iter().map(|&i| samples[i]).collect();
        let (w, m, y) = batch_tensors(&batch, model.config())?;
        let mut g = Graph::new();
        let vars = model.register(&mut g, true);
        let (wv, mv, yv) = (g.constant(w), g.constant(m), g.constant(y));
        let out = model.forward(&mut g, &vars, wv, mv)?;
        let mse = g.mse(out.prediction, yv)?;
        let loss = if config.elastic_net.enabled {
            let penalty = elastic_net_term(&mut g, &vars, &config.elastic_net)?;
            g.add(mse, penalty)?
        } else {
            mse
        };
        total += g.value(mse).data()[0] * batch.len() as f64;
        g.backward(loss)?;
        let grads: Vec<Vec<f64>> = vars
            .iter()
            .zip(model.params().tensors())
            .map(|(&v, p)| g.take_grad(v).unwrap_or_else(|| vec![0.0; p.len()]))
            .collect();
        optimizer.step(model.params_mut().tensors_mut(), &grads)?;
    }
    Ok(total / samples.len() as f64)
}

/// MSE of the model over every point of `samples`.
pub fn evaluate_mse(model: &SolarTformer, samples: &[&PreparedSample]) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::Empty("evaluation set"));
    }
    let preds = predict_samples(model, samples, 32)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (s, p) in samples.iter().zip(&preds) {
        for (a, b) in s.target.iter().zip(p) {
            sum += (a - b) * (a - b);
        }
        n += p.len();
    }
    Ok(sum / n as f64)
}

/// Trains a freshly initialized model. `seed` fixes both the initial
/// weights and the batch order.
pub fn fit(
    model_config: &SolarTformerConfig,
    train: &[&PreparedSample],
    val: Option<&[&PreparedSample]>,
    config: &TrainConfig,
    seed: u64,
) -> Result<FitOutput, TrainError> {
    config.validate()?;
    let mut model = SolarTformer::new(model_config.clone(), &mut seeded(seed, "init"))?;
    let mut optimizer = AdamWState::new(config.optimizer, model.params().tensors());
    let mut shuffle = seeded(seed, "shuffle");
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let train_mse = train_epoch(&mut model, train, &mut optimizer, config, &mut shuffle)?;
        if !train_mse.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        let val_mse = val.map(|v| evaluate_mse(&model, v)).transpose()?;
        log::debug!("epoch {epoch}: train {train_mse:.6} val {val_mse:?}");
        curve.push(EpochLog {
            epoch,
            train_mse,
            val_mse,
        });
    }
    Ok(FitOutput { model, curve })
}
