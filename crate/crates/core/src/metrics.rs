//! Forecast quality measures: MSE, sum-normalized percentage error,
//! histogram KL divergence and Lin's concordance correlation coefficient.

use crate::autodiff::Tensor;
use crate::data::{PreparedSample, SLOTS_PER_DAY};
use crate::model::{ModelError, SolarTformer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} points, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("percentage error is undefined when every target is zero")]
    UndefinedPercentageError,
    #[error("non-finite value in series")]
    NonFinite,
    #[error("invalid metrics config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Histogram bins for the KL estimate.
    pub bins: usize,
    /// Additive smoothing applied to both histograms before renormalizing.
    pub kl_epsilon: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            bins: 50,
            kl_epsilon: 1e-10,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.bins < 2 {
            return Err(MetricsError::Config(format!("need at least 2 bins, got {}", self.bins)));
        }
        if !(self.kl_epsilon >= 0.0 && self.kl_epsilon.is_finite()) {
            return Err(MetricsError::Config(format!("bad smoothing {}", self.kl_epsilon)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    /// Percent.
    pub pe: f64,
    /// Nats.
    pub kld: f64,
    pub ccc: f64,
    pub n_points: usize,
    pub histogram_bins: usize,
    pub kl_epsilon: f64,
}

fn check(y: &[f64], y_hat: &[f64], need: usize) -> Result<(), MetricsError> {
    if y.len() != y_hat.len() {
        return Err(MetricsError::LengthMismatch(y.len(), y_hat.len()));
    }
    if y.len() < need {
        return Err(MetricsError::TooShort { need, got: y.len() });
    }
    if y.iter().chain(y_hat).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    Ok(())
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricsError> {
    check(y, y_hat, 1)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// `100 · Σ|y − ŷ| / Σ|y|`; defined whenever some target is non-zero.
pub fn percentage_error(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricsError> {
    check(y, y_hat, 1)?;
    let denom: f64 = y.iter().map(|v| v.abs()).sum();
    if denom == 0.0 {
        return Err(MetricsError::UndefinedPercentageError);
    }
    let num: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok(100.0 * num / denom)
}

fn histogram(values: &[f64], lo: f64, width: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        h[b] += 1.0;
    }
    let n = values.len() as f64;
    h.iter_mut().for_each(|c| *c /= n);
    h
}

/// `KL(P‖Q)` between histograms of `y` (P) and `ŷ` (Q) over `bins` equal
/// bins spanning both series. Each histogram gets `epsilon` added per bin
/// and is renormalized; empty-P bins contribute nothing.
pub fn kl_divergence(y: &[f64], y_hat: &[f64], bins: usize, epsilon: f64) -> Result<f64, MetricsError> {
    check(y, y_hat, 1)?;
    MetricsConfig { bins, kl_epsilon: epsilon }.validate()?;
    let (lo, hi) = y
        .iter()
        .chain(y_hat)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi == lo {
        // Both series are the same constant.
        return Ok(0.0);
    }
    let width = (hi - lo) / bins as f64;
    let norm = 1.0 + bins as f64 * epsilon;
    let p = histogram(y, lo, width, bins);
    let q = histogram(y_hat, lo, width, bins);
    Ok(p.iter()
        .zip(&q)
        .map(|(&p, &q)| {
            let (p, q) = ((p + epsilon) / norm, (q + epsilon) / norm);
            if p == 0.0 {
                0.0
            } else {
                p * (p / q).ln()
            }
        })
        .sum())
}

/// Lin's concordance correlation coefficient with population moments. If
/// either series is constant the result is 0, or 1 when both are the same
/// constant.
pub fn ccc(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricsError> {
    check(y, y_hat, 2)?;
    let constant = |s: &[f64]| s.iter().all(|&v| v == s[0]);
    match (constant(y), constant(y_hat)) {
        (true, true) => return Ok(if y[0] == y_hat[0] { 1.0 } else { 0.0 }),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let n = y.len() as f64;
    let mx = y.iter().sum::<f64>() / n;
    let my = y_hat.iter().sum::<f64>() / n;
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(y_hat) {
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
        cov += (a - mx) * (b - my);
    }
    let (vx, vy, cov) = (vx / n, vy / n, cov / n);
    Ok(2.0 * cov / (vx + vy + (mx - my) * (mx - my)))
}

/// All four metrics over a flattened paired series.
pub fn evaluate_series(y: &[f64], y_hat: &[f64], config: &MetricsConfig) -> Result<MetricsReport, MetricsError> {
    config.validate()?;
    Ok(MetricsReport {
        mse: mse(y, y_hat)?,
        pe: percentage_error(y, y_hat)?,
        kld: kl_divergence(y, y_hat, config.bins, config.kl_epsilon)?,
        ccc: ccc(y, y_hat)?,
        n_points: y.len(),
        histogram_bins: config.bins,
        kl_epsilon: config.kl_epsilon,
    })
}

/// Per-sample forecasts, computed in batches of `batch`.
pub fn predict_samples(
    model: &SolarTformer,
    samples: &[&PreparedSample],
    batch: usize,
) -> Result<Vec<Vec<f64>>, ModelError> {
    let c = model.config();
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch.max(1)) {
        let b = chunk.len();
        let w: Vec<f64> = chunk.iter().flat_map(|s| s.weather.iter().copied()).collect();
        let m: Vec<f64> = chunk.iter().flat_map(|s| s.metadata.iter().copied()).collect();
        let w = Tensor::new(vec![b, c.seq_len, c.weather_dim], w).map_err(|_| ModelError::InputShape {
            what: "weather",
            expected: vec![c.seq_len, c.weather_dim],
            got: vec![chunk[0].weather.len()],
        })?;
        let m = Tensor::new(vec![b, c.metadata_dim], m).map_err(|_| ModelError::InputShape {
            what: "metadata",
            expected: vec![c.metadata_dim],
            got: vec![chunk[0].metadata.len()],
        })?;
        let y = model.predict_batch(&w, &m)?;
        out.extend(y.data().chunks(c.seq_len).map(<[f64]>::to_vec));
    }
    Ok(out)
}

/// Runs the model on every sample and scores the flattened predictions.
pub fn evaluate(
    model: &SolarTformer,
    samples: &[&PreparedSample],
    config: &MetricsConfig,
) -> Result<MetricsReport, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::TooShort { need: 1, got: 0 });
    }
    let predictions = predict_samples(model, samples, 32)?;
    let y: Vec<f64> = samples.iter().flat_map(|s| s.target.iter().copied()).collect();
    let y_hat: Vec<f64> = predictions.into_iter().flatten().collect();
    evaluate_series(&y, &y_hat, config)
}

/// Previous-slot forecast for one day; the first slot repeats itself.
pub fn persistence_forecast(day: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(day.len());
    if let Some(&first) = day.first() {
        out.push(first);
        out.extend_from_slice(&day[..day.len() - 1]);
    }
    out
}

/// Metrics of the persistence forecast over a set of days.
pub fn persistence_report(samples: &[&PreparedSample], config: &MetricsConfig) -> Result<MetricsReport, MetricsError> {
    let mut y = Vec::with_capacity(samples.len() * SLOTS_PER_DAY);
    let mut y_hat = Vec::with_capacity(y.capacity());
    for s in samples {
        y.extend_from_slice(&s.target);
        y_hat.extend(persistence_forecast(&s.target));
    }
    evaluate_series(&y, &y_hat, config)
}
