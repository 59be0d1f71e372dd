//! Short-term photovoltaic power forecasting with a causal-masked transformer.

pub mod autodiff;
pub mod container;
pub mod model;
pub mod data;
pub mod rng;
pub mod metrics;
pub mod synth;
pub mod train;
