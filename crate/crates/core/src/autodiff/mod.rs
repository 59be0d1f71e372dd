//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Operations are recorded on a [`Graph`] as they execute. A single call to
//! [`Graph::backward`] on a scalar loss fills in the gradient of every
//! parameter reachable from it. Only the operations the forecaster needs are
//! provided, plus a central-difference checker for validating them.

mod gemm;
mod gradcheck;
mod graph;
mod ops;
mod tensor;


pub use gradcheck::{grad_check, grad_check_coords, GradCheckReport, REL_ERROR_FLOOR};
pub use graph::{Graph, Var};
pub use ops::{LAYER_NORM_EPS, MASK_SENTINEL};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} holds {} elements, got {len}", shape.iter().product::<usize>())]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("shape {shape:?} has a zero-sized dimension")]
    InvalidShape { shape: Vec<usize> },
    #[error("{op}: axis {axis} out of range for {ndim} dimensions")]
    AxisOutOfRange {
        op: &'static str,
        axis: usize,
        ndim: usize,
    },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("graph was already back-propagated")]
    BackwardTwice,
    #[error("{0}")]
    InvalidArgument(String),
}
