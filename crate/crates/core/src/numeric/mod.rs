//! Dense tensors, reverse-mode differentiation and optimization.

mod gradcheck;
mod linalg;
mod optim;
mod params;
mod schedule;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GRAD_CHECK_EPS};
pub use optim::{Adam, AdamConfig};
pub use params::{xavier_uniform, ParamBinder, ParamStore};
pub use schedule::{PlateauConfig, PlateauScheduler};
pub use tape::{BlockDiagonal, Segments, Tape, Var, L2_GUARD};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("ShapeMismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("buffer of length {len} does not fit shape {shape:?}")]
    BadLength { shape: Vec<usize>, len: usize },
    #[error("axis {axis} out of range for {op} on shape {shape:?}")]
    BadAxis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("slice [{start}, {start}+{len}) out of range for shape {shape:?}")]
    BadSlice {
        start: usize,
        len: usize,
        shape: Vec<usize>,
    },
    #[error("{op} over an empty axis")]
    EmptyReduction { op: &'static str },
    #[error("NotScalar: backward needs a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("MissingGrad: no gradient for parameter {name}")]
    MissingGrad { name: String },
    #[error("NonFinite: value {value}")]
    NonFinite { value: f64 },
    #[error("unknown parameter {name}")]
    UnknownParam { name: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
