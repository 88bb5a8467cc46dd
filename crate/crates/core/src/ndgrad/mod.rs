//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s; values are
//! computed eagerly and [`Tape::gradients`] replays the record backwards.
//! Node ids grow monotonically, so id order is a topological order and the
//! backward sweep visits each node once.
//!
//! ```
//! use qrcal::ndgrad::{Tape, Tensor};
//!
//! let tape = Tape::<f64>::new();
//! let x = tape.param(Tensor::scalar(3.0));
//! let y = x.mul(x).unwrap();
//! let g = tape.gradients(y, &[x]).unwrap();
//! assert_eq!(g[0].item(), 6.0);
//! ```

mod check;
mod tape;
mod tensor;

pub use check::finite_diff_check;
pub use tape::{Tape, Var};
pub use tensor::Tensor;


use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("tensor of shape {shape:?} cannot hold {len} values")]
    BadData { shape: Vec<usize>, len: usize },
    #[error("{op}: argument outside the domain ({detail})")]
    Domain { op: &'static str, detail: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("gradient requested of a non-scalar output with shape {0:?}")]
    NonScalar(Vec<usize>),
    #[error("node {0} was not created with requires-grad set")]
    NotDifferentiable(usize),
    #[error("index {index} out of range for extent {extent} in {op}")]
    Index {
        op: &'static str,
        index: usize,
        extent: usize,
    },
}
