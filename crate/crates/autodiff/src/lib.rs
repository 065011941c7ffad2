//! Tape-based reverse-mode automatic differentiation over 2-D arrays.
//!
//! Every value is a row-major matrix (`[rows, cols]`); vectors are `[1, d]`
//! rows and scalars are `[1, 1]`. Operations are recorded on a [`Tape`] as
//! they are evaluated, and [`Tape::backward`] walks the record in reverse
//! to populate gradients for every leaf that asked for one.
//!
//! ```
//! use gt_autodiff::{Tape, Matrix};
//!
//! let tape = Tape::<f64>::new(false);
//! let x = tape.leaf(Matrix::from_shape_vec((1, 3), vec![1.0, 2.0, 3.0]).unwrap(), true);
//! let y = tape.mul(x, x).unwrap();
//! let loss = tape.sum(y);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap().as_slice().unwrap(), &[2.0, 4.0, 6.0]);
//! ```

mod backward;
pub mod checkpoint;
mod float;
pub mod gru;
pub mod gradcheck;
mod ops;
mod params;
pub mod rng;
mod tape;

pub use float::Float;
pub use gradcheck::{grad_check, grad_check_params, GradCheckConfig, GradCheckReport};
pub use params::{Init, ParamId, ParamStore};
pub use tape::{Tape, Var};

/// Dense row-major matrix used for every tensor value.
pub type Matrix<F> = ndarray::Array2<F>;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("backward called on a value that does not depend on any trainable leaf")]
    Detached,
    #[error("backward requires a scalar [1, 1] loss, got {0:?}")]
    NotScalar(Vec<usize>),
    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape_of<F>(m: &Matrix<F>) -> Vec<usize> {
    m.shape().to_vec()
}
