//! Dense f64 kernel: matrices, the handful of differentiable ops the model
//! needs with hand-written backward passes, Adam, a deterministic RNG and a
//! central finite-difference oracle for checking all of it.

mod adam;
mod gradcheck;
mod matrix;
mod ops;
mod rng;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_grad, max_relative_error, relative_error};
pub use matrix::{linear, linear_backward, Matrix, Parameter};
pub use ops::{
    dropout, elu, elu_grad, grouped_softmax, grouped_softmax_backward, softmax_row,
    weighted_cross_entropy, Dropout, ELU_ALPHA,
};
pub use rng::{derive_seed, RngStream};

pub(crate) use matrix::dot;
pub(crate) use ops::{softmax_backward_into, softmax_into};
