//! Differentiable kernels: matrices, a reverse-mode tape, dense and GRU
//! layers, diagonal Gaussians, Adam and a finite-difference gradient check.

mod adam;
mod gaussian;
mod gradcheck;
mod layers;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use gaussian::{gaussian_kl, reparam_sample, DiagonalGaussian, GaussianVar, LOG_VAR_MAX, LOG_VAR_MIN};
pub use gradcheck::{grad_check, grad_check_subset, relative_error, GradCheckReport};
pub use layers::{dense_forward, gru_step, Activation, Dense, DenseStack, GaussianHead, GruCell};
pub use params::{Gradients, Param, ParamId, ParamStore};
pub use tape::{softmax_rows, softplus, top_k_rows, Tape, Var};
pub use tensor::{cosine_similarity, Matrix};
