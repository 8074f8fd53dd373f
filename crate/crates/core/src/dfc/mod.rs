//! Change-point detection with a two-level latent model.

mod changepoints;
mod config;
mod detect;
mod elbo;
mod model;
mod train;

pub use changepoints::ChangePointSet;
pub use config::DfcConfig;
pub use detect::{
    boundary_condition, detect_sequence, detect_trace, step_detect, ChangeEvent, DetectionTrace, DfcState, StepOutcome,
};
pub use elbo::{elbo_grad_check, elbo_loss, elbo_with_decisions, ElboBreakdown, ElboNoise};
pub use model::{DfcModel, DfcNet};
pub use train::{surprise_mask, train_dfc, training_decisions};
