//! Three-branch attention classifier producing class activation maps.

mod config;
mod label;
mod loss;
mod model;
mod train;

pub use config::EfcConfig;
pub use label::{make_branch_label, Branch, VideoLabel};
pub use loss::{efc_grad_check, efc_loss, EfcLossBreakdown, LOG_EPS};
pub use model::{branch_video_score, cas_forward, classify, foreground_attention, CasMap, EfcModel, EfcNet};
pub use train::{classification_accuracy, train_efc};
