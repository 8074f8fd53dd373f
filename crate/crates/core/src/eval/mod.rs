//! Localization and change-point metrics.

mod changepoint;
mod detection;
mod report;

pub use changepoint::{changepoint_f1, ChangePointScore};
pub use detection::{average_precision, temporal_iou, Prediction};
pub use report::{map_report, EvalReport, DEFAULT_THRESHOLDS};
