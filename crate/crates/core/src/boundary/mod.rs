//! Change-point pruning and segment extraction.

mod extract;
mod lcs;
mod segment;

pub use extract::{extract_segments, localize};
pub use lcs::{classic_lcs, lcs_prune, LcsConfig};
pub use segment::Segment;
