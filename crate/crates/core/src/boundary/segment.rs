use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scored action instance over snippets `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub class_id: usize,
    pub score: f64,
}

impl Segment {
    pub fn new(start: usize, end: usize, class_id: usize, score: f64) -> Result<Self> {
        if start >= end {
            return Err(Error::Malformed {
                what: "segment",
                reason: format!("empty interval [{start}, {end})"),
            });
        }
        if !score.is_finite() {
            return Err(Error::NonFinite {
                context: "segment score".into(),
            });
        }
        Ok(Segment {
            start,
            end,
            class_id,
            score,
        })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}
