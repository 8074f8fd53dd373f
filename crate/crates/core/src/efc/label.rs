use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which of the three attention branches a quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Foreground,
    Background,
    Context,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::Foreground, Branch::Background, Branch::Context];

    /// Column of this branch in the attention matrix.
    pub fn index(self) -> usize {
        match self {
            Branch::Foreground => 0,
            Branch::Background => 1,
            Branch::Context => 2,
        }
    }
}

/// Video-level action label over `C` classes, l1-normalised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoLabel(Vec<f64>);

impl VideoLabel {
    /// Normalises non-negative weights to sum one.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::LabelUndefined(
                "label weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::LabelUndefined("no action class present".into()));
        }
        Ok(VideoLabel(weights.into_iter().map(|w| w / total).collect()))
    }

    /// Multi-hot over `classes` (duplicates collapse), then normalised.
    pub fn from_classes(classes: impl IntoIterator<Item = usize>, num_classes: usize) -> Result<Self> {
        let mut w = vec![0.0; num_classes];
        for c in classes {
            if c >= num_classes {
                return Err(Error::LabelUndefined(format!("class {c} outside [0, {num_classes})")));
            }
            w[c] = 1.0;
        }
        Self::new(w)
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Index of the largest entry (lowest index on ties).
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Branch target over `C + 1` classes (background last), normalised to sum one.
///
/// Foreground keeps the action entries with background 0; background is the
/// background one-hot; context keeps the action entries and sets background to 1.
pub fn make_branch_label(y: &VideoLabel, branch: Branch) -> Vec<f64> {
    let c = y.num_classes();
    let mut t = vec![0.0; c + 1];
    match branch {
        Branch::Foreground => t[..c].copy_from_slice(y.as_slice()),
        Branch::Background => t[c] = 1.0,
        Branch::Context => {
            t[..c].copy_from_slice(y.as_slice());
            t[c] = 1.0;
        }
    }
    let total: f64 = t.iter().sum();
    t.iter_mut().for_each(|v| *v /= total);
    t
}
