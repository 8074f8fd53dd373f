use serde::{Deserialize, Serialize};

use crate::dfc::ChangePointSet;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChangePointScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub detected: usize,
    pub truth: usize,
}

impl ChangePointScore {
    /// Scores from raw counts; an empty side gives 0 unless both are empty.
    pub fn from_counts(matched: usize, detected: usize, truth: usize) -> Self {
        if detected == 0 && truth == 0 {
            return ChangePointScore {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
                matched,
                detected,
                truth,
            };
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matched, detected);
        let recall = ratio(matched, truth);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ChangePointScore {
            precision,
            recall,
            f1,
            matched,
            detected,
            truth,
        }
    }

    /// Pools counts over several videos.
    pub fn micro(scores: &[ChangePointScore]) -> Self {
        let sum = |f: fn(&ChangePointScore) -> usize| scores.iter().map(f).sum();
        Self::from_counts(sum(|s| s.matched), sum(|s| s.detected), sum(|s| s.truth))
    }
}

/// One-to-one matching within `±tolerance` snippets, closest pairs first.
pub fn changepoint_f1(detected: &ChangePointSet, truth: &ChangePointSet, tolerance: usize) -> ChangePointScore {
    let mut pairs = Vec::new();
    for (i, d) in detected.iter().enumerate() {
        for (j, g) in truth.iter().enumerate() {
            let dist = d.abs_diff(g);
            if dist <= tolerance {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_unstable();
    let mut used_d = vec![false; detected.len()];
    let mut used_t = vec![false; truth.len()];
    let mut matched = 0;
    for (_, i, j) in pairs {
        if !used_d[i] && !used_t[j] {
            used_d[i] = true;
            used_t[j] = true;
            matched += 1;
        }
    }
    ChangePointScore::from_counts(matched, detected.len(), truth.len())
}
