use serde::{Deserialize, Serialize};

use crate::dfc::ChangePointSet;
use crate::error::{Error, Result};
use crate::numerics::{cosine_similarity, Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LcsConfig {
    /// Two snippets match when their cosine similarity reaches this value.
    pub sim_threshold: f64,
    /// A point is redundant when the common run covers this share of the shorter side.
    pub redundancy_ratio: f64,
    /// Minimum mean foreground attention of a kept interval.
    pub fg_threshold: f64,
}

impl Default for LcsConfig {
    fn default() -> Self {
        LcsConfig {
            sim_threshold: 0.65,
            redundancy_ratio: 0.5,
            fg_threshold: 0.5,
        }
    }
}

impl LcsConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.sim_threshold) {
            return Err(Error::Config(format!(
                "lcs: sim_threshold {} outside (0, 1)",
                self.sim_threshold
            )));
        }
        if !(self.redundancy_ratio > 0.0 && self.redundancy_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "lcs: redundancy_ratio {} outside (0, 1]",
                self.redundancy_ratio
            )));
        }
        if !open(self.fg_threshold) {
            return Err(Error::Config(format!(
                "lcs: fg_threshold {} outside (0, 1)",
                self.fg_threshold
            )));
        }
        Ok(())
    }
}

/// Length of the longest common subsequence of `a` and `b` under `matches`.
pub fn classic_lcs<A, B>(a: &[A], b: &[B], mut matches: impl FnMut(&A, &B) -> bool) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if matches(x, y) {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Whether `b` is redundant between its neighbours `a` and `c`: the snippets
/// before and after it share a long common run of similar features.
fn redundant(x: &Matrix, a: usize, b: usize, c: usize, cfg: &LcsConfig) -> bool {
    let before: Vec<&[f64]> = (a..b).map(|t| x.row(t)).collect();
    let after: Vec<&[f64]> = (b..c).map(|t| x.row(t)).collect();
    let shorter = before.len().min(after.len());
    if shorter == 0 {
        return true;
    }
    let common = classic_lcs(&before, &after, |p, q| cosine_similarity(p, q) >= cfg.sim_threshold);
    common as f64 / shorter as f64 >= cfg.redundancy_ratio
}

/// Deletes change-points that do not separate dissimilar content.
///
/// Scans triples of consecutive points left to right. A deleted point is gone
/// before the next triple is formed.
pub fn lcs_prune(points: &ChangePointSet, x: &Matrix, cfg: &LcsConfig) -> Result<ChangePointSet> {
    if let Some(last) = points.as_slice().last() {
        if *last >= x.rows() {
            return Err(Error::shape("lcs_prune", format!("points below {}", x.rows()), last));
        }
    }
    let p = points.as_slice();
    if p.len() < 3 {
        return Ok(points.clone());
    }
    let mut kept = vec![p[0]];
    let mut i = 1;
    while i + 1 < p.len() {
        let a = *kept.last().expect("starts non-empty");
        if !redundant(x, a, p[i], p[i + 1], cfg) {
            kept.push(p[i]);
        }
        i += 1;
    }
    kept.push(p[p.len() - 1]);
    ChangePointSet::from_sorted(kept, x.rows())
}
