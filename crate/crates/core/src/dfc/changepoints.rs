use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted, duplicate-free snippet indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangePointSet(Vec<usize>);

impl ChangePointSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sorts and deduplicates.
    pub fn from_unsorted(mut points: Vec<usize>) -> Self {
        points.sort_unstable();
        points.dedup();
        ChangePointSet(points)
    }

    /// Accepts only an already strictly increasing list inside `[0, len)`.
    pub fn from_sorted(points: Vec<usize>, len: usize) -> Result<Self> {
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Malformed {
                what: "change-point set",
                reason: "indices must be strictly increasing".into(),
            });
        }
        if let Some(&last) = points.last() {
            if last >= len {
                return Err(Error::Malformed {
                    what: "change-point set",
                    reason: format!("index {last} outside [0, {len})"),
                });
            }
        }
        Ok(ChangePointSet(points))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, p: usize) -> bool {
        self.0.binary_search(&p).is_ok()
    }

    pub(crate) fn push_increasing(&mut self, p: usize) {
        debug_assert!(self.0.last().is_none_or(|&l| l < p));
        self.0.push(p);
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

impl FromIterator<usize> for ChangePointSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self::from_unsorted(iter.into_iter().collect())
    }
}
