use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfcConfig {
    pub feature_dim: usize,
    /// Action classes; the CAS head has one more output for background.
    pub num_classes: usize,
    /// ReLU layers of the snippet embedder.
    pub embed_widths: Vec<usize>,
    /// Video scores pool the top `max(1, T / top_k_divisor)` snippets; 1 pools all of them.
    pub top_k_divisor: usize,
}

impl Default for EfcConfig {
    fn default() -> Self {
        EfcConfig {
            feature_dim: 16,
            num_classes: 3,
            embed_widths: vec![64],
            top_k_divisor: 1,
        }
    }
}

impl EfcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.num_classes == 0 || self.top_k_divisor == 0 {
            return Err(Error::Config(
                "efc: feature_dim, num_classes and top_k_divisor must be >= 1".into(),
            ));
        }
        if self.embed_widths.contains(&0) {
            return Err(Error::Config("efc: layer widths must be >= 1".into()));
        }
        Ok(())
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_widths.last().copied().unwrap_or(self.feature_dim)
    }

    /// Pool size for a sequence of `len` snippets.
    pub fn top_k(&self, len: usize) -> usize {
        (len / self.top_k_divisor).max(1)
    }
}
