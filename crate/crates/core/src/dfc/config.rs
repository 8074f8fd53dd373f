use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Activation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DfcConfig {
    pub feature_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    /// Activation of encoder and decoder layers.
    pub hidden_activation: Activation,
    /// Hidden widths inside every Gaussian head.
    pub head_widths: Vec<usize>,
    /// Hidden widths of the reconstruction network.
    pub recon_widths: Vec<usize>,
    pub latent1_dim: usize,
    pub latent2_dim: usize,
    pub gru_dim: usize,
    pub beta0: f64,
    pub alpha: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Snippets at the start of a sequence where no change is reported.
    pub warmup: usize,
}

impl Default for DfcConfig {
    fn default() -> Self {
        DfcConfig {
            feature_dim: 16,
            encoder_widths: vec![64, 64],
            decoder_widths: vec![64, 64],
            hidden_activation: Activation::Relu,
            head_widths: vec![64],
            recon_widths: vec![64],
            latent1_dim: 16,
            latent2_dim: 16,
            gru_dim: 32,
            beta0: 0.9,
            alpha: 0.15,
            beta_min: 0.15,
            beta_max: 0.9,
            warmup: 5,
        }
    }
}

impl DfcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("dfc: {msg}")));
        let dims = [
            ("feature_dim", self.feature_dim),
            ("latent1_dim", self.latent1_dim),
            ("latent2_dim", self.latent2_dim),
            ("gru_dim", self.gru_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        let widths = [
            &self.encoder_widths,
            &self.decoder_widths,
            &self.head_widths,
            &self.recon_widths,
        ];
        if widths.iter().any(|w| w.contains(&0)) {
            return bad("layer widths must be >= 1".into());
        }
        if self.encoder_widths.is_empty() || self.decoder_widths.is_empty() {
            return bad("encoder and decoder need at least one layer".into());
        }
        if !(0.0 < self.beta_min && self.beta_min <= self.beta0 && self.beta0 <= self.beta_max) {
            return bad(format!(
                "need 0 < beta_min <= beta0 <= beta_max, got {} / {} / {}",
                self.beta_min, self.beta0, self.beta_max
            ));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        Ok(())
    }

    pub fn encoder_dim(&self) -> usize {
        *self.encoder_widths.last().expect("validated")
    }

    pub fn decoder_dim(&self) -> usize {
        *self.decoder_widths.last().expect("validated")
    }

    /// Input width of the level-2 prior and posterior heads: `[f; d; u]`.
    pub fn level2_input_dim(&self) -> usize {
        self.encoder_dim() + self.gru_dim + self.decoder_dim()
    }

    /// Threshold after one step: up by `alpha` on a change, down otherwise, clamped.
    pub fn next_beta(&self, beta: f64, changed: bool) -> f64 {
        if changed {
            (beta + self.alpha).min(self.beta_max)
        } else {
            (beta - self.alpha).max(self.beta_min)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_update_examples() {
        let c = DfcConfig::default();
        assert!((c.next_beta(0.5, true) - 0.65).abs() < 1e-12);
        assert_eq!(c.next_beta(0.20, false), 0.15);
        assert_eq!(c.next_beta(0.85, true), 0.9);
    }

    #[test]
    fn validation() {
        assert!(DfcConfig::default().validate().is_ok());
        assert!(DfcConfig {
            beta0: 0.95,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DfcConfig {
            beta_min: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DfcConfig {
            gru_dim: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DfcConfig {
            alpha: 0.0,
            ..Default::default()
        }
        .validate()
        .is_ok());
    }
}
