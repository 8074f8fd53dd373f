use serde::{Deserialize, Serialize};

use super::tape::{gaussian_kl_terms, Tape, Var};
use super::tensor::Matrix;
use crate::error::{Error, Result};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

/// Diagonal Gaussian over a latent vector; log-variances are kept in `[-10, 10]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalGaussian {
    mean: Vec<f64>,
    log_var: Vec<f64>,
}

impl DiagonalGaussian {
    /// Clamps `log_var` into range; rejects unequal dimensions and non-finite input.
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mean.len() != log_var.len() {
            return Err(Error::shape("DiagonalGaussian::new", mean.len(), log_var.len()));
        }
        if !mean.iter().chain(&log_var).all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "DiagonalGaussian parameters".into(),
            });
        }
        let log_var = log_var.into_iter().map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)).collect();
        Ok(DiagonalGaussian { mean, log_var })
    }

    pub fn standard(dim: usize) -> Self {
        DiagonalGaussian {
            mean: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_var(&self) -> &[f64] {
        &self.log_var
    }

    /// Log-density at `x`.
    pub fn log_prob(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let mut lp = 0.0;
        for ((x, m), lv) in x.iter().zip(&self.mean).zip(&self.log_var) {
            let d = x - m;
            lp += -0.5 * ((2.0 * std::f64::consts::PI).ln() + lv + d * d / lv.exp());
        }
        lp
    }
}

/// `D_KL(q ‖ p)` in closed form.
pub fn gaussian_kl(q: &DiagonalGaussian, p: &DiagonalGaussian) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::shape("gaussian_kl", q.dim(), p.dim()));
    }
    Ok(gaussian_kl_terms(&q.mean, &q.log_var, &p.mean, &p.log_var))
}

/// `mean + exp(log_var / 2) ⊙ noise`.
pub fn reparam_sample(g: &DiagonalGaussian, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != g.dim() {
        return Err(Error::shape("reparam_sample", g.dim(), noise.len()));
    }
    Ok(g.mean
        .iter()
        .zip(&g.log_var)
        .zip(noise)
        .map(|((m, lv), n)| m + (0.5 * lv).exp() * n)
        .collect())
}

/// A Gaussian whose parameters live on a tape.
#[derive(Clone, Copy, Debug)]
pub struct GaussianVar {
    pub mean: Var,
    pub log_var: Var,
}

impl GaussianVar {
    pub fn kl(self, tape: &mut Tape, prior: GaussianVar) -> Result<Var> {
        tape.gaussian_kl(self.mean, self.log_var, prior.mean, prior.log_var)
    }

    pub fn sample(self, tape: &mut Tape, noise: &[f64]) -> Result<Var> {
        let dim = tape.value(self.mean).cols();
        if noise.len() != dim {
            return Err(Error::shape("GaussianVar::sample", dim, noise.len()));
        }
        let half = tape.scale(self.log_var, 0.5);
        let std = tape.exp(half);
        let n = tape.input(Matrix::row_vector(noise));
        let scaled = tape.mul(std, n)?;
        tape.add(self.mean, scaled)
    }

    /// Reads row `r` of a batched Gaussian.
    pub fn value(self, tape: &Tape, r: usize) -> DiagonalGaussian {
        DiagonalGaussian {
            mean: tape.value(self.mean).row(r).to_vec(),
            log_var: tape.value(self.log_var).row(r).to_vec(),
        }
    }
}
