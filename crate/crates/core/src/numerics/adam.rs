use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    /// L2 coefficient folded into the gradient before the moment update.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every parameter, then zeroes the gradients.
///
/// Fails before touching any parameter if a gradient contains NaN.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) -> Result<()> {
    if let Some(p) = store
        .params()
        .iter()
        .find(|p| p.grad.as_slice().iter().any(|g| g.is_nan()))
    {
        return Err(Error::NanGradient { param: p.name.clone() });
    }
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for p in store.params_mut() {
        let n = p.value.len();
        let (w, g) = (p.value.as_mut_slice(), p.grad.as_mut_slice());
        let (m, v) = (p.m.as_mut_slice(), p.v.as_mut_slice());
        for i in 0..n {
            let gi = g[i] + cfg.weight_decay * w[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            w[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            g[i] = 0.0;
        }
    }
    Ok(())
}
