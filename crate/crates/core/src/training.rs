//! Minibatch Adam loop shared by both modules.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{adam_step, AdamConfig, Gradients, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Detector only: epochs at the start during which every step is treated
    /// as static.
    pub static_epochs: usize,
    /// Detector only: epochs after the static ones whose changes come from the
    /// surprise test alone, without the detector's agreement.
    pub bootstrap_epochs: usize,
    /// Detector only: a training step counts as a change when its static
    /// divergence exceeds this multiple of the video's median static divergence.
    pub surprise_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            lr: 1e-4,
            weight_decay: 5e-4,
            seed: 0,
            static_epochs: 3,
            bootstrap_epochs: 3,
            surprise_ratio: 8.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train: batch_size must be >= 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(
                "train: lr and weight_decay must be finite and >= 0".into(),
            ));
        }
        if !(self.surprise_ratio > 0.0 && self.surprise_ratio.is_finite()) {
            return Err(Error::Config("train: surprise_ratio must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// Mean per-video loss of every epoch, measured while training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epoch_loss: Vec<f64>,
}

/// Visiting order of the training items in `epoch`.
pub(crate) fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// A model whose parameters live in one store.
pub(crate) trait Trainable {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
}

impl Trainable for ParamStore {
    fn params(&self) -> &ParamStore {
        self
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        self
    }
}

/// Runs `cfg.epochs` epochs of minibatch Adam. `item_loss(model, index, epoch)`
/// returns one item's loss and gradients; a minibatch step uses their mean.
pub(crate) fn run_epochs<M, F>(model: &mut M, cfg: &TrainConfig, n: usize, mut item_loss: F) -> Result<TrainTrace>
where
    M: Trainable,
    F: FnMut(&M, usize, usize) -> Result<(f64, Gradients)>,
{
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Config("train: dataset is empty".into()));
    }
    let adam = cfg.adam();
    let mut trace = TrainTrace::default();
    let mut losses = vec![0.0; n];
    for epoch in 0..cfg.epochs {
        for batch in epoch_order(cfg.seed, epoch, n).chunks(cfg.batch_size) {
            let mut acc = Gradients::zeros_like(model.params());
            for &i in batch {
                let (loss, grads) = item_loss(model, i, epoch)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        loss,
                        trace: trace.epoch_loss,
                    });
                }
                losses[i] = loss;
                acc.accumulate(&grads, 1.0 / batch.len() as f64);
            }
            let store = model.params_mut();
            store.set_grads(&acc)?;
            adam_step(store, &adam)?;
        }
        // Summed in index order so the value does not depend on the shuffle.
        let mean = losses.iter().sum::<f64>() / n as f64;
        trace.epoch_loss.push(mean);
    }
    Ok(trace)
}
