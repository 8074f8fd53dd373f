use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::detect::{detect_trace, DetectionTrace};
use super::elbo::{elbo_gradients, ElboNoise};
use super::model::DfcModel;
use crate::dataio::FeatureSequence;
use crate::error::Result;
use crate::numerics::{Matrix, ParamStore};
use crate::training::{run_epochs, TrainConfig, TrainTrace, Trainable};

impl Trainable for DfcModel {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

/// Reparameterisation noise of video `index`; fixed for the whole run.
fn video_noise(seed: u64, index: usize, len: usize, model: &DfcModel) -> ElboNoise {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_dfc0);
    rng.set_stream(index as u64);
    ElboNoise::draw(&mut rng, len, &model.config)
}

/// Steps whose static divergence exceeds `ratio` times the median over the
/// sequence, ignoring the warm-up.
pub fn surprise_mask(trace: &DetectionTrace, ratio: f64, warmup: usize) -> Vec<bool> {
    let mut sorted: Vec<f64> = trace.steps.iter().map(|s| s.d_static).collect();
    if sorted.is_empty() {
        return Vec::new();
    }
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    trace
        .steps
        .iter()
        .enumerate()
        .map(|(t, s)| t + 1 >= warmup && s.d_static > ratio * median)
        .collect()
}

/// Change decisions used for the ELBO of one training sequence at `epoch`.
///
/// Static epochs see no changes. Bootstrap epochs take the surprise test alone,
/// and later epochs keep only the detector's changes that also pass it.
pub fn training_decisions(model: &DfcModel, x: &Matrix, epoch: usize, cfg: &TrainConfig) -> Result<Vec<bool>> {
    let steps = x.rows().saturating_sub(1);
    if epoch < cfg.static_epochs {
        return Ok(vec![false; steps]);
    }
    let trace = detect_trace(model, x)?;
    let surprise = surprise_mask(&trace, cfg.surprise_ratio, model.config.warmup);
    if epoch < cfg.static_epochs + cfg.bootstrap_epochs {
        return Ok(surprise);
    }
    Ok(trace
        .steps
        .iter()
        .zip(surprise)
        .map(|(s, hit)| s.is_change && hit)
        .collect())
}

/// Minimises the mean negative ELBO over `videos` with minibatch Adam, the
/// level-2 segmentation of each video following [`training_decisions`].
pub fn train_dfc(model: &mut DfcModel, videos: &[FeatureSequence], cfg: &TrainConfig) -> Result<TrainTrace> {
    let noises: Vec<ElboNoise> = videos
        .iter()
        .enumerate()
        .map(|(i, v)| video_noise(cfg.seed, i, v.len(), model))
        .collect();
    run_epochs(model, cfg, videos.len(), |m, i, epoch| {
        let x = videos[i].data();
        let decisions = training_decisions(m, x, epoch, cfg)?;
        let (b, g) = elbo_gradients(&m.net, &m.store, &m.config, x, &noises[i], &decisions)?;
        Ok((b.total, g))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfc::detect::StepOutcome;
    use crate::dfc::DfcConfig;

    fn trace(d_static: &[f64]) -> DetectionTrace {
        DetectionTrace {
            steps: d_static
                .iter()
                .map(|&d| StepOutcome {
                    is_change: false,
                    d_static: d,
                    d_change: 0.0,
                    beta: 0.9,
                })
                .collect(),
            final_state: None,
        }
    }

    fn config() -> DfcConfig {
        DfcConfig {
            feature_dim: 3,
            encoder_widths: vec![6],
            decoder_widths: vec![4],
            head_widths: vec![6],
            recon_widths: vec![5],
            latent1_dim: 2,
            latent2_dim: 3,
            gru_dim: 4,
            warmup: 2,
            ..DfcConfig::default()
        }
    }

    fn sequence(t: usize, shift: usize) -> Matrix {
        let data = (0..t * 3)
            .map(|i| (((i + shift) * 31) % 17) as f64 / 5.0 - 1.6)
            .collect();
        Matrix::from_vec(t, 3, data).unwrap()
    }

    #[test]
    fn surprise_uses_the_upper_median() {
        // Sorted: 1, 1, 2, 3, 50 -> median 2; ratio 4 keeps values above 8.
        let t = trace(&[50.0, 1.0, 2.0, 3.0, 1.0]);
        assert_eq!(surprise_mask(&t, 4.0, 0), vec![true, false, false, false, false]);
        // The first step sits inside a warm-up of 2 (t + 1 < 2).
        assert_eq!(surprise_mask(&t, 4.0, 2), vec![false; 5]);
        // Even length: 1, 2, 3, 40 -> upper median 3.
        assert_eq!(
            surprise_mask(&trace(&[1.0, 40.0, 2.0, 3.0]), 10.0, 0),
            vec![false, true, false, false]
        );
        assert!(surprise_mask(&trace(&[]), 2.0, 0).is_empty());
    }

    #[test]
    fn decisions_follow_the_schedule() {
        let m = DfcModel::new(config(), 5).unwrap();
        let x = sequence(12, 0);
        let cfg = TrainConfig {
            static_epochs: 2,
            bootstrap_epochs: 1,
            surprise_ratio: 1.5,
            ..TrainConfig::default()
        };
        let t = detect_trace(&m, &x).unwrap();
        let surprise = surprise_mask(&t, 1.5, 2);
        for epoch in 0..2 {
            assert_eq!(training_decisions(&m, &x, epoch, &cfg).unwrap(), vec![false; 11]);
        }
        assert_eq!(training_decisions(&m, &x, 2, &cfg).unwrap(), surprise);
        let both: Vec<bool> = t.decisions().iter().zip(&surprise).map(|(a, b)| *a && *b).collect();
        assert_eq!(training_decisions(&m, &x, 3, &cfg).unwrap(), both);
        assert!(training_decisions(&m, &sequence(1, 0), 5, &cfg).unwrap().is_empty());
    }

    #[test]
    fn training_is_deterministic_and_zero_lr_is_inert() {
        let videos: Vec<FeatureSequence> = (0..3)
            .map(|i| FeatureSequence::new(format!("v{i}"), sequence(10, i)).unwrap())
            .collect();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            lr: 1e-2,
            static_epochs: 1,
            bootstrap_epochs: 1,
            ..TrainConfig::default()
        };
        let run = |cfg: &TrainConfig| {
            let mut m = DfcModel::new(config(), 7).unwrap();
            let tr = train_dfc(&mut m, &videos, cfg).unwrap();
            (m.store.flatten(), tr)
        };
        assert_eq!(run(&cfg), run(&cfg));
        let still = TrainConfig {
            lr: 0.0,
            weight_decay: 0.0,
            static_epochs: 3,
            ..cfg
        };
        let (params, tr) = run(&still);
        assert_eq!(params, DfcModel::new(config(), 7).unwrap().store.flatten());
        assert!(tr.epoch_loss.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-9));
    }
}
