use super::label::VideoLabel;
use super::loss::efc_gradients;
use super::model::{classify, EfcModel};
use crate::dataio::FeatureSequence;
use crate::error::{Error, Result};
use crate::numerics::ParamStore;
use crate::training::{run_epochs, TrainConfig, TrainTrace, Trainable};

impl Trainable for EfcModel {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

fn check_pairs(videos: &[FeatureSequence], labels: &[VideoLabel]) -> Result<()> {
    if videos.len() != labels.len() {
        return Err(Error::Config(format!(
            "efc: {} videos but {} labels",
            videos.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Minimises the mean loss over `videos` with minibatch Adam.
pub fn train_efc(
    model: &mut EfcModel,
    videos: &[FeatureSequence],
    labels: &[VideoLabel],
    cfg: &TrainConfig,
) -> Result<TrainTrace> {
    check_pairs(videos, labels)?;
    for v in videos {
        model.check_input(v.data())?;
    }
    run_epochs(model, cfg, videos.len(), |m, i, _| {
        let (b, g) = efc_gradients(&m.net, &m.store, &m.config, videos[i].data(), &labels[i])?;
        Ok((b.total, g))
    })
}

/// Fraction of videos whose predicted class is the label's top class.
pub fn classification_accuracy(model: &EfcModel, videos: &[FeatureSequence], labels: &[VideoLabel]) -> Result<f64> {
    check_pairs(videos, labels)?;
    if videos.is_empty() {
        return Err(Error::Eval("no videos to classify".into()));
    }
    let mut hits = 0;
    for (v, y) in videos.iter().zip(labels) {
        if classify(model, v.data())? == y.argmax() {
            hits += 1;
        }
    }
    Ok(hits as f64 / videos.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::efc::{efc_loss, EfcConfig};
    use crate::numerics::Matrix;

    fn config() -> EfcConfig {
        EfcConfig {
            feature_dim: 2,
            num_classes: 2,
            embed_widths: vec![8],
            ..EfcConfig::default()
        }
    }

    /// Videos of class `c` put an action bump on feature `c` between background snippets.
    fn toy_set(n: usize) -> (Vec<FeatureSequence>, Vec<VideoLabel>) {
        (0..n)
            .map(|i| {
                let c = i % 2;
                let rows: Vec<Vec<f64>> = (0..8)
                    .map(|t| {
                        let mut r = vec![-1.0, -1.0];
                        if (2..5).contains(&t) {
                            r[c] = 2.0 + 0.1 * i as f64;
                        }
                        r
                    })
                    .collect();
                let seq = FeatureSequence::new(format!("v{i}"), Matrix::from_rows(&rows).unwrap()).unwrap();
                (seq, VideoLabel::from_classes([c], 2).unwrap())
            })
            .unzip()
    }

    fn mean_loss(m: &EfcModel, v: &[FeatureSequence], y: &[VideoLabel]) -> f64 {
        v.iter()
            .zip(y)
            .map(|(v, y)| efc_loss(m, v.data(), y).unwrap().total)
            .sum::<f64>()
            / v.len() as f64
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (v, y) = toy_set(4);
        let mut m = EfcModel::new(config(), 1).unwrap();
        let before = m.store.flatten();
        let cfg = TrainConfig {
            epochs: 3,
            lr: 0.0,
            weight_decay: 0.0,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let tr = train_efc(&mut m, &v, &y, &cfg).unwrap();
        assert_eq!(m.store.flatten(), before);
        assert!(tr.epoch_loss.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
        assert!((tr.epoch_loss[0] - mean_loss(&m, &v, &y)).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic_and_learns_the_toy_set() {
        let (v, y) = toy_set(8);
        let cfg = TrainConfig {
            epochs: 40,
            lr: 1e-2,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m = EfcModel::new(config(), 2).unwrap();
            let tr = train_efc(&mut m, &v, &y, &cfg).unwrap();
            (m, tr)
        };
        let (m, tr) = run();
        let (m2, tr2) = run();
        assert_eq!(tr, tr2);
        assert_eq!(m.store.flatten(), m2.store.flatten());
        assert!(tr.epoch_loss.last().unwrap() < &tr.epoch_loss[0]);
        assert_eq!(classification_accuracy(&m, &v, &y).unwrap(), 1.0);
    }

    #[test]
    fn mismatched_or_empty_inputs() {
        let (v, y) = toy_set(3);
        let mut m = EfcModel::new(config(), 3).unwrap();
        assert!(matches!(
            train_efc(&mut m, &v, &y[..2], &TrainConfig::default()),
            Err(Error::Config(_))
        ));
        assert!(matches!(classification_accuracy(&m, &[], &[]), Err(Error::Eval(_))));
    }
}
