use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::EfcConfig;
use super::label::Branch;
use crate::error::{Error, Result};
use crate::numerics::{softmax_rows, top_k_rows, Activation, Dense, DenseStack, Matrix, ParamStore, Tape, Var};

/// Parameter handles of the classifier. The values live in [`EfcModel::store`].
#[derive(Clone, Debug)]
pub struct EfcNet {
    pub embed: DenseStack,
    /// `C + 1` class logits per snippet, background last.
    pub cas: Dense,
    /// Three branch logits per snippet: foreground, background, context.
    pub attention: Dense,
}

impl EfcNet {
    /// Per-snippet class logits (`T × (C+1)`) and branch attention (`T × 3`).
    pub(crate) fn forward(&self, tape: &mut Tape, x: Var) -> Result<(Var, Var)> {
        let h = self.embed.apply(tape, x)?;
        let logits = self.cas.apply(tape, h)?;
        let att_logits = self.attention.apply(tape, h)?;
        let attention = tape.softmax_rows(att_logits);
        Ok((logits, attention))
    }
}

#[derive(Clone, Debug)]
pub struct EfcModel {
    pub config: EfcConfig,
    pub store: ParamStore,
    pub net: EfcNet,
}

impl EfcModel {
    pub fn new(config: EfcConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let embed = DenseStack::new(
            &mut store,
            "efc.embed",
            config.feature_dim,
            &config.embed_widths,
            Activation::Relu,
            &mut rng,
        );
        let h = config.embed_dim();
        let cas = Dense::new(
            &mut store,
            "efc.cas",
            h,
            config.num_classes + 1,
            Activation::Identity,
            &mut rng,
        );
        let attention = Dense::new(&mut store, "efc.attention", h, 3, Activation::Identity, &mut rng);
        Ok(EfcModel {
            config,
            store,
            net: EfcNet { embed, cas, attention },
        })
    }

    pub(crate) fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.config.feature_dim {
            return Err(Error::shape("efc input", self.config.feature_dim, x.cols()));
        }
        if x.rows() == 0 {
            return Err(Error::shape("efc input", "at least one snippet", 0));
        }
        Ok(())
    }
}

/// Snippet-level class activations with their branch attention, time-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CasMap {
    /// `T × (C+1)` logits, background class last.
    pub logits: Matrix,
    /// `T × 3` attention; every row sums to one.
    pub attention: Matrix,
}

impl CasMap {
    pub fn new(logits: Matrix, attention: Matrix) -> Result<Self> {
        if attention.rows() != logits.rows() || attention.cols() != 3 || logits.cols() < 2 {
            return Err(Error::shape(
                "cas map",
                format!("{}x3 attention and >= 2 classes", logits.rows()),
                format!(
                    "{}x{} / {}x{}",
                    attention.rows(),
                    attention.cols(),
                    logits.rows(),
                    logits.cols()
                ),
            ));
        }
        if !logits.is_finite() || !attention.is_finite() {
            return Err(Error::NonFinite {
                context: "cas map".into(),
            });
        }
        Ok(CasMap { logits, attention })
    }

    pub fn len(&self) -> usize {
        self.logits.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.rows() == 0
    }

    /// Action classes, excluding background.
    pub fn num_classes(&self) -> usize {
        self.logits.cols() - 1
    }

    /// Attention of `branch` over time.
    pub fn branch_attention(&self, branch: Branch) -> Vec<f64> {
        (0..self.len()).map(|t| self.attention.get(t, branch.index())).collect()
    }

    /// Logits scaled by the attention of `branch`, snippet by snippet.
    pub fn weighted(&self, branch: Branch) -> Matrix {
        let mut out = self.logits.clone();
        for t in 0..self.len() {
            let a = self.attention.get(t, branch.index());
            out.row_mut(t).iter_mut().for_each(|v| *v *= a);
        }
        out
    }

    /// Per-snippet class probabilities, softmax over the `C + 1` logits.
    pub fn probabilities(&self) -> Matrix {
        softmax_rows(&self.logits)
    }
}

/// Runs the classifier over every snippet of `x`.
pub fn cas_forward(model: &EfcModel, x: &Matrix) -> Result<CasMap> {
    model.check_input(x)?;
    let mut tape = Tape::new(&model.store);
    let xi = tape.input(x.clone());
    let (logits, attention) = model.net.forward(&mut tape, xi)?;
    CasMap::new(tape.value(logits).clone(), tape.value(attention).clone())
}

/// Video-level class distribution of one branch: the attention-weighted
/// logits are pooled by a top-k mean per class, then normalised with a softmax.
pub fn branch_video_score(cas: &CasMap, branch: Branch, top_k: usize) -> Vec<f64> {
    let weighted = cas.weighted(branch);
    let k = top_k.clamp(1, cas.len().max(1));
    let selected = top_k_rows(&weighted, k);
    let pooled: Vec<f64> = (0..weighted.cols())
        .map(|c| {
            selected[c * k..(c + 1) * k]
                .iter()
                .map(|&t| weighted.get(t, c))
                .sum::<f64>()
                / k as f64
        })
        .collect();
    softmax_rows(&Matrix::row_vector(&pooled)).into_vec()
}

/// Foreground attention over time.
pub fn foreground_attention(model: &EfcModel, x: &Matrix) -> Result<Vec<f64>> {
    Ok(cas_forward(model, x)?.branch_attention(Branch::Foreground))
}

/// Predicted action class: argmax of the foreground video score over action classes.
pub fn classify(model: &EfcModel, x: &Matrix) -> Result<usize> {
    let cas = cas_forward(model, x)?;
    let p = branch_video_score(&cas, Branch::Foreground, model.config.top_k(x.rows()));
    Ok(super::label::argmax(&p[..model.config.num_classes]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dense_forward, ParamId};
    use proptest::prelude::*;

    fn small_config() -> EfcConfig {
        EfcConfig {
            feature_dim: 4,
            num_classes: 2,
            embed_widths: vec![5],
            ..EfcConfig::default()
        }
    }

    fn input(t: usize, f: usize, seed: u64) -> Matrix {
        let data = (0..t * f)
            .map(|i| (((i as u64 * 7919 + seed * 104729) % 997) as f64 / 997.0 - 0.5) * 3.0)
            .collect();
        Matrix::from_vec(t, f, data).unwrap()
    }

    fn softmax(v: &[f64]) -> Vec<f64> {
        let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|x| x / s).collect()
    }

    #[test]
    fn zero_weights_give_uniform_attention_and_zero_logits() {
        let mut m = EfcModel::new(small_config(), 1).unwrap();
        for id in m.store.ids().collect::<Vec<ParamId>>() {
            m.store.value_mut(id).fill(0.0);
        }
        let cas = cas_forward(&m, &input(6, 4, 1)).unwrap();
        assert!(cas.logits.as_slice().iter().all(|&v| v == 0.0));
        assert!(cas.attention.as_slice().iter().all(|&a| (a - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(foreground_attention(&m, &input(6, 4, 1)).unwrap().len(), 6);
    }

    #[test]
    fn forward_matches_layer_composition() {
        let m = EfcModel::new(small_config(), 2).unwrap();
        let x = input(5, 4, 3);
        let cas = cas_forward(&m, &x).unwrap();
        for t in 0..5 {
            let mut h = x.row(t).to_vec();
            for l in &m.net.embed.layers {
                h = dense_forward(l, &m.store, &h).unwrap();
            }
            let logits = dense_forward(&m.net.cas, &m.store, &h).unwrap();
            let att = softmax(&dense_forward(&m.net.attention, &m.store, &h).unwrap());
            for (a, b) in cas.logits.row(t).iter().zip(&logits) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in cas.attention.row(t).iter().zip(&att) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_snippet_score_is_softmax_of_weighted_logits() {
        let cas = CasMap::new(
            Matrix::row_vector(&[2.0, -1.0, 0.5]),
            Matrix::row_vector(&[0.5, 0.3, 0.2]),
        )
        .unwrap();
        for (branch, a) in [
            (Branch::Foreground, 0.5),
            (Branch::Background, 0.3),
            (Branch::Context, 0.2),
        ] {
            let expect = softmax(&[2.0 * a, -a, 0.5 * a]);
            for k in [1, 4] {
                let got = branch_video_score(&cas, branch, k);
                for (g, e) in got.iter().zip(&expect) {
                    assert!((g - e).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn pooling_averages_the_top_k_per_class() {
        let logits = Matrix::from_rows(&[
            vec![4.0, 0.0, 1.0],
            vec![1.0, 3.0, 1.0],
            vec![2.0, 1.0, 1.0],
            vec![0.0, 2.0, 1.0],
        ])
        .unwrap();
        let attention = Matrix::from_rows(&vec![vec![1.0, 0.0, 0.0]; 4]).unwrap();
        let cas = CasMap::new(logits, attention).unwrap();
        let p = branch_video_score(&cas, Branch::Foreground, 2);
        // Top two per class: (4 + 2) / 2, (3 + 2) / 2, (1 + 1) / 2.
        let expect = softmax(&[3.0, 2.5, 1.0]);
        for (g, e) in p.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-15);
        }
        // Background branch has zero attention everywhere.
        assert!(branch_video_score(&cas, Branch::Background, 2)
            .iter()
            .all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn dominant_class_wins() {
        let mut m = EfcModel::new(
            EfcConfig {
                embed_widths: vec![],
                ..small_config()
            },
            3,
        )
        .unwrap();
        // Class 1 logit = 5 * x0; every other output is zero.
        let mut w = Matrix::zeros(3, 4);
        w.set(1, 0, 5.0);
        m.store.set_value(m.net.cas.weight, w).unwrap();
        m.store.value_mut(m.net.cas.bias).fill(0.0);
        m.store.value_mut(m.net.attention.weight).fill(0.0);
        let x = Matrix::from_rows(&vec![vec![1.0, 0.0, 0.0, 0.0]; 3]).unwrap();
        assert_eq!(classify(&m, &x).unwrap(), 1);
        let p = branch_video_score(&cas_forward(&m, &x).unwrap(), Branch::Foreground, 1);
        assert!(p[1] > p[0] && p[1] > p[2]);
    }

    #[test]
    fn input_errors() {
        let m = EfcModel::new(small_config(), 4).unwrap();
        assert!(matches!(cas_forward(&m, &input(3, 5, 0)), Err(Error::Shape { .. })));
        assert!(matches!(
            cas_forward(&m, &Matrix::zeros(0, 4)),
            Err(Error::Shape { .. })
        ));
        assert!(CasMap::new(Matrix::zeros(2, 3), Matrix::zeros(3, 3)).is_err());
        assert!(matches!(
            CasMap::new(Matrix::filled(1, 3, f64::NAN), Matrix::zeros(1, 3)),
            Err(Error::NonFinite { .. })
        ));
    }

    proptest! {
        #[test]
        fn attention_is_a_distribution(seed in 0u64..1000, t in 1usize..12) {
            let m = EfcModel::new(small_config(), seed).unwrap();
            let cas = cas_forward(&m, &input(t, 4, seed)).unwrap();
            for r in 0..t {
                let row = cas.attention.row(r);
                prop_assert!(row.iter().all(|&a| (0.0..=1.0).contains(&a)));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn snippet_permutation_is_equivariant(seed in 0u64..1000, shift in 1usize..7) {
            let m = EfcModel::new(small_config(), seed).unwrap();
            let x = input(7, 4, seed);
            let perm: Vec<usize> = (0..7).map(|i| (i * 3 + shift) % 7).collect();
            let xp = Matrix::from_rows(&perm.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
            let (a, b) = (cas_forward(&m, &x).unwrap(), cas_forward(&m, &xp).unwrap());
            for (r, &i) in perm.iter().enumerate() {
                prop_assert_eq!(b.attention.row(r), a.attention.row(i));
                prop_assert_eq!(b.logits.row(r), a.logits.row(i));
            }
        }
    }
}
