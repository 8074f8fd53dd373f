use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::DfcConfig;
use crate::error::{Error, Result};
use crate::numerics::{
    gru_step, Activation, Dense, DenseStack, DiagonalGaussian, GaussianHead, GruCell, Matrix, ParamStore, Tape,
};

/// Parameter handles of the detector. The values live in [`DfcModel::store`].
#[derive(Clone, Debug)]
pub struct DfcNet {
    pub encoder: DenseStack,
    pub decoder: DenseStack,
    pub transition: GruCell,
    /// Level-2 prior over `[f_t; d; u_t]`, shared by the static and change assumptions.
    pub prior2: GaussianHead,
    /// Level-2 posterior over `[f_{t+1}; d_{t+1}; u_t]`.
    pub posterior2: GaussianHead,
    /// Level-1 prior over `[v2; d]`.
    pub prior1: GaussianHead,
    /// Level-1 posterior over `[f; v2]`.
    pub posterior1: GaussianHead,
    pub recon_hidden: DenseStack,
    pub recon_out: Dense,
}

#[derive(Clone, Debug)]
pub struct DfcModel {
    pub config: DfcConfig,
    pub store: ParamStore,
    pub net: DfcNet,
}

impl DfcModel {
    /// Fresh model with Glorot weights and zero biases drawn from `seed`.
    pub fn new(config: DfcConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = &config;
        let act = c.hidden_activation;
        let encoder = DenseStack::new(
            &mut store,
            "dfc.encoder",
            c.feature_dim,
            &c.encoder_widths,
            act,
            &mut rng,
        );
        let decoder = DenseStack::new(
            &mut store,
            "dfc.decoder",
            c.encoder_dim(),
            &c.decoder_widths,
            act,
            &mut rng,
        );
        let transition = GruCell::new(&mut store, "dfc.transition", c.latent2_dim, c.gru_dim, &mut rng);
        let l2_in = c.level2_input_dim();
        let prior2 = GaussianHead::new(&mut store, "dfc.prior2", l2_in, &c.head_widths, c.latent2_dim, &mut rng);
        let posterior2 = GaussianHead::new(
            &mut store,
            "dfc.posterior2",
            l2_in,
            &c.head_widths,
            c.latent2_dim,
            &mut rng,
        );
        let prior1 = GaussianHead::new(
            &mut store,
            "dfc.prior1",
            c.latent2_dim + c.gru_dim,
            &c.head_widths,
            c.latent1_dim,
            &mut rng,
        );
        let posterior1 = GaussianHead::new(
            &mut store,
            "dfc.posterior1",
            c.encoder_dim() + c.latent2_dim,
            &c.head_widths,
            c.latent1_dim,
            &mut rng,
        );
        let latent = c.latent1_dim + c.latent2_dim;
        let recon_hidden = DenseStack::new(
            &mut store,
            "dfc.recon",
            latent,
            &c.recon_widths,
            Activation::Relu,
            &mut rng,
        );
        let recon_in = c.recon_widths.last().copied().unwrap_or(latent);
        let recon_out = Dense::new(
            &mut store,
            "dfc.recon_out",
            recon_in,
            c.feature_dim,
            Activation::Identity,
            &mut rng,
        );
        let net = DfcNet {
            encoder,
            decoder,
            transition,
            prior2,
            posterior2,
            prior1,
            posterior1,
            recon_hidden,
            recon_out,
        };
        Ok(DfcModel { config, store, net })
    }

    /// Hidden state the transition restarts from after a change.
    pub fn initial_hidden(&self) -> Vec<f64> {
        vec![0.0; self.config.gru_dim]
    }

    fn stack_forward(&self, stack: &DenseStack, x: &[f64], expected: usize, op: &'static str) -> Result<Vec<f64>> {
        if x.len() != expected {
            return Err(Error::shape(op, expected, x.len()));
        }
        let mut tape = Tape::new(&self.store);
        let xi = tape.input(Matrix::row_vector(x));
        let y = stack.apply(&mut tape, xi)?;
        Ok(tape.value(y).as_slice().to_vec())
    }

    /// Snippet embedding `f_t`.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.stack_forward(&self.net.encoder, x, self.config.feature_dim, "encode")
    }

    /// Decoder output `u_t` from an embedding.
    pub fn decode(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.stack_forward(&self.net.decoder, f, self.config.encoder_dim(), "decode")
    }

    /// Embeddings and decoder outputs for every row of `x` at once.
    pub fn encode_decode_rows(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        if x.cols() != self.config.feature_dim {
            return Err(Error::shape("encode", self.config.feature_dim, x.cols()));
        }
        let mut tape = Tape::new(&self.store);
        let xi = tape.input(x.clone());
        let f = self.net.encoder.apply(&mut tape, xi)?;
        let u = self.net.decoder.apply(&mut tape, f)?;
        Ok((tape.value(f).clone(), tape.value(u).clone()))
    }

    fn level2_input(&self, f: &[f64], d: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let c = &self.config;
        if f.len() != c.encoder_dim() || d.len() != c.gru_dim || u.len() != c.decoder_dim() {
            return Err(Error::shape(
                "level-2 head",
                format!("f {} / d {} / u {}", c.encoder_dim(), c.gru_dim, c.decoder_dim()),
                format!("f {} / d {} / u {}", f.len(), d.len(), u.len()),
            ));
        }
        Ok([f, d, u].concat())
    }

    /// Next hidden state predicted by the transition from latent `v` and state `d`.
    pub fn transition(&self, v: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        gru_step(&self.net.transition, &self.store, v, d)
    }

    /// Prior under the static assumption, conditioned on the committed state `d`.
    pub fn prior_static(&self, f: &[f64], d: &[f64], u: &[f64]) -> Result<DiagonalGaussian> {
        self.net.prior2.forward(&self.store, &self.level2_input(f, d, u)?)
    }

    /// Prior under the change assumption and the uncommitted transition output.
    pub fn prior_change(&self, f: &[f64], d: &[f64], v: &[f64], u: &[f64]) -> Result<(DiagonalGaussian, Vec<f64>)> {
        let d_next = self.transition(v, d)?;
        let p = self
            .net
            .prior2
            .forward(&self.store, &self.level2_input(f, &d_next, u)?)?;
        Ok((p, d_next))
    }

    /// Level-2 posterior after observing the next embedding.
    pub fn posterior(&self, f_next: &[f64], d_next: &[f64], u: &[f64]) -> Result<DiagonalGaussian> {
        self.net
            .posterior2
            .forward(&self.store, &self.level2_input(f_next, d_next, u)?)
    }

    pub fn level1_posterior(&self, f: &[f64], v2: &[f64]) -> Result<DiagonalGaussian> {
        self.net.posterior1.forward(&self.store, &[f, v2].concat())
    }

    pub fn level1_prior(&self, v2: &[f64], d: &[f64]) -> Result<DiagonalGaussian> {
        self.net.prior1.forward(&self.store, &[v2, d].concat())
    }

    /// Mean reconstruction of a snippet from both latents.
    pub fn reconstruct(&self, v1: &[f64], v2: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.store);
        let z = tape.input(Matrix::row_vector(&[v1, v2].concat()));
        let h = self.net.recon_hidden.apply(&mut tape, z)?;
        let x = self.net.recon_out.apply(&mut tape, h)?;
        Ok(tape.value(x).as_slice().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dense_forward, ParamId};

    fn small_config() -> DfcConfig {
        DfcConfig {
            feature_dim: 4,
            encoder_widths: vec![6, 5],
            decoder_widths: vec![5, 3],
            head_widths: vec![7],
            recon_widths: vec![6],
            latent1_dim: 2,
            latent2_dim: 3,
            gru_dim: 4,
            ..DfcConfig::default()
        }
    }

    fn zero_all(model: &mut DfcModel) {
        for id in model.store.ids().collect::<Vec<ParamId>>() {
            model.store.value_mut(id).fill(0.0);
        }
    }

    #[test]
    fn zero_weights_give_zero_embeddings_and_standard_priors() {
        let mut m = DfcModel::new(small_config(), 1).unwrap();
        zero_all(&mut m);
        assert_eq!(m.encode(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 5]);
        assert_eq!(m.decode(&[1.0; 5]).unwrap(), vec![0.0; 3]);
        let p = m.prior_static(&[0.3; 5], &[0.1; 4], &[0.2; 3]).unwrap();
        assert_eq!(p, DiagonalGaussian::standard(3));
        let q = m.posterior(&[0.3; 5], &[0.1; 4], &[0.2; 3]).unwrap();
        assert_eq!(q, DiagonalGaussian::standard(3));
    }

    #[test]
    fn identity_single_layer_encoder() {
        let config = DfcConfig {
            encoder_widths: vec![4],
            hidden_activation: Activation::Identity,
            ..small_config()
        };
        let mut m = DfcModel::new(config, 2).unwrap();
        let layer = &m.net.encoder.layers[0];
        let (w, b) = (layer.weight, layer.bias);
        m.store.set_value(w, Matrix::identity(4)).unwrap();
        m.store.value_mut(b).fill(0.0);
        let x = [1.5, -2.0, 0.25, 7.0];
        assert_eq!(m.encode(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn encode_decode_match_layer_composition() {
        let m = DfcModel::new(small_config(), 3).unwrap();
        let x = [0.4, -1.2, 2.2, 0.9];
        let mut h = x.to_vec();
        for layer in &m.net.encoder.layers {
            h = dense_forward(layer, &m.store, &h).unwrap();
        }
        assert_eq!(m.encode(&x).unwrap(), h);
        let mut u = h.clone();
        for layer in &m.net.decoder.layers {
            u = dense_forward(layer, &m.store, &u).unwrap();
        }
        assert_eq!(m.decode(&h).unwrap(), u);

        let xs = Matrix::from_rows(&[x.to_vec(), vec![1.0, 0.0, -1.0, 0.5]]).unwrap();
        let (f, d) = m.encode_decode_rows(&xs).unwrap();
        assert_eq!(f.row(0), &h[..]);
        assert_eq!(d.row(0), &u[..]);
    }

    #[test]
    fn priors_match_head_composition() {
        let m = DfcModel::new(small_config(), 4).unwrap();
        let (f, d, v, u) = (
            [0.1, 0.2, -0.3, 0.4, 0.5],
            [0.0, 0.1, -0.2, 0.3],
            [0.5, -0.5, 1.0],
            [0.7, -0.1, 0.2],
        );
        // Oracle: trunk layers then mean/log-var layers, evaluated one by one.
        let head = |input: Vec<f64>| {
            let mut h = input;
            for l in &m.net.prior2.trunk.layers {
                h = dense_forward(l, &m.store, &h).unwrap();
            }
            let mean = dense_forward(&m.net.prior2.mean, &m.store, &h).unwrap();
            let lv = dense_forward(&m.net.prior2.log_var, &m.store, &h).unwrap();
            DiagonalGaussian::new(mean, lv).unwrap()
        };
        let st = m.prior_static(&f, &d, &u).unwrap();
        assert_eq!(st, head([&f[..], &d, &u].concat()));
        let (ch, d_next) = m.prior_change(&f, &d, &v, &u).unwrap();
        assert_eq!(d_next, gru_step(&m.net.transition, &m.store, &v, &d).unwrap());
        assert_eq!(ch, head([&f[..], &d_next, &u].concat()));
    }

    #[test]
    fn fixed_point_transition_makes_priors_coincide() {
        let mut m = DfcModel::new(small_config(), 5).unwrap();
        for id in m.net.transition.param_ids() {
            m.store.value_mut(id).fill(0.0);
        }
        let (f, u, v) = ([0.3, -0.1, 0.2, 0.0, 1.0], [0.2, 0.1, -0.4], [1.0, 2.0, -3.0]);
        let d0 = m.initial_hidden();
        let (ch, d_next) = m.prior_change(&f, &d0, &v, &u).unwrap();
        assert_eq!(d_next, d0);
        assert_eq!(ch, m.prior_static(&f, &d0, &u).unwrap());
    }

    #[test]
    fn dimension_errors() {
        let m = DfcModel::new(small_config(), 6).unwrap();
        assert!(matches!(m.encode(&[1.0, 2.0]), Err(Error::Shape { .. })));
        assert!(m.prior_static(&[0.0; 5], &[0.0; 3], &[0.0; 3]).is_err());
        assert!(DfcModel::new(
            DfcConfig {
                latent2_dim: 0,
                ..small_config()
            },
            0
        )
        .is_err());
    }
}
