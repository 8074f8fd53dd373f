use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gaussian::{DiagonalGaussian, GaussianVar, LOG_VAR_MAX, LOG_VAR_MIN};
use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
}

/// Fully connected layer, `act(W·x + b)`. `W` is stored `out × in`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_glorot(format!("{name}.weight"), out_dim, in_dim, rng);
        let bias = store.add(format!("{name}.bias"), Matrix::zeros(1, out_dim));
        Dense {
            weight,
            bias,
            activation,
            in_dim,
            out_dim,
        }
    }

    /// Applies the layer to every row of `x`.
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let cols = tape.value(x).cols();
        if cols != self.in_dim {
            return Err(Error::shape("dense", format!("{} inputs", self.in_dim), cols));
        }
        let (w, b) = (tape.param(self.weight), tape.param(self.bias));
        let y = tape.linear(x, w, Some(b))?;
        Ok(match self.activation {
            Activation::Identity => y,
            Activation::Relu => tape.relu(y),
        })
    }
}

/// Forward pass of one dense layer on a single input vector.
pub fn dense_forward(layer: &Dense, store: &ParamStore, input: &[f64]) -> Result<Vec<f64>> {
    let mut tape = Tape::new(store);
    let x = tape.input(Matrix::row_vector(input));
    let y = layer.apply(&mut tape, x)?;
    Ok(tape.value(y).as_slice().to_vec())
}

/// A chain of dense layers.
#[derive(Clone, Debug)]
pub struct DenseStack {
    pub layers: Vec<Dense>,
}

impl DenseStack {
    /// Builds `in → widths[0] → … → widths[n-1]`, every layer using `activation`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        widths: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = in_dim;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Dense::new(store, &format!("{name}.{i}"), prev, w, activation, rng));
            prev = w;
        }
        DenseStack { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.layers.iter().try_fold(x, |h, layer| layer.apply(tape, h))
    }
}

/// GRU cell with separate input (`w_*`, `H × I`) and recurrent (`u_*`, `H × H`)
/// weights for the update, reset and candidate gates.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub w_update: ParamId,
    pub u_update: ParamId,
    pub b_update: ParamId,
    pub w_reset: ParamId,
    pub u_reset: ParamId,
    pub b_reset: ParamId,
    pub w_cand: ParamId,
    pub u_cand: ParamId,
    pub b_cand: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut gate = |g: &str| {
            (
                store.add_glorot(format!("{name}.w_{g}"), hidden_dim, input_dim, rng),
                store.add_glorot(format!("{name}.u_{g}"), hidden_dim, hidden_dim, rng),
                store.add(format!("{name}.b_{g}"), Matrix::zeros(1, hidden_dim)),
            )
        };
        let (w_update, u_update, b_update) = gate("update");
        let (w_reset, u_reset, b_reset) = gate("reset");
        let (w_cand, u_cand, b_cand) = gate("cand");
        GruCell {
            w_update,
            u_update,
            b_update,
            w_reset,
            u_reset,
            b_reset,
            w_cand,
            u_cand,
            b_cand,
            input_dim,
            hidden_dim,
        }
    }

    pub fn param_ids(&self) -> [ParamId; 9] {
        [
            self.w_update,
            self.u_update,
            self.b_update,
            self.w_reset,
            self.u_reset,
            self.b_reset,
            self.w_cand,
            self.u_cand,
            self.b_cand,
        ]
    }

    /// `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
    /// `h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h)`, `h' = (1 − z) ⊙ h + z ⊙ h̃`.
    pub fn step(&self, tape: &mut Tape, input: Var, hidden: Var) -> Result<Var> {
        let (ic, hc) = (tape.value(input).cols(), tape.value(hidden).cols());
        if ic != self.input_dim || hc != self.hidden_dim {
            return Err(Error::shape(
                "gru_step",
                format!("input {} / hidden {}", self.input_dim, self.hidden_dim),
                format!("input {ic} / hidden {hc}"),
            ));
        }
        let gate = |tape: &mut Tape, w: ParamId, u: ParamId, b: ParamId, h: Var| -> Result<Var> {
            let (w, u, b) = (tape.param(w), tape.param(u), tape.param(b));
            let wx = tape.linear(input, w, Some(b))?;
            let uh = tape.linear(h, u, None)?;
            tape.add(wx, uh)
        };
        let z_pre = gate(tape, self.w_update, self.u_update, self.b_update, hidden)?;
        let z = tape.sigmoid(z_pre);
        let r_pre = gate(tape, self.w_reset, self.u_reset, self.b_reset, hidden)?;
        let r = tape.sigmoid(r_pre);
        let rh = tape.mul(r, hidden)?;
        let c_pre = gate(tape, self.w_cand, self.u_cand, self.b_cand, rh)?;
        let cand = tape.tanh(c_pre);
        let delta = tape.sub(cand, hidden)?;
        let step = tape.mul(z, delta)?;
        tape.add(hidden, step)
    }
}

/// One GRU update on plain vectors.
pub fn gru_step(cell: &GruCell, store: &ParamStore, input: &[f64], hidden: &[f64]) -> Result<Vec<f64>> {
    let mut tape = Tape::new(store);
    let x = tape.input(Matrix::row_vector(input));
    let h = tape.input(Matrix::row_vector(hidden));
    let out = cell.step(&mut tape, x, h)?;
    Ok(tape.value(out).as_slice().to_vec())
}

/// Dense trunk followed by identity mean and log-variance layers.
#[derive(Clone, Debug)]
pub struct GaussianHead {
    pub in_dim: usize,
    pub trunk: DenseStack,
    pub mean: Dense,
    pub log_var: Dense,
}

impl GaussianHead {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let trunk = DenseStack::new(store, &format!("{name}.trunk"), in_dim, hidden, Activation::Relu, rng);
        let feat = hidden.last().copied().unwrap_or(in_dim);
        let mean = Dense::new(store, &format!("{name}.mean"), feat, out_dim, Activation::Identity, rng);
        let log_var = Dense::new(
            store,
            &format!("{name}.log_var"),
            feat,
            out_dim,
            Activation::Identity,
            rng,
        );
        GaussianHead {
            in_dim,
            trunk,
            mean,
            log_var,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.mean.out_dim
    }

    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<GaussianVar> {
        let h = self.trunk.apply(tape, x)?;
        let mean = self.mean.apply(tape, h)?;
        let raw = self.log_var.apply(tape, h)?;
        let log_var = tape.clamp(raw, LOG_VAR_MIN, LOG_VAR_MAX);
        Ok(GaussianVar { mean, log_var })
    }

    /// Evaluates the head on one concatenated input vector.
    pub fn forward(&self, store: &ParamStore, input: &[f64]) -> Result<DiagonalGaussian> {
        let mut tape = Tape::new(store);
        let x = tape.input(Matrix::row_vector(input));
        let g = self.apply(&mut tape, x)?;
        Ok(g.value(&tape, 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tape::sigmoid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn matmul_oracle(w: &Matrix, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; w.rows()];
        for (o, slot) in out.iter_mut().enumerate() {
            for (i, xi) in x.iter().enumerate() {
                *slot += w.get(o, i) * xi;
            }
        }
        out
    }

    #[test]
    fn dense_identity_and_zero_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let layer = Dense::new(&mut store, "l", 2, 2, Activation::Identity, &mut rng);
        store.set_value(layer.weight, Matrix::identity(2)).unwrap();
        assert_eq!(dense_forward(&layer, &store, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);

        store.set_value(layer.weight, Matrix::zeros(2, 2)).unwrap();
        store.set_value(layer.bias, Matrix::row_vector(&[3.0, 3.0])).unwrap();
        assert_eq!(dense_forward(&layer, &store, &[-7.0, 9.0]).unwrap(), vec![3.0, 3.0]);
        assert!(matches!(
            dense_forward(&layer, &store, &[1.0]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn dense_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let layer = Dense::new(&mut store, "l", 5, 4, Activation::Relu, &mut rng);
        store
            .set_value(layer.bias, Matrix::row_vector(&[0.1, -0.2, 0.3, -0.4]))
            .unwrap();
        let x = [0.5, -1.0, 0.25, 2.0, -0.75];
        let mut expect = matmul_oracle(store.value(layer.weight), &x);
        for (e, b) in expect.iter_mut().zip(store.value(layer.bias).as_slice()) {
            *e = (*e + b).max(0.0);
        }
        let got = dense_forward(&layer, &store, &x).unwrap();
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-14);
        }
    }

    /// Scalar-loop GRU written independently of the tape.
    fn gru_oracle(store: &ParamStore, cell: &GruCell, x: &[f64], h: &[f64]) -> Vec<f64> {
        let pre = |w: ParamId, u: ParamId, b: ParamId, hh: &[f64], j: usize| {
            let mut acc = store.value(b).get(0, j);
            for (i, xi) in x.iter().enumerate() {
                acc += store.value(w).get(j, i) * xi;
            }
            for (i, hi) in hh.iter().enumerate() {
                acc += store.value(u).get(j, i) * hi;
            }
            acc
        };
        let n = h.len();
        let r: Vec<f64> = (0..n)
            .map(|j| sigmoid(pre(cell.w_reset, cell.u_reset, cell.b_reset, h, j)))
            .collect();
        let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        (0..n)
            .map(|j| {
                let z = sigmoid(pre(cell.w_update, cell.u_update, cell.b_update, h, j));
                let c = pre(cell.w_cand, cell.u_cand, cell.b_cand, &rh, j).tanh();
                (1.0 - z) * h[j] + z * c
            })
            .collect()
    }

    #[test]
    fn gru_zero_cell_keeps_zero_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "g", 3, 4, &mut rng);
        for id in cell.param_ids() {
            let (r, c) = store.value(id).shape();
            store.set_value(id, Matrix::zeros(r, c)).unwrap();
        }
        assert_eq!(
            gru_step(&cell, &store, &[1.0, -2.0, 3.0], &[0.0; 4]).unwrap(),
            vec![0.0; 4]
        );

        // Candidate bias b with zero weights: z = 0.5, h̃ = tanh(b), h' = 0.5·tanh(b).
        store.set_value(cell.b_cand, Matrix::filled(1, 4, 5.0)).unwrap();
        let out = gru_step(&cell, &store, &[1.0, -2.0, 3.0], &[0.0; 4]).unwrap();
        for v in out {
            assert!((v - 0.5 * 5.0f64.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn gru_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "g", 3, 5, &mut rng);
        store
            .set_value(cell.b_update, Matrix::row_vector(&[0.1, 0.2, -0.3, 0.0, 0.5]))
            .unwrap();
        store
            .set_value(cell.b_cand, Matrix::row_vector(&[-0.1, 0.4, 0.3, 0.2, -0.5]))
            .unwrap();
        let x = [0.3, -0.8, 1.2];
        let h = [0.1, -0.4, 0.6, 0.0, -0.9];
        let got = gru_step(&cell, &store, &x, &h).unwrap();
        let expect = gru_oracle(&store, &cell, &x, &h);
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-14);
        }
        assert!(gru_step(&cell, &store, &x, &h[..4]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn gru_output_bounded(
                seed in 0u64..1000,
                x in prop::collection::vec(-5.0..5.0f64, 3),
                h in prop::collection::vec(-3.0..3.0f64, 4),
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut store = ParamStore::new();
                let cell = GruCell::new(&mut store, "g", 3, 4, &mut rng);
                let out = gru_step(&cell, &store, &x, &h).unwrap();
                let bound = h.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                prop_assert!(out.iter().all(|v| v.abs() <= bound + 1e-12));
            }
        }
    }
}
