//! Negative evidence lower bound of the two-level model on one sequence.
//!
//! Level-2 divergences are taken against the prior of whichever assumption the
//! detector chose at that step; the decisions are inputs, so the loss is a
//! smooth function of the parameters for fixed decisions and noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::DfcConfig;
use super::detect::detect_trace;
use super::model::{DfcModel, DfcNet};
use crate::error::{Error, Result};
use crate::numerics::{
    grad_check_subset, GaussianVar, GradCheckReport, Gradients, Matrix, ParamId, ParamStore, Tape, Var,
};

/// Standard-normal draws for the reparameterised latents, one row per snippet.
#[derive(Clone, Debug, PartialEq)]
pub struct ElboNoise {
    pub level1: Matrix,
    pub level2: Matrix,
}

impl ElboNoise {
    pub fn zeros(len: usize, config: &DfcConfig) -> Self {
        ElboNoise {
            level1: Matrix::zeros(len, config.latent1_dim),
            level2: Matrix::zeros(len, config.latent2_dim),
        }
    }

    pub fn draw<R: Rng + ?Sized>(rng: &mut R, len: usize, config: &DfcConfig) -> Self {
        let mut fill = |cols: usize| {
            let data = (0..len * cols).map(|_| rng.sample(StandardNormal)).collect();
            Matrix::from_vec(len, cols, data).expect("sized")
        };
        let level1 = fill(config.latent1_dim);
        let level2 = fill(config.latent2_dim);
        ElboNoise { level1, level2 }
    }
}

/// Loss terms of one sequence; `total = reconstruction + kl1 + kl2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElboBreakdown {
    pub total: f64,
    /// Gaussian negative log-likelihood with unit variance, constant included.
    pub reconstruction: f64,
    pub kl1: f64,
    pub kl2: f64,
}

struct ElboVars {
    total: Var,
    reconstruction: Var,
    kl1: Var,
    kl2: Var,
    recon_rows: Var,
    v2_mean: Var,
}

fn check_inputs(config: &DfcConfig, x: &Matrix, noise: &ElboNoise, decisions: &[bool]) -> Result<()> {
    let t = x.rows();
    if t < 2 {
        return Err(Error::Malformed {
            what: "elbo input",
            reason: format!("needs at least 2 snippets, got {t}"),
        });
    }
    if x.cols() != config.feature_dim {
        return Err(Error::shape("elbo", config.feature_dim, x.cols()));
    }
    if noise.level1.shape() != (t, config.latent1_dim) || noise.level2.shape() != (t, config.latent2_dim) {
        return Err(Error::shape(
            "elbo noise",
            format!("{t}x{} and {t}x{}", config.latent1_dim, config.latent2_dim),
            format!("{:?} and {:?}", noise.level1.shape(), noise.level2.shape()),
        ));
    }
    if decisions.len() != t - 1 {
        return Err(Error::shape("elbo decisions", t - 1, decisions.len()));
    }
    Ok(())
}

fn sample(tape: &mut Tape, g: GaussianVar, noise: &Matrix) -> Result<Var> {
    let half = tape.scale(g.log_var, 0.5);
    let std = tape.exp(half);
    let n = tape.input(noise.clone());
    let scaled = tape.mul(std, n)?;
    tape.add(g.mean, scaled)
}

fn build(
    tape: &mut Tape,
    net: &DfcNet,
    config: &DfcConfig,
    x: &Matrix,
    noise: &ElboNoise,
    decisions: &[bool],
) -> Result<ElboVars> {
    let t_len = x.rows();
    let steps = t_len - 1;
    let xv = tape.input(x.clone());
    let f = net.encoder.apply(tape, xv)?;
    let u = net.decoder.apply(tape, f)?;
    let d0 = tape.input(Matrix::zeros(1, config.gru_dim));

    let f0 = tape.row(f, 0)?;
    let u0 = tape.row(u, 0)?;
    let in0 = tape.concat_cols(&[f0, d0, u0])?;
    let q0 = net.posterior2.apply(tape, in0)?;

    let f_now = tape.slice_rows(f, 0, steps)?;
    let u_now = tape.slice_rows(u, 0, steps)?;
    let zeros = tape.input(Matrix::zeros(steps, config.gru_dim));
    let static_in = tape.concat_cols(&[f_now, zeros, u_now])?;
    let p_static = net.prior2.apply(tape, static_in)?;

    let mut q_means = vec![q0.mean];
    let mut q_logs = vec![q0.log_var];
    let mut prior_means = Vec::new();
    let mut prior_logs = Vec::new();
    let mut hidden_rows = vec![d0];
    let mut v2_last = q0.mean;
    let mut start = 0;
    while start < steps {
        let end = (start..steps).find(|&i| decisions[i]).unwrap_or(steps - 1);
        let n = end - start + 1;
        let d_next = net.transition.step(tape, v2_last, d0)?;
        let hidden = tape.repeat_row(d_next, n)?;
        let f_next = tape.slice_rows(f, start + 1, n)?;
        let u_seg = tape.slice_rows(u, start, n)?;
        let q_in = tape.concat_cols(&[f_next, hidden, u_seg])?;
        let q = net.posterior2.apply(tape, q_in)?;
        q_means.push(q.mean);
        q_logs.push(q.log_var);
        hidden_rows.push(hidden);

        let static_rows = if decisions[end] { n - 1 } else { n };
        if static_rows > 0 {
            prior_means.push(tape.slice_rows(p_static.mean, start, static_rows)?);
            prior_logs.push(tape.slice_rows(p_static.log_var, start, static_rows)?);
        }
        if decisions[end] {
            let f_end = tape.row(f, end)?;
            let u_end = tape.row(u, end)?;
            let ch_in = tape.concat_cols(&[f_end, d_next, u_end])?;
            let p_change = net.prior2.apply(tape, ch_in)?;
            prior_means.push(p_change.mean);
            prior_logs.push(p_change.log_var);
            v2_last = tape.row(q.mean, n - 1)?;
        }
        start = end + 1;
    }

    let v2_mean = tape.concat_rows(&q_means)?;
    let v2_log = tape.concat_rows(&q_logs)?;
    let q_rest_mean = tape.slice_rows(v2_mean, 1, steps)?;
    let q_rest_log = tape.slice_rows(v2_log, 1, steps)?;
    let prior_mean = tape.concat_rows(&prior_means)?;
    let prior_log = tape.concat_rows(&prior_logs)?;
    let kl2_steps = tape.gaussian_kl(q_rest_mean, q_rest_log, prior_mean, prior_log)?;
    let standard = tape.input(Matrix::zeros(1, config.latent2_dim));
    let kl2_first = tape.gaussian_kl(q0.mean, q0.log_var, standard, standard)?;
    let kl2 = tape.add(kl2_first, kl2_steps)?;

    let v2 = sample(
        tape,
        GaussianVar {
            mean: v2_mean,
            log_var: v2_log,
        },
        &noise.level2,
    )?;
    let hidden_all = tape.concat_rows(&hidden_rows)?;
    let post1_in = tape.concat_cols(&[f, v2])?;
    let post1 = net.posterior1.apply(tape, post1_in)?;
    let prior1_in = tape.concat_cols(&[v2, hidden_all])?;
    let prior1 = net.prior1.apply(tape, prior1_in)?;
    let kl1 = post1.kl(tape, prior1)?;
    let v1 = sample(tape, post1, &noise.level1)?;

    let z = tape.concat_cols(&[v1, v2])?;
    let h = net.recon_hidden.apply(tape, z)?;
    let recon_rows = net.recon_out.apply(tape, h)?;
    let sq = tape.half_squared_error(recon_rows, xv)?;
    let constant = (t_len * config.feature_dim) as f64 * 0.5 * (2.0 * std::f64::consts::PI).ln();
    let reconstruction = tape.add_scalar(sq, constant);

    let partial = tape.add(reconstruction, kl1)?;
    let total = tape.add(partial, kl2)?;
    Ok(ElboVars {
        total,
        reconstruction,
        kl1,
        kl2,
        recon_rows,
        v2_mean,
    })
}

fn first_bad_row(m: &Matrix) -> Option<usize> {
    (0..m.rows()).find(|&r| m.row(r).iter().any(|v| !v.is_finite()))
}

fn evaluate(
    net: &DfcNet,
    store: &ParamStore,
    config: &DfcConfig,
    x: &Matrix,
    noise: &ElboNoise,
    decisions: &[bool],
    with_grads: bool,
) -> Result<(ElboBreakdown, Option<Gradients>)> {
    check_inputs(config, x, noise, decisions)?;
    let mut tape = Tape::new(store);
    let vars = build(&mut tape, net, config, x, noise, decisions)?;
    let out = ElboBreakdown {
        total: tape.scalar(vars.total),
        reconstruction: tape.scalar(vars.reconstruction),
        kl1: tape.scalar(vars.kl1),
        kl2: tape.scalar(vars.kl2),
    };
    if !out.total.is_finite() {
        let t = first_bad_row(tape.value(vars.v2_mean))
            .or_else(|| first_bad_row(tape.value(vars.recon_rows)))
            .unwrap_or(0);
        return Err(Error::NonFiniteElbo { t });
    }
    let grads = if with_grads {
        Some(tape.backward(vars.total)?)
    } else {
        None
    };
    Ok((out, grads))
}

/// Loss with the level-2 assumption at each step fixed by `decisions`
/// (`decisions[t]` is true when snippet `t + 1` starts a new segment).
pub fn elbo_with_decisions(
    model: &DfcModel,
    x: &Matrix,
    noise: &ElboNoise,
    decisions: &[bool],
) -> Result<ElboBreakdown> {
    evaluate(&model.net, &model.store, &model.config, x, noise, decisions, false).map(|r| r.0)
}

/// Loss with the decisions the detector itself makes on `x`.
pub fn elbo_loss(model: &DfcModel, x: &Matrix, noise: &ElboNoise) -> Result<ElboBreakdown> {
    let decisions = detect_trace(model, x)?.decisions();
    elbo_with_decisions(model, x, noise, &decisions)
}

pub(crate) fn elbo_gradients(
    net: &DfcNet,
    store: &ParamStore,
    config: &DfcConfig,
    x: &Matrix,
    noise: &ElboNoise,
    decisions: &[bool],
) -> Result<(ElboBreakdown, Gradients)> {
    let (b, g) = evaluate(net, store, config, x, noise, decisions, true)?;
    Ok((b, g.expect("requested")))
}

/// Finite-difference check of the loss gradients at fixed decisions and noise,
/// on at most `per_param` entries of every parameter.
pub fn elbo_grad_check(
    model: &mut DfcModel,
    x: &Matrix,
    noise: &ElboNoise,
    decisions: &[bool],
    eps: f64,
    per_param: usize,
) -> Result<GradCheckReport> {
    let net = model.net.clone();
    let config = model.config.clone();
    let ids: Vec<ParamId> = model.store.ids().collect();
    let mut loss = |s: &ParamStore| {
        let (b, g) = elbo_gradients(&net, s, &config, x, noise, decisions)?;
        Ok((b.total, g))
    };
    grad_check_subset(&mut loss, &mut model.store, eps, &ids, per_param)
}
