use serde::{Deserialize, Serialize};

use super::config::EfcConfig;
use super::label::{make_branch_label, Branch, VideoLabel};
use super::model::{EfcModel, EfcNet};
use crate::error::{Error, Result};
use crate::numerics::{grad_check_subset, GradCheckReport, Gradients, Matrix, ParamId, ParamStore, Tape};

/// Floor applied to probabilities inside the logarithm.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfcLossBreakdown {
    pub total: f64,
    pub foreground: f64,
    pub background: f64,
    pub context: f64,
}

fn build(
    net: &EfcNet,
    store: &ParamStore,
    config: &EfcConfig,
    x: &Matrix,
    y: &VideoLabel,
    grads: bool,
) -> Result<(EfcLossBreakdown, Option<Gradients>)> {
    if y.num_classes() != config.num_classes {
        return Err(Error::shape("efc label", config.num_classes, y.num_classes()));
    }
    let mut tape = Tape::new(store);
    let xi = tape.input(x.clone());
    let (logits, attention) = net.forward(&mut tape, xi)?;
    let k = config.top_k(x.rows());
    let mut terms = Vec::with_capacity(3);
    for branch in Branch::ALL {
        let a = tape.slice_cols(attention, branch.index(), 1)?;
        let weighted = tape.scale_rows(logits, a)?;
        let pooled = tape.top_k_mean_rows(weighted, k)?;
        terms.push(tape.softmax_cross_entropy(pooled, &make_branch_label(y, branch), LOG_EPS)?);
    }
    let total = tape.sum_all(&terms)?.expect("three branch terms");
    let breakdown = EfcLossBreakdown {
        total: tape.scalar(total),
        foreground: tape.scalar(terms[0]),
        background: tape.scalar(terms[1]),
        context: tape.scalar(terms[2]),
    };
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite {
            context: "efc loss".into(),
        });
    }
    let g = if grads { Some(tape.backward(total)?) } else { None };
    Ok((breakdown, g))
}

/// Sum of the foreground, background and context cross-entropies of one video.
pub fn efc_loss(model: &EfcModel, x: &Matrix, y: &VideoLabel) -> Result<EfcLossBreakdown> {
    model.check_input(x)?;
    Ok(build(&model.net, &model.store, &model.config, x, y, false)?.0)
}

pub(crate) fn efc_gradients(
    net: &EfcNet,
    store: &ParamStore,
    config: &EfcConfig,
    x: &Matrix,
    y: &VideoLabel,
) -> Result<(EfcLossBreakdown, Gradients)> {
    let (b, g) = build(net, store, config, x, y, true)?;
    Ok((b, g.expect("gradients requested")))
}

/// Finite-difference check of the loss gradients, `per_param` scalars per tensor.
pub fn efc_grad_check(
    model: &mut EfcModel,
    x: &Matrix,
    y: &VideoLabel,
    eps: f64,
    per_param: usize,
) -> Result<GradCheckReport> {
    model.check_input(x)?;
    let net = model.net.clone();
    let config = model.config.clone();
    let ids: Vec<ParamId> = model.store.ids().collect();
    let mut loss = |s: &ParamStore| {
        let (b, g) = efc_gradients(&net, s, &config, x, y)?;
        Ok((b.total, g))
    };
    grad_check_subset(&mut loss, &mut model.store, eps, &ids, per_param)
}
