use serde::{Deserialize, Serialize};

use super::changepoints::ChangePointSet;
use super::model::DfcModel;
use crate::error::{Error, Result};
use crate::numerics::{gaussian_kl, Matrix};

/// A detected change with the divergences and threshold that triggered it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub t: usize,
    pub d_static: f64,
    pub d_change: f64,
    pub beta: f64,
}

/// Rolling detector state at time `t`. Everything is propagated with
/// distribution means, so detection is deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct DfcState {
    pub t: usize,
    pub f: Vec<f64>,
    pub u: Vec<f64>,
    /// Committed level-2 deterministic state.
    pub d: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    /// Level-2 latent at the last committed level-2 update; input of the transition.
    pub v2_last: Vec<f64>,
    pub beta: f64,
    pub change_log: Vec<ChangeEvent>,
}

/// What one detection step saw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub is_change: bool,
    pub d_static: f64,
    pub d_change: f64,
    /// Threshold used for this step's decision.
    pub beta: f64,
}

impl DfcState {
    /// State after observing the first snippet.
    pub fn initial(model: &DfcModel, x0: &[f64]) -> Result<Self> {
        let f = model.encode(x0)?;
        let u = model.decode(&f)?;
        Self::from_embedding(model, f, u)
    }

    pub(crate) fn from_embedding(model: &DfcModel, f: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        let d = model.initial_hidden();
        let v2 = model.posterior(&f, &d, &u)?.mean().to_vec();
        let v1 = model.level1_posterior(&f, &v2)?.mean().to_vec();
        Ok(DfcState {
            t: 0,
            f,
            u,
            d,
            v1,
            v2_last: v2.clone(),
            v2,
            beta: model.config.beta0,
            change_log: Vec::new(),
        })
    }

    pub fn change_points(&self) -> ChangePointSet {
        let mut set = ChangePointSet::new();
        for e in &self.change_log {
            set.push_increasing(e.t);
        }
        set
    }
}

/// A change is declared when the static prior explains the new posterior worse
/// than `beta` times the change prior.
pub fn boundary_condition(d_static: f64, d_change: f64, beta: f64) -> bool {
    d_static > beta * d_change
}

/// Advances `state` by one snippet and reports whether a change was detected at `t + 1`.
pub fn step_detect(model: &DfcModel, state: &mut DfcState, x_next: &[f64]) -> Result<StepOutcome> {
    let f_next = model.encode(x_next)?;
    let u_next = model.decode(&f_next)?;
    step_embedded(model, state, f_next, u_next)
}

pub(crate) fn step_embedded(
    model: &DfcModel,
    state: &mut DfcState,
    f_next: Vec<f64>,
    u_next: Vec<f64>,
) -> Result<StepOutcome> {
    let cfg = &model.config;
    let p_static = model.prior_static(&state.f, &state.d, &state.u)?;
    let (p_change, d_next) = model.prior_change(&state.f, &state.d, &state.v2_last, &state.u)?;
    let q = model.posterior(&f_next, &d_next, &state.u)?;
    let d_static = gaussian_kl(&q, &p_static)?;
    let d_change = gaussian_kl(&q, &p_change)?;
    if !d_static.is_finite() || !d_change.is_finite() {
        return Err(Error::NonFiniteKl {
            t: state.t,
            d_static,
            d_change,
        });
    }

    let t_next = state.t + 1;
    let beta = state.beta;
    let is_change = t_next >= cfg.warmup && boundary_condition(d_static, d_change, beta);
    if is_change {
        state.change_log.push(ChangeEvent {
            t: t_next,
            d_static,
            d_change,
            beta,
        });
        state.d = model.initial_hidden();
        state.v2_last = q.mean().to_vec();
    }
    state.beta = cfg.next_beta(beta, is_change);
    state.v1 = model.level1_posterior(&f_next, q.mean())?.mean().to_vec();
    state.v2 = q.mean().to_vec();
    state.f = f_next;
    state.u = u_next;
    state.t = t_next;
    Ok(StepOutcome {
        is_change,
        d_static,
        d_change,
        beta,
    })
}

/// Per-step outcomes of a full pass; `steps[t]` decides about snippet `t + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionTrace {
    pub steps: Vec<StepOutcome>,
    pub final_state: Option<DfcState>,
}

impl DetectionTrace {
    pub fn decisions(&self) -> Vec<bool> {
        self.steps.iter().map(|s| s.is_change).collect()
    }

    pub fn change_points(&self) -> ChangePointSet {
        self.final_state
            .as_ref()
            .map(DfcState::change_points)
            .unwrap_or_default()
    }
}

/// Runs the detector over every snippet of `x` from a fresh state.
pub fn detect_trace(model: &DfcModel, x: &Matrix) -> Result<DetectionTrace> {
    if x.rows() == 0 {
        return Ok(DetectionTrace {
            steps: Vec::new(),
            final_state: None,
        });
    }
    let (f, u) = model.encode_decode_rows(x)?;
    let mut state = DfcState::from_embedding(model, f.row(0).to_vec(), u.row(0).to_vec())?;
    let mut steps = Vec::with_capacity(x.rows().saturating_sub(1));
    for t in 1..x.rows() {
        steps.push(step_embedded(model, &mut state, f.row(t).to_vec(), u.row(t).to_vec())?);
    }
    Ok(DetectionTrace {
        steps,
        final_state: Some(state),
    })
}

/// Change-points of a whole sequence.
pub fn detect_sequence(model: &DfcModel, x: &Matrix) -> Result<ChangePointSet> {
    Ok(detect_trace(model, x)?.change_points())
}
