use super::params::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Result of comparing analytic gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Denominator floor: below this magnitude both gradients are treated as zero.
const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central finite differences on every scalar of `store`, compared against the
/// gradients `loss_fn` reports at the unperturbed point.
///
/// `loss_fn` must be deterministic: any noise it uses has to be frozen.
pub fn grad_check<F>(mut loss_fn: F, store: &mut ParamStore, eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<(f64, Gradients)>,
{
    let ids: Vec<ParamId> = store.ids().collect();
    grad_check_subset(&mut loss_fn, store, eps, &ids, usize::MAX)
}

/// As [`grad_check`], restricted to `ids` and at most `per_param` scalars of each
/// (evenly strided), for large models.
pub fn grad_check_subset<F>(
    loss_fn: &mut F,
    store: &mut ParamStore,
    eps: f64,
    ids: &[ParamId],
    per_param: usize,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<(f64, Gradients)>,
{
    let (loss, grads) = loss_fn(store)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "loss at the unperturbed point".into(),
        });
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for &id in ids {
        let n = store.value(id).len();
        let stride = n.div_ceil(per_param.min(n).max(1));
        for j in (0..n).step_by(stride.max(1)) {
            let orig = store.value(id).as_slice()[j];
            store.value_mut(id).as_mut_slice()[j] = orig + eps;
            let up = loss_fn(store).map(|r| r.0);
            store.value_mut(id).as_mut_slice()[j] = orig - eps;
            let down = loss_fn(store).map(|r| r.0);
            store.value_mut(id).as_mut_slice()[j] = orig;
            let (up, down) = (up?, down?);
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("perturbed loss at {}[{j}]", store.name(id)),
                });
            }
            let numeric = (up - down) / (2.0 * eps);
            let err = relative_error(grads.get(id).as_slice()[j], numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.name(id).to_string(), j));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::layers::{Activation, DenseStack};
    use crate::numerics::tape::Tape;
    use crate::numerics::tensor::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_sum_is_exact() {
        let mut store = ParamStore::new();
        store.add("w", Matrix::from_vec(1, 4, vec![0.3, -1.0, 2.0, 5.0]).unwrap());
        let report = grad_check(
            |s| {
                let mut tape = Tape::new(s);
                let w = tape.param(ParamId(0));
                let l = tape.sum(w);
                Ok((tape.scalar(l), tape.backward(l)?))
            },
            &mut store,
            1e-4,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert_eq!(report.checked, 4);
    }

    #[test]
    fn relu_mlp_with_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut store = ParamStore::new();
        let mut net = DenseStack::new(&mut store, "mlp", 6, &[12, 12], Activation::Relu, &mut rng);
        net.layers.push(crate::numerics::layers::Dense::new(
            &mut store,
            "out",
            12,
            3,
            Activation::Identity,
            &mut rng,
        ));
        let x = Matrix::from_vec(4, 6, (0..24).map(|i| ((i * 37 % 11) as f64 - 5.0) / 4.0).collect()).unwrap();
        let y = Matrix::from_vec(4, 3, (0..12).map(|i| ((i * 5 % 7) as f64 - 3.0) / 2.0).collect()).unwrap();
        let report = grad_check(
            |s| {
                let mut tape = Tape::new(s);
                let xi = tape.input(x.clone());
                let yi = tape.input(y.clone());
                let out = net.apply(&mut tape, xi)?;
                let l = tape.half_squared_error(out, yi)?;
                Ok((tape.scalar(l), tape.backward(l)?))
            },
            &mut store,
            1e-4,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut store = ParamStore::new();
        store.add("w", Matrix::filled(1, 1, 1.0));
        let res = grad_check(
            |_| Ok((f64::NAN, Gradients(vec![Matrix::zeros(1, 1)]))),
            &mut store,
            1e-4,
        );
        assert!(matches!(res, Err(Error::NonFinite { .. })));
    }
}
