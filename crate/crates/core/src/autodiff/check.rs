//! Central finite-difference gradient checking.

use super::{Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

fn check_eps(eps: f64) -> Result<()> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Config(format!(
            "finite-difference epsilon must lie in [1e-7, 1e-3], got {eps}"
        )));
    }
    Ok(())
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let e = (a - n).abs() / a.abs().max(1.0);
            if e.is_finite() {
                e
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// Compares the reverse-mode gradient of `f` at `point` with central
/// differences, returning `max |analytic - numeric| / max(1, |analytic|)`.
///
/// `f` builds a scalar on the given graph from a leaf holding the point.
/// Non-finite evaluations yield an infinite error rather than an `Err`.
pub fn finite_difference_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    check_eps(eps)?;
    let analytic = {
        let mut g = Graph::new();
        let x = g.param(point.clone());
        let Ok(loss) = f(&mut g, x) else {
            return Ok(f64::INFINITY);
        };
        let grads = g.backward(loss)?;
        grads.get_or_zeros(x, point.shape()).into_data()
    };

    let eval = |p: Tensor| -> f64 {
        let mut g = Graph::new();
        let x = g.input(p);
        f(&mut g, x).map(|l| g.scalar(l)).unwrap_or(f64::NAN)
    };
    let mut numeric = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += eps;
        let mut minus = point.clone();
        minus.data_mut()[i] -= eps;
        numeric.push((eval(plus) - eval(minus)) / (2.0 * eps));
    }
    Ok(relative_error(&analytic, &numeric))
}

/// Same check over every scalar of a parameter store.
pub fn check_param_gradients<F>(params: &ParamStore, f: F, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore, &super::Binding) -> Result<Var>,
{
    check_eps(eps)?;
    let mut g = Graph::new();
    let binding = params.bind(&mut g);
    let loss = f(&mut g, params, &binding)?;
    let grads = g.backward(loss)?;
    let analytic: Vec<f64> = params
        .collect_grads(&grads, &binding)
        .into_iter()
        .flat_map(Tensor::into_data)
        .collect();

    let base = params.flatten();
    let eval = |flat: &[f64]| -> f64 {
        let mut p = params.clone();
        p.set_flat(flat);
        let mut g = Graph::new();
        let b = p.bind(&mut g);
        f(&mut g, &p, &b).map(|l| g.scalar(l)).unwrap_or(f64::NAN)
    };
    let mut numeric = Vec::with_capacity(base.len());
    let mut probe = base.clone();
    for i in 0..base.len() {
        probe[i] = base[i] + eps;
        let up = eval(&probe);
        probe[i] = base[i] - eps;
        let down = eval(&probe);
        probe[i] = base[i];
        numeric.push((up - down) / (2.0 * eps));
    }
    Ok(relative_error(&analytic, &numeric))
}
