//! Central finite-difference verification of recorded gradients.

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::nn::params::ParamStore;

/// Below this absolute difference two derivatives are considered equal.
pub const GRAD_ABS_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    /// Elements left out of `max_rel_error` because a relu or max switch
    /// lies within `eps`; see [`is_kink`].
    pub kinks: usize,
}

/// Relative error with an absolute floor near zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= GRAD_ABS_TOL {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs())
}

/// True when the one-sided slopes `left` and `right` disagree clearly and
/// `analytic` lies between them, i.e. the probe straddles a point where the
/// function is not differentiable. A wrong gradient on a smooth stretch has
/// `left ≈ right` and never passes this test.
pub fn is_kink(analytic: f64, left: f64, right: f64) -> bool {
    let scale = left.abs().max(right.abs());
    let asymmetric = (left - right).abs() > 1e-5 * scale + 1e-10;
    let slack = 1e-6 * scale + 1e-9;
    asymmetric && analytic >= left.min(right) - slack && analytic <= left.max(right) + slack
}

/// Compares the reverse-pass gradient of `loss` against
/// `(f(θ+ε) − f(θ−ε)) / 2ε` for every element of every parameter.
pub fn grad_check<F>(store: &mut ParamStore, eps: f64, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    grad_check_subset(store, eps, usize::MAX, loss)
}

/// Like [`grad_check`] but probes at most `per_tensor` evenly spaced
/// elements of each tensor.
pub fn grad_check_subset<F>(store: &mut ParamStore, eps: f64, per_tensor: usize, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(store);
        let root = loss(&mut g)?;
        let v = g.scalar(root);
        if !v.is_finite() {
            return Err(Error::Numeric(format!("grad check: loss is {v}")));
        }
        Ok(v)
    };
    let analytic = {
        let mut g = Graph::new(store);
        let root = loss(&mut g)?;
        if !g.scalar(root).is_finite() {
            return Err(Error::Numeric("grad check: loss is not finite".into()));
        }
        g.backward(root)?
    };
    let names: Vec<String> = store.names().cloned().collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
        kinks: 0,
    };
    let base = eval(store)?;
    for name in names {
        let len = store.value(&name)?.data().len();
        let stride = if per_tensor >= len { 1 } else { len.div_ceil(per_tensor) };
        for idx in (0..len).step_by(stride) {
            let orig = store.get(&name).unwrap().value.data()[idx];
            store.get_mut(&name).unwrap().value.data_mut()[idx] = orig + eps;
            let up = eval(store);
            store.get_mut(&name).unwrap().value.data_mut()[idx] = orig - eps;
            let down = eval(store);
            store.get_mut(&name).unwrap().value.data_mut()[idx] = orig;
            let (up, down) = (up?, down?);
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.get(&name).map(|m| m.data()[idx]).unwrap_or(0.0);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > 0.0 && is_kink(a, (base - down) / eps, (up - base) / eps) {
                report.kinks += 1;
                continue;
            }
            if report.worst_param.is_empty() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = name.clone();
                report.worst_index = idx;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}
