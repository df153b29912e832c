use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{LikelihoodModel, LossModel};
use crate::error::{ensure_len, Error, Result};
use crate::measures::DataPoint;
use crate::numeric::norm_sq;

pub const AUDIT_TOLERANCE: f64 = 1e-5;
const STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct AuditReport {
    /// `(callback, relative error)` for every audited callback.
    pub checks: Vec<(&'static str, f64)>,
    pub max_error: f64,
    pub passed: bool,
}

impl AuditReport {
    fn from_checks(checks: Vec<(&'static str, f64)>) -> Self {
        let max_error = checks.iter().map(|c| c.1).fold(0.0, f64::max);
        AuditReport {
            checks,
            max_error,
            passed: max_error < AUDIT_TOLERANCE,
        }
    }
}

fn step(c: f64) -> f64 {
    STEP * c.abs().max(1.0)
}

/// `max |analytic - numeric| / max(||numeric||, 1)`
fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    diff / norm_sq(numeric).sqrt().max(1.0)
}

/// Central-difference derivative of the vector-valued `f` along every
/// coordinate listed in `coords`; returns `out_len x coords.len()` row-major.
fn central_jacobian(
    point: &[f64],
    coords: &[usize],
    out_len: usize,
    mut f: impl FnMut(&[f64], &mut [f64]),
) -> Vec<f64> {
    let mut jac = vec![0.0; out_len * coords.len()];
    let mut p = point.to_vec();
    let mut plus = vec![0.0; out_len];
    let mut minus = vec![0.0; out_len];
    for (c, &j) in coords.iter().enumerate() {
        let h = step(point[j]);
        p[j] = point[j] + h;
        f(&p, &mut plus);
        p[j] = point[j] - h;
        f(&p, &mut minus);
        p[j] = point[j];
        for i in 0..out_len {
            jac[i * coords.len() + c] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    jac
}

fn check_interior(model: &dyn LikelihoodModel, theta: &[f64]) -> Result<()> {
    model.check_param(theta)?;
    let mut probe = theta.to_vec();
    for j in 0..theta.len() {
        for sign in [-2.0, 2.0] {
            probe[j] = theta[j] + sign * step(theta[j]);
            model.check_param(&probe).map_err(|_| {
                Error::Domain(format!(
                    "coordinate {j} of the parameter is within two audit steps of the domain boundary"
                ))
            })?;
        }
        probe[j] = theta[j];
    }
    Ok(())
}

/// Compares every analytic callback of `model` at `(theta, x)` against
/// central differences of `log_lik` and the score. Passes when every relative
/// error is below [`AUDIT_TOLERANCE`].
pub fn finite_difference_audit(
    model: &dyn LikelihoodModel,
    theta: &[f64],
    x: &DataPoint,
    seed: u64,
) -> Result<AuditReport> {
    check_interior(model, theta)?;
    let layout = model.layout();
    layout.check_point(x)?;
    let d = model.param_dim();
    let xs = x.coords();
    let all_params: Vec<usize> = (0..d).collect();
    let free = layout.free_indices();
    let prior = model.prior();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();

    let mut checks = Vec::new();

    let mut score = vec![0.0; d];
    model.eval_score(theta, xs, &mut score);
    let num = central_jacobian(theta, &all_params, 1, |t, out| out[0] = model.eval_log_lik(t, xs));
    checks.push(("score", rel_error(&score, &num)));

    let mut pscore = vec![0.0; d];
    prior.add_score(theta, 1.0, &mut pscore);
    let num = central_jacobian(theta, &all_params, 1, |t, out| out[0] = prior.log_density(t));
    checks.push(("prior_score", rel_error(&pscore, &num)));

    // Hessian of log l via differences of the analytic score.
    let hess = central_jacobian(theta, &all_params, d, |t, out| model.eval_score(t, xs, out));
    let quad_num: f64 = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| v[i] * hess[i * d + j] * v[j])
        .sum();
    let trace_num: f64 = (0..d).map(|i| hess[i * d + i]).sum();
    checks.push(("hessian_quad", rel_error(&[model.eval_hessian_quad(theta, xs, &v)], &[quad_num])));
    checks.push(("hessian_trace", rel_error(&[model.eval_hessian_trace(theta, xs)], &[trace_num])));

    let phess = central_jacobian(theta, &all_params, d, |t, out| {
        out.fill(0.0);
        prior.add_score(t, 1.0, out)
    });
    let pquad_num: f64 = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| v[i] * phess[i * d + j] * v[j])
        .sum();
    let ptrace_num: f64 = (0..d).map(|i| phess[i * d + i]).sum();
    checks.push(("prior_quad", rel_error(&[prior.quad(theta, &v)], &[pquad_num])));
    checks.push(("prior_trace", rel_error(&[prior.trace(theta)], &[ptrace_num])));

    if !free.is_empty() {
        let mut jac = vec![0.0; d * layout.dim];
        model.eval_score_data_jacobian(theta, xs, &mut jac);
        let jac_free: Vec<f64> = super::free_columns(&jac, d, layout).concat();
        let num = central_jacobian(xs, &free, d, |p, out| model.eval_score(theta, p, out));
        checks.push(("jac_score", rel_error(&jac_free, &num)));

        let mut grad = vec![0.0; layout.dim];
        let q = model.eval_curvature_data_gradient(theta, xs, Some(&v), &mut grad);
        checks.push(("quad_consistency", rel_error(&[q], &[model.eval_hessian_quad(theta, xs, &v)])));
        let num = central_jacobian(xs, &free, 1, |p, out| out[0] = model.eval_hessian_quad(theta, p, &v));
        checks.push(("grad_quad", rel_error(&super::free_entries(&grad, layout), &num)));

        let tr = model.eval_curvature_data_gradient(theta, xs, None, &mut grad);
        checks.push(("trace_consistency", rel_error(&[tr], &[model.eval_hessian_trace(theta, xs)])));
        let num = central_jacobian(xs, &free, 1, |p, out| out[0] = model.eval_hessian_trace(theta, p));
        checks.push(("grad_trace", rel_error(&super::free_entries(&grad, layout), &num)));
    }

    Ok(AuditReport::from_checks(checks))
}

/// Audit of a loss model: the theta-gradient against differences of the
/// loss, and the data Jacobian against differences of the gradient.
pub fn loss_finite_difference_audit(
    model: &dyn LossModel,
    theta: &[f64],
    x: &DataPoint,
) -> Result<AuditReport> {
    let d = model.param_dim();
    ensure_len("parameter", d, theta.len())?;
    let layout = model.layout();
    layout.check_point(x)?;
    let xs = x.coords();
    let all_params: Vec<usize> = (0..d).collect();
    let free = layout.free_indices();

    let mut checks = Vec::new();
    let mut grad = vec![0.0; d];
    model.eval_grad(theta, xs, &mut grad);
    let num = central_jacobian(theta, &all_params, 1, |t, out| out[0] = model.eval_loss(t, xs));
    checks.push(("grad_theta", rel_error(&grad, &num)));

    let reg = model.regularizer();
    let mut rgrad = vec![0.0; d];
    reg.add_grad(theta, &mut rgrad);
    let num = central_jacobian(theta, &all_params, 1, |t, out| out[0] = reg.value(t));
    checks.push(("regularizer_grad", rel_error(&rgrad, &num)));

    let mut jac = vec![0.0; d * layout.dim];
    model.eval_grad_data_jacobian(theta, xs, &mut jac);
    let jac_free: Vec<f64> = super::free_columns(&jac, d, layout).concat();
    let num = central_jacobian(xs, &free, d, |p, out| model.eval_grad(theta, p, out));
    checks.push(("jac_data", rel_error(&jac_free, &num)));

    Ok(AuditReport::from_checks(checks))
}
