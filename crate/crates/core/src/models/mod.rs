//! Likelihood and loss model contracts, the bundled analytic models, and a
//! central-difference audit of their derivatives.
//!
//! Model methods prefixed `eval_` assume the parameter already passed
//! [`LikelihoodModel::check_param`] and the data point has `layout().dim`
//! coordinates; the free functions in this module validate first.
//!
//! Data-side derivatives from `eval_*` cover every coordinate of the point;
//! the validated wrappers restrict them to the layout's free coordinates.

mod audit;
mod features;
mod likelihood;
mod loss;
mod prior;
mod spec;

pub use audit::{finite_difference_audit, loss_finite_difference_audit, AuditReport, AUDIT_TOLERANCE};
pub use features::FeatureMap;
pub use likelihood::{BayesLinReg, GaussianMeanLocation, KidScoreModel};
pub use loss::{LogisticLoss, Regularizer, SquaredErrorLoss};
pub use prior::{CoordPrior, Prior};
pub use spec::{BuiltModel, ModelSpec};

use crate::error::{ensure_finite, ensure_len, Result};
use crate::measures::{DataPoint, Layout};

pub trait LikelihoodModel: Send + Sync {
    fn name(&self) -> &str;

    fn param_dim(&self) -> usize;

    fn layout(&self) -> &Layout;

    fn prior(&self) -> &Prior;

    /// Domain check for `theta` (length, finiteness, model constraints).
    fn check_param(&self, theta: &[f64]) -> Result<()> {
        ensure_len("parameter", self.param_dim(), theta.len())?;
        ensure_finite("parameter", theta)?;
        self.prior().check(theta)
    }

    /// `log l(theta, x)` including every theta-dependent term.
    fn eval_log_lik(&self, theta: &[f64], x: &[f64]) -> f64;

    /// Writes `grad_theta log l(theta, x)` into `out`.
    fn eval_score(&self, theta: &[f64], x: &[f64], out: &mut [f64]);

    /// `v^T H v` for the theta-Hessian `H` of `log l`.
    fn eval_hessian_quad(&self, theta: &[f64], x: &[f64], v: &[f64]) -> f64;

    fn eval_hessian_trace(&self, theta: &[f64], x: &[f64]) -> f64;

    /// Row-major `param_dim x layout().dim` Jacobian `d score_i / d x_j`.
    fn eval_score_data_jacobian(&self, theta: &[f64], x: &[f64], jac: &mut [f64]);

    /// Returns the curvature (`v^T H v` when `direction` is given, `Tr H`
    /// otherwise) and writes its gradient with respect to `x` into `grad`.
    fn eval_curvature_data_gradient(
        &self,
        theta: &[f64],
        x: &[f64],
        direction: Option<&[f64]>,
        grad: &mut [f64],
    ) -> f64;

    /// Predicted response mean and noise scale at `theta` for the covariates
    /// of `x`; `None` for models without a response coordinate.
    fn predict(&self, _theta: &[f64], _x: &[f64]) -> Option<(f64, f64)> {
        None
    }
}

pub trait LossModel: Send + Sync {
    fn name(&self) -> &str;

    fn param_dim(&self) -> usize;

    fn layout(&self) -> &Layout;

    fn regularizer(&self) -> Regularizer;

    fn eval_loss(&self, theta: &[f64], x: &[f64]) -> f64;

    /// Writes `grad_theta l(theta, x)` into `out`.
    fn eval_grad(&self, theta: &[f64], x: &[f64], out: &mut [f64]);

    /// Row-major `param_dim x layout().dim` Jacobian of `grad_theta l` with
    /// respect to the data point.
    fn eval_grad_data_jacobian(&self, theta: &[f64], x: &[f64], jac: &mut [f64]);

    /// Initial response for a pseudo-point with covariates from `x` and a
    /// standard normal draw `noise`; `None` when there is no response.
    fn init_response(&self, _theta: &[f64], _x: &[f64], _noise: f64) -> Option<f64> {
        None
    }
}

fn check_point(layout: &Layout, x: &DataPoint) -> Result<()> {
    layout.check_point(x)
}

/// Selects the free-coordinate columns of a row-major `rows x dim` matrix.
pub(crate) fn free_columns(full: &[f64], rows: usize, layout: &Layout) -> Vec<Vec<f64>> {
    let free = layout.free_indices();
    (0..rows)
        .map(|i| free.iter().map(|&j| full[i * layout.dim + j]).collect())
        .collect()
}

pub(crate) fn free_entries(full: &[f64], layout: &Layout) -> Vec<f64> {
    layout.free_indices().into_iter().map(|j| full[j]).collect()
}

pub fn log_lik(model: &dyn LikelihoodModel, theta: &[f64], x: &DataPoint) -> Result<f64> {
    model.check_param(theta)?;
    check_point(model.layout(), x)?;
    Ok(model.eval_log_lik(theta, x.coords()))
}

pub fn score_theta(model: &dyn LikelihoodModel, theta: &[f64], x: &DataPoint) -> Result<Vec<f64>> {
    model.check_param(theta)?;
    check_point(model.layout(), x)?;
    let mut out = vec![0.0; model.param_dim()];
    model.eval_score(theta, x.coords(), &mut out);
    Ok(out)
}

/// `v^T H v` when `direction` is given, otherwise `Tr H`.
pub fn curvature(
    model: &dyn LikelihoodModel,
    theta: &[f64],
    x: &DataPoint,
    direction: Option<&[f64]>,
) -> Result<f64> {
    model.check_param(theta)?;
    check_point(model.layout(), x)?;
    Ok(match direction {
        Some(v) => {
            ensure_len("direction", model.param_dim(), v.len())?;
            model.eval_hessian_quad(theta, x.coords(), v)
        }
        None => model.eval_hessian_trace(theta, x.coords()),
    })
}

/// Data-side derivatives restricted to the layout's free coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct DataDerivatives {
    /// `param_dim x free_dim`
    pub jac_score: Vec<Vec<f64>>,
    /// Gradient of `v^T H v`, present when a direction was given.
    pub grad_quad: Option<Vec<f64>>,
    pub grad_trace: Vec<f64>,
}

pub fn data_derivatives(
    model: &dyn LikelihoodModel,
    theta: &[f64],
    x: &DataPoint,
    direction: Option<&[f64]>,
) -> Result<DataDerivatives> {
    model.check_param(theta)?;
    let layout = model.layout();
    check_point(layout, x)?;
    let d = model.param_dim();
    let mut jac = vec![0.0; d * layout.dim];
    model.eval_score_data_jacobian(theta, x.coords(), &mut jac);
    let mut grad = vec![0.0; layout.dim];
    model.eval_curvature_data_gradient(theta, x.coords(), None, &mut grad);
    let grad_trace = free_entries(&grad, layout);
    let grad_quad = match direction {
        Some(v) => {
            ensure_len("direction", d, v.len())?;
            model.eval_curvature_data_gradient(theta, x.coords(), Some(v), &mut grad);
            Some(free_entries(&grad, layout))
        }
        None => None,
    };
    Ok(DataDerivatives {
        jac_score: free_columns(&jac, d, layout),
        grad_quad,
        grad_trace,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorTerms {
    pub score: Vec<f64>,
    /// `v^T H_0 v`, present when a direction was given.
    pub quad: Option<f64>,
    pub trace: f64,
}

pub fn prior_terms(
    model: &dyn LikelihoodModel,
    theta: &[f64],
    direction: Option<&[f64]>,
) -> Result<PriorTerms> {
    model.check_param(theta)?;
    let prior = model.prior();
    let mut score = vec![0.0; model.param_dim()];
    prior.add_score(theta, 1.0, &mut score);
    let quad = match direction {
        Some(v) => {
            ensure_len("direction", model.param_dim(), v.len())?;
            Some(prior.quad(theta, v))
        }
        None => None,
    };
    Ok(PriorTerms {
        score,
        quad,
        trace: prior.trace(theta),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossTerms {
    pub value: f64,
    pub grad_theta: Vec<f64>,
    /// `param_dim x free_dim`
    pub jac_data: Vec<Vec<f64>>,
}

pub fn loss_terms(model: &dyn LossModel, theta: &[f64], x: &DataPoint) -> Result<LossTerms> {
    let d = model.param_dim();
    ensure_len("parameter", d, theta.len())?;
    ensure_finite("parameter", theta)?;
    let layout = model.layout();
    check_point(layout, x)?;
    let mut grad = vec![0.0; d];
    model.eval_grad(theta, x.coords(), &mut grad);
    let mut jac = vec![0.0; d * layout.dim];
    model.eval_grad_data_jacobian(theta, x.coords(), &mut jac);
    Ok(LossTerms {
        value: model.eval_loss(theta, x.coords()),
        grad_theta: grad,
        jac_data: free_columns(&jac, d, layout),
    })
}
