use serde::{Deserialize, Serialize};

use super::{FeatureMap, LossModel};
use crate::measures::Layout;
use crate::numeric::dot;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Regularizer {
    #[default]
    None,
    /// `lambda * ||theta||^2`
    Ridge { lambda: f64 },
}

impl Regularizer {
    pub fn value(&self, theta: &[f64]) -> f64 {
        match *self {
            Regularizer::None => 0.0,
            Regularizer::Ridge { lambda } => lambda * dot(theta, theta),
        }
    }

    /// Adds `grad R(theta)` into `out`.
    pub fn add_grad(&self, theta: &[f64], out: &mut [f64]) {
        if let Regularizer::Ridge { lambda } = *self {
            for (o, t) in out.iter_mut().zip(theta) {
                *o += 2.0 * lambda * t;
            }
        }
    }
}

/// Features, their Jacobian and `theta . J[:, j]` for a point `(x, y)`.
struct Evaluated {
    psi: Vec<f64>,
    jac: Vec<f64>,
    theta_jac: Vec<f64>,
}

fn evaluate(features: FeatureMap, q: usize, theta: &[f64], x: &[f64]) -> Evaluated {
    let d = features.dim(q);
    let mut psi = vec![0.0; d];
    features.eval(&x[..q], &mut psi);
    let mut jac = vec![0.0; d * q];
    features.jacobian(&x[..q], &mut jac);
    let theta_jac = (0..q)
        .map(|j| (0..d).map(|k| theta[k] * jac[k * q + j]).sum())
        .collect();
    Evaluated {
        psi,
        jac,
        theta_jac,
    }
}

/// `l(theta, x) = (<theta, psi(x)> - y)^2`
#[derive(Clone, Debug)]
pub struct SquaredErrorLoss {
    features: FeatureMap,
    covariate_dim: usize,
    layout: Layout,
    regularizer: Regularizer,
}

impl SquaredErrorLoss {
    pub fn new(features: FeatureMap, covariate_dim: usize, regularizer: Regularizer) -> Self {
        SquaredErrorLoss {
            features,
            covariate_dim,
            layout: Layout::regression(covariate_dim),
            regularizer,
        }
    }
}

impl LossModel for SquaredErrorLoss {
    fn name(&self) -> &str {
        "squared_error"
    }

    fn param_dim(&self) -> usize {
        self.features.dim(self.covariate_dim)
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn regularizer(&self) -> Regularizer {
        self.regularizer
    }

    fn eval_loss(&self, theta: &[f64], x: &[f64]) -> f64 {
        let e = evaluate(self.features, self.covariate_dim, theta, x);
        let r = dot(theta, &e.psi) - x[self.covariate_dim];
        r * r
    }

    fn eval_grad(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let e = evaluate(self.features, self.covariate_dim, theta, x);
        let r = dot(theta, &e.psi) - x[self.covariate_dim];
        for (o, p) in out.iter_mut().zip(&e.psi) {
            *o = 2.0 * p * r;
        }
    }

    fn eval_grad_data_jacobian(&self, theta: &[f64], x: &[f64], jac: &mut [f64]) {
        let q = self.covariate_dim;
        let dim = q + 1;
        let e = evaluate(self.features, q, theta, x);
        let r = dot(theta, &e.psi) - x[q];
        for i in 0..e.psi.len() {
            for j in 0..q {
                jac[i * dim + j] = 2.0 * (e.jac[i * q + j] * r + e.psi[i] * e.theta_jac[j]);
            }
            jac[i * dim + q] = -2.0 * e.psi[i];
        }
    }

    fn init_response(&self, theta: &[f64], x: &[f64], noise: f64) -> Option<f64> {
        let e = evaluate(self.features, self.covariate_dim, theta, x);
        Some(dot(theta, &e.psi) + noise)
    }
}

/// `l(theta, x) = log(1 + exp(-y <theta, psi(x)>))` with labels `y` in
/// `{-1, +1}`; the label is treated as a continuous coordinate for
/// differentiation.
#[derive(Clone, Debug)]
pub struct LogisticLoss {
    features: FeatureMap,
    covariate_dim: usize,
    layout: Layout,
    regularizer: Regularizer,
}

impl LogisticLoss {
    pub fn new(features: FeatureMap, covariate_dim: usize, regularizer: Regularizer) -> Self {
        LogisticLoss {
            features,
            covariate_dim,
            layout: Layout::regression(covariate_dim),
            regularizer,
        }
    }
}

/// `1 / (1 + exp(m))`
fn sigmoid_neg(m: f64) -> f64 {
    if m >= 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

impl LossModel for LogisticLoss {
    fn name(&self) -> &str {
        "logistic"
    }

    fn param_dim(&self) -> usize {
        self.features.dim(self.covariate_dim)
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn regularizer(&self) -> Regularizer {
        self.regularizer
    }

    fn eval_loss(&self, theta: &[f64], x: &[f64]) -> f64 {
        let e = evaluate(self.features, self.covariate_dim, theta, x);
        let m = x[self.covariate_dim] * dot(theta, &e.psi);
        // softplus(-m)
        if m >= 0.0 {
            (-m).exp().ln_1p()
        } else {
            -m + m.exp().ln_1p()
        }
    }

    fn eval_grad(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let e = evaluate(self.features, self.covariate_dim, theta, x);
        let y = x[self.covariate_dim];
        let s = sigmoid_neg(y * dot(theta, &e.psi));
        for (o, p) in out.iter_mut().zip(&e.psi) {
            *o = -y * p * s;
        }
    }

    fn eval_grad_data_jacobian(&self, theta: &[f64], x: &[f64], jac: &mut [f64]) {
        let q = self.covariate_dim;
        let dim = q + 1;
        let e = evaluate(self.features, q, theta, x);
        let y = x[q];
        let tp = dot(theta, &e.psi);
        let s = sigmoid_neg(y * tp);
        let ds = s * (1.0 - s);
        for i in 0..e.psi.len() {
            for j in 0..q {
                jac[i * dim + j] = -y * e.jac[i * q + j] * s + y * y * e.psi[i] * ds * e.theta_jac[j];
            }
            jac[i * dim + q] = -e.psi[i] * s + y * e.psi[i] * ds * tp;
        }
    }

    fn init_response(&self, theta: &[f64], x: &[f64], noise: f64) -> Option<f64> {
        let e = evaluate(self.features, self.covariate_dim, theta, x);
        Some(if dot(theta, &e.psi) + noise >= 0.0 { 1.0 } else { -1.0 })
    }
}
