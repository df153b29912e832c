use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature map `psi` applied to the covariate part of a regression data point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureMap {
    /// `psi(x) = x`
    Identity,
    /// `psi(x) = (1, x)`
    IdentityWithIntercept,
    /// `psi(x) = (1, x, x^2, ..., x^degree)` for scalar `x`.
    Polynomial { degree: usize },
}

impl FeatureMap {
    pub fn validate(&self, covariate_dim: usize) -> Result<()> {
        if covariate_dim == 0 {
            return Err(Error::config("model.covariate_dim", "must be positive"));
        }
        if let FeatureMap::Polynomial { degree } = *self {
            if covariate_dim != 1 {
                return Err(Error::config(
                    "model.features",
                    "polynomial features need a scalar covariate",
                ));
            }
            if degree == 0 {
                return Err(Error::config("model.features.degree", "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn dim(&self, covariate_dim: usize) -> usize {
        match *self {
            FeatureMap::Identity => covariate_dim,
            FeatureMap::IdentityWithIntercept => covariate_dim + 1,
            FeatureMap::Polynomial { degree } => degree + 1,
        }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match *self {
            FeatureMap::Identity => out.copy_from_slice(x),
            FeatureMap::IdentityWithIntercept => {
                out[0] = 1.0;
                out[1..].copy_from_slice(x);
            }
            FeatureMap::Polynomial { .. } => {
                let mut p = 1.0;
                for o in out.iter_mut() {
                    *o = p;
                    p *= x[0];
                }
            }
        }
    }

    /// Row-major `dim x covariate_dim` Jacobian `d psi_i / d x_j`.
    pub fn jacobian(&self, x: &[f64], jac: &mut [f64]) {
        jac.fill(0.0);
        let q = x.len();
        match *self {
            FeatureMap::Identity => {
                for j in 0..q {
                    jac[j * q + j] = 1.0;
                }
            }
            FeatureMap::IdentityWithIntercept => {
                for j in 0..q {
                    jac[(j + 1) * q + j] = 1.0;
                }
            }
            FeatureMap::Polynomial { degree } => {
                let mut p = 1.0;
                for i in 1..=degree {
                    jac[i] = i as f64 * p;
                    p *= x[0];
                }
            }
        }
    }
}
