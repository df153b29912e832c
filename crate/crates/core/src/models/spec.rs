use serde::{Deserialize, Serialize};

use super::{
    BayesLinReg, FeatureMap, GaussianMeanLocation, KidScoreModel, LikelihoodModel, LogisticLoss,
    LossModel, Regularizer, SquaredErrorLoss,
};
use crate::error::{Error, Result};

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

fn unit_scale() -> f64 {
    1.0
}

fn cauchy_scale() -> f64 {
    2.5
}

fn intercept_features() -> FeatureMap {
    FeatureMap::IdentityWithIntercept
}

/// Model selection and hyperparameters as they appear in a run config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    GaussianMeanLocation {
        dim: usize,
    },
    BayesLinReg {
        #[serde(default = "one")]
        covariate_dim: usize,
        #[serde(default = "intercept_features")]
        features: FeatureMap,
        #[serde(default = "unit_scale")]
        prior_scale: f64,
    },
    Kidscore {
        /// Includes the intercept coordinate.
        #[serde(default = "two")]
        covariate_dim: usize,
        #[serde(default = "cauchy_scale")]
        sigma_prior_scale: f64,
    },
    SquaredError {
        #[serde(default = "one")]
        covariate_dim: usize,
        #[serde(default = "intercept_features")]
        features: FeatureMap,
        #[serde(default)]
        ridge: f64,
    },
    Logistic {
        #[serde(default = "one")]
        covariate_dim: usize,
        #[serde(default = "intercept_features")]
        features: FeatureMap,
        #[serde(default)]
        ridge: f64,
    },
}

pub enum BuiltModel {
    Likelihood(Box<dyn LikelihoodModel>),
    Loss(Box<dyn LossModel>),
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive and finite, got {v}")))
    }
}

fn ridge(lambda: f64) -> Result<Regularizer> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::config("model.ridge", "must be non-negative"));
    }
    Ok(if lambda == 0.0 {
        Regularizer::None
    } else {
        Regularizer::Ridge { lambda }
    })
}

impl ModelSpec {
    pub fn build(&self) -> Result<BuiltModel> {
        Ok(match *self {
            ModelSpec::GaussianMeanLocation { dim } => {
                if dim == 0 {
                    return Err(Error::config("model.dim", "must be positive"));
                }
                BuiltModel::Likelihood(Box::new(GaussianMeanLocation::new(dim)))
            }
            ModelSpec::BayesLinReg {
                covariate_dim,
                features,
                prior_scale,
            } => {
                features.validate(covariate_dim)?;
                positive("model.prior_scale", prior_scale)?;
                BuiltModel::Likelihood(Box::new(BayesLinReg::new(features, covariate_dim, prior_scale)))
            }
            ModelSpec::Kidscore {
                covariate_dim,
                sigma_prior_scale,
            } => {
                if covariate_dim < 1 {
                    return Err(Error::config("model.covariate_dim", "must include the intercept"));
                }
                positive("model.sigma_prior_scale", sigma_prior_scale)?;
                BuiltModel::Likelihood(Box::new(KidScoreModel::new(covariate_dim, sigma_prior_scale)))
            }
            ModelSpec::SquaredError {
                covariate_dim,
                features,
                ridge: lambda,
            } => {
                features.validate(covariate_dim)?;
                BuiltModel::Loss(Box::new(SquaredErrorLoss::new(features, covariate_dim, ridge(lambda)?)))
            }
            ModelSpec::Logistic {
                covariate_dim,
                features,
                ridge: lambda,
            } => {
                features.validate(covariate_dim)?;
                BuiltModel::Loss(Box::new(LogisticLoss::new(features, covariate_dim, ridge(lambda)?)))
            }
        })
    }
}
