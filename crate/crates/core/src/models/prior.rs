use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Independent prior on a single parameter coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoordPrior {
    /// Improper constant density; contributes nothing to scores or curvature.
    Flat,
    Normal { scale: f64 },
    /// Half-Cauchy on `(0, inf)`; coordinates must be strictly positive.
    HalfCauchy { scale: f64 },
}

impl CoordPrior {
    fn check(&self, value: f64) -> Result<()> {
        match *self {
            CoordPrior::HalfCauchy { .. } if value <= 0.0 => Err(Error::Domain(format!(
                "half-Cauchy coordinate must be positive, got {value}"
            ))),
            _ => Ok(()),
        }
    }

    /// Log density up to an additive constant.
    fn log_density(&self, t: f64) -> f64 {
        match *self {
            CoordPrior::Flat => 0.0,
            CoordPrior::Normal { scale } => -0.5 * t * t / (scale * scale),
            CoordPrior::HalfCauchy { scale } => -(t / scale).powi(2).ln_1p(),
        }
    }

    fn score(&self, t: f64) -> f64 {
        match *self {
            CoordPrior::Flat => 0.0,
            CoordPrior::Normal { scale } => -t / (scale * scale),
            CoordPrior::HalfCauchy { scale } => -2.0 * t / (scale * scale + t * t),
        }
    }

    fn curvature(&self, t: f64) -> f64 {
        match *self {
            CoordPrior::Flat => 0.0,
            CoordPrior::Normal { scale } => -1.0 / (scale * scale),
            CoordPrior::HalfCauchy { scale } => {
                let s2 = scale * scale;
                let den = s2 + t * t;
                -2.0 * (s2 - t * t) / (den * den)
            }
        }
    }
}

/// Product prior over parameter coordinates. Its Hessian is diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Prior(Vec<CoordPrior>);

impl Prior {
    pub fn new(coords: Vec<CoordPrior>) -> Self {
        Prior(coords)
    }

    pub fn standard_normal(dim: usize) -> Self {
        Prior(vec![CoordPrior::Normal { scale: 1.0 }; dim])
    }

    pub fn coords(&self) -> &[CoordPrior] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn check(&self, theta: &[f64]) -> Result<()> {
        self.0
            .iter()
            .zip(theta)
            .try_for_each(|(p, &t)| p.check(t))
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        self.0.iter().zip(theta).map(|(p, &t)| p.log_density(t)).sum()
    }

    /// Adds `scale * grad log pi_0(theta)` into `out`.
    pub fn add_score(&self, theta: &[f64], scale: f64, out: &mut [f64]) {
        for ((p, &t), o) in self.0.iter().zip(theta).zip(out) {
            *o += scale * p.score(t);
        }
    }

    pub fn quad(&self, theta: &[f64], v: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(theta)
            .zip(v)
            .map(|((p, &t), &vi)| p.curvature(t) * vi * vi)
            .sum()
    }

    pub fn trace(&self, theta: &[f64]) -> f64 {
        self.0.iter().zip(theta).map(|(p, &t)| p.curvature(t)).sum()
    }
}
