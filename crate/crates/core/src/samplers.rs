//! Posterior draws: exact conjugate sampling, random-walk Metropolis, and
//! CSV ingestion of externally produced draws.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{DrawSource, PosteriorDraws};
use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::measures::DataPoint;
use crate::models::LikelihoodModel;
use crate::table;

/// `T` i.i.d. draws from the Gaussian mean-location posterior
/// `N(sum x_n / (N + 1), I / (N + 1))`.
pub fn exact_gaussian_mean_draws(data: &[DataPoint], draws: usize, seed: u64) -> Result<PosteriorDraws> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if draws == 0 {
        return Err(Error::Empty("draw count"));
    }
    let d = data[0].dim();
    let n1 = data.len() as f64 + 1.0;
    let mut mean = vec![0.0; d];
    for p in data {
        ensure_len("data point dimension", d, p.dim())?;
        for (m, x) in mean.iter_mut().zip(p.coords()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n1);
    let sd = n1.sqrt().recip();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..draws)
        .map(|_| {
            mean.iter()
                .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    PosteriorDraws::new(rows, Vec::new(), DrawSource::Exact)
}

fn default_thinning() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    /// Number of retained draws `T`.
    pub draws: usize,
    /// Defaults to `10 * draws`.
    #[serde(default)]
    pub burn_in: Option<usize>,
    /// Keep every `thinning`-th state; 0 and 1 both keep every state.
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    /// Proposal standard deviation per coordinate.
    pub step_scale: f64,
    pub seed: u64,
    pub init: Vec<f64>,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::config("sampler.draws", "must be at least 1"));
        }
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            return Err(Error::config("sampler.step_scale", "must be positive"));
        }
        ensure_finite("sampler.init", &self.init)
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(10 * self.draws)
    }

    pub fn thinning(&self) -> usize {
        self.thinning.max(1)
    }
}

#[derive(Clone, Debug)]
pub struct RwmOutput {
    pub draws: PosteriorDraws,
    pub acceptance_rate: f64,
}

/// Unnormalised log posterior; `None` outside the parameter domain.
fn log_posterior(model: &dyn LikelihoodModel, data: &[DataPoint], theta: &[f64]) -> Option<f64> {
    model.check_param(theta).ok()?;
    let lp = model.prior().log_density(theta)
        + data
            .iter()
            .map(|x| model.eval_log_lik(theta, x.coords()))
            .sum::<f64>();
    lp.is_finite().then_some(lp)
}

/// Random-walk Metropolis with isotropic Gaussian proposals targeting
/// `pi_X(theta) ∝ pi_0(theta) prod_n l(theta, x_n)`. Proposals outside the
/// model domain are rejected.
pub fn rwm_draws(model: &dyn LikelihoodModel, data: &[DataPoint], config: &SamplerConfig) -> Result<RwmOutput> {
    config.validate()?;
    ensure_len("sampler.init", model.param_dim(), config.init.len())?;
    for x in data {
        model.layout().check_point(x)?;
    }
    model
        .check_param(&config.init)
        .map_err(|e| Error::config("sampler.init", e.to_string()))?;
    let mut current = config.init.clone();
    let mut current_lp = log_posterior(model, data, &current)
        .ok_or_else(|| Error::config("sampler.init", "initial state has zero posterior probability"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let thin = config.thinning();
    let total = config.burn_in() + config.draws * thin;
    let mut proposal = vec![0.0; current.len()];
    let mut accepted = 0usize;
    let mut rows = Vec::with_capacity(config.draws);
    for step in 0..total {
        for (p, c) in proposal.iter_mut().zip(&current) {
            *p = c + config.step_scale * rng.sample::<f64, _>(StandardNormal);
        }
        let u: f64 = rng.gen();
        if let Some(lp) = log_posterior(model, data, &proposal) {
            if u.ln() < lp - current_lp {
                current.copy_from_slice(&proposal);
                current_lp = lp;
                accepted += 1;
            }
        }
        if step >= config.burn_in() && (step - config.burn_in() + 1) % thin == 0 {
            rows.push(current.clone());
        }
    }
    Ok(RwmOutput {
        draws: PosteriorDraws::new(rows, Vec::new(), DrawSource::Rwm)?,
        acceptance_rate: accepted as f64 / total as f64,
    })
}

/// Independent chains with seeds `seed, seed + 1, ...`, run concurrently and
/// concatenated in chain order.
pub fn rwm_chains(
    model: &dyn LikelihoodModel,
    data: &[DataPoint],
    config: &SamplerConfig,
    chains: usize,
) -> Result<RwmOutput> {
    if chains == 0 {
        return Err(Error::config("sampler.chains", "must be at least 1"));
    }
    let outputs = (0..chains)
        .into_par_iter()
        .map(|c| {
            let cfg = SamplerConfig {
                seed: config.seed.wrapping_add(c as u64),
                ..config.clone()
            };
            rwm_draws(model, data, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let acceptance_rate = outputs.iter().map(|o| o.acceptance_rate).sum::<f64>() / chains as f64;
    let rows = outputs
        .into_iter()
        .flat_map(|o| o.draws.rows().to_vec())
        .collect();
    Ok(RwmOutput {
        draws: PosteriorDraws::new(rows, Vec::new(), DrawSource::Rwm)?,
        acceptance_rate,
    })
}

/// Loads draws from a CSV with a header of parameter names and one draw per row.
pub fn load_draws(path: &Path) -> Result<PosteriorDraws> {
    let t = table::read(path)?;
    if t.rows.is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            row: 1,
            reason: "no draws after header".into(),
        });
    }
    PosteriorDraws::new(t.rows, t.header, DrawSource::File)
}

pub fn save_draws(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    table::write(path, &table::render(draws.names(), draws.rows().iter().cloned()))
}
