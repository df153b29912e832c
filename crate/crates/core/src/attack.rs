//! Reconstruction by minimising the sliced/IBP Fisher objective or the
//! stationarity gradient norm over weights and free pseudo-data coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{PosteriorDraws, SliceSet};
use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::measures::{recon_statistics, stat_errors, DataPoint, Layout, ReconStats, StatErrors, WeightedEmpiricalMeasure};
use crate::models::{LikelihoodModel, LossModel};
use crate::numeric::{dot, norm_sq, pairwise_sum, pairwise_sum_rows};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    /// Integration-by-parts Fisher objective (Hessian traces).
    Fd,
    /// Sliced Fisher objective with fresh standard normal slices each step.
    Sfd,
    /// Squared norm of the regularised loss gradient at released parameters.
    Nonbayes,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// Unit weights, standard normal free covariates, responses drawn around
    /// the model prediction at the mean released parameter.
    #[default]
    Standard,
}

fn default_slices() -> usize {
    10
}

fn default_lr() -> f64 {
    1e-3
}

fn default_trace_every() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub objective: ObjectiveMode,
    /// Number of pseudo-points `M`.
    pub pseudo_points: usize,
    pub iters: usize,
    #[serde(default = "default_lr")]
    pub lr_w: f64,
    #[serde(default = "default_lr")]
    pub lr_z: f64,
    /// Slices per posterior draw `L` (sliced objective only).
    #[serde(default = "default_slices")]
    pub slices: usize,
    pub seed: u64,
    #[serde(default)]
    pub init: InitPolicy,
    #[serde(default = "default_trace_every")]
    pub trace_every: usize,
    #[serde(default)]
    pub adam: AdamHyper,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pseudo_points == 0 {
            return Err(Error::config("attack.pseudo_points", "must be at least 1"));
        }
        if self.iters == 0 {
            return Err(Error::config("attack.iters", "must be at least 1"));
        }
        for (key, lr) in [("attack.lr_w", self.lr_w), ("attack.lr_z", self.lr_z)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(key, "learning rate must be positive"));
            }
        }
        if self.objective == ObjectiveMode::Sfd && self.slices == 0 {
            return Err(Error::config("attack.slices", "must be at least 1"));
        }
        if self.trace_every == 0 {
            return Err(Error::config("attack.trace_every", "must be at least 1"));
        }
        let a = self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::config("attack.adam", "need 0 <= beta < 1 and eps > 0"));
        }
        Ok(())
    }
}

/// What the attacker was given.
#[derive(Clone, Copy)]
pub enum AttackProblem<'a> {
    Bayes {
        model: &'a dyn LikelihoodModel,
        draws: &'a PosteriorDraws,
    },
    NonBayes {
        model: &'a dyn LossModel,
        theta_star: &'a [f64],
    },
}

impl AttackProblem<'_> {
    pub fn layout(&self) -> &Layout {
        match self {
            AttackProblem::Bayes { model, .. } => model.layout(),
            AttackProblem::NonBayes { model, .. } => model.layout(),
        }
    }

    fn param_dim(&self) -> usize {
        match self {
            AttackProblem::Bayes { model, .. } => model.param_dim(),
            AttackProblem::NonBayes { model, .. } => model.param_dim(),
        }
    }

    fn validate(&self, mode: ObjectiveMode) -> Result<()> {
        match (self, mode) {
            (AttackProblem::Bayes { model, draws }, ObjectiveMode::Fd | ObjectiveMode::Sfd) => {
                draws.check_against(*model)
            }
            (AttackProblem::NonBayes { model, theta_star }, ObjectiveMode::Nonbayes) => {
                ensure_len("released parameter", model.param_dim(), theta_star.len())?;
                ensure_finite("released parameter", theta_star)
            }
            _ => Err(Error::config(
                "attack.objective",
                "fd/sfd need posterior draws and a likelihood model; nonbayes needs a loss model and released parameters",
            )),
        }
    }
}

/// Initial pseudo-data: unit weights, standard normal free covariates, frozen
/// coordinates at their layout values, and responses set to the model's
/// prediction at the mean released parameter plus scaled standard noise.
pub fn initialize_pseudo<R: Rng>(
    problem: &AttackProblem<'_>,
    config: &AttackConfig,
    rng: &mut R,
) -> Result<WeightedEmpiricalMeasure> {
    let layout = problem.layout();
    let center: Vec<f64> = match problem {
        AttackProblem::Bayes { draws, .. } => {
            if draws.is_empty() {
                return Err(Error::Empty("posterior draws"));
            }
            draws.mean()
        }
        AttackProblem::NonBayes { theta_star, .. } => theta_star.to_vec(),
    };
    let points = (0..config.pseudo_points)
        .map(|_| {
            let mut z = vec![0.0; layout.dim];
            for i in layout.x_indices() {
                z[i] = rng.sample(StandardNormal);
            }
            for f in &layout.frozen {
                z[f.index] = f.value;
            }
            if let Some(r) = layout.response.filter(|&r| !layout.is_frozen(r)) {
                let eps: f64 = rng.sample(StandardNormal);
                z[r] = match problem {
                    AttackProblem::Bayes { model, .. } => match model.predict(&center, &z) {
                        Some((mean, scale)) => mean + scale * eps,
                        None => eps,
                    },
                    AttackProblem::NonBayes { model, .. } => {
                        model.init_response(&center, &z, eps).unwrap_or(eps)
                    }
                };
            }
            DataPoint::new(z)
        })
        .collect::<Result<Vec<_>>>()?;
    WeightedEmpiricalMeasure::new(points, None)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveGradients {
    /// Value of the differentiated objective (constants omitted; squared norm
    /// in non-Bayesian mode).
    pub value: f64,
    pub grad_w: Vec<f64>,
    /// `M x free_dim`
    pub grad_z: Vec<Vec<f64>>,
}

/// Value and exact gradient of the selected objective with respect to the
/// weights and the free coordinates of every pseudo-point.
pub fn objective_gradients(
    problem: &AttackProblem<'_>,
    mode: ObjectiveMode,
    slices: Option<&SliceSet>,
    measure: &WeightedEmpiricalMeasure,
) -> Result<ObjectiveGradients> {
    problem.validate(mode)?;
    let layout = problem.layout();
    ensure_len("pseudo-point dimension", layout.dim, measure.dim())?;
    match (mode, slices) {
        (ObjectiveMode::Sfd, None) => return Err(Error::config("attack.slices", "sliced objective needs slices")),
        (ObjectiveMode::Fd | ObjectiveMode::Nonbayes, Some(_)) => {
            return Err(Error::config("attack.slices", "slices are only used by the sliced objective"))
        }
        _ => {}
    }
    if let (Some(s), AttackProblem::Bayes { draws, .. }) = (slices, problem) {
        s.check_shape(draws.len(), problem.param_dim())?;
    }
    Ok(match *problem {
        AttackProblem::Bayes { model, draws } => bayes_gradients(model, draws, slices, measure),
        AttackProblem::NonBayes { model, theta_star } => nonbayes_gradients(model, theta_star, measure),
    })
}

fn bayes_gradients(
    model: &dyn LikelihoodModel,
    draws: &PosteriorDraws,
    slices: Option<&SliceSet>,
    measure: &WeightedEmpiricalMeasure,
) -> ObjectiveGradients {
    let layout = model.layout();
    let free = layout.free_indices();
    let pf = free.len();
    let d = model.param_dim();
    let dim = layout.dim;
    let mm = measure.len();
    let prior = model.prior();
    let width = 1 + mm * (1 + pf);

    // Per draw: [value, grad_w (M), grad_z (M x pf)], reduced in a fixed order.
    let per_draw: Vec<Vec<f64>> = draws
        .rows()
        .par_iter()
        .enumerate()
        .map(|(t, theta)| {
            let mut out = vec![0.0; width];
            let mut scores = vec![0.0; mm * d];
            let mut total = vec![0.0; d];
            prior.add_score(theta, 1.0, &mut total);
            for ((w, z), s) in measure.iter().zip(scores.chunks_mut(d)) {
                model.eval_score(theta, z, s);
                for (a, b) in total.iter_mut().zip(s.iter()) {
                    *a += w * b;
                }
            }
            let mut jac = vec![0.0; d * dim];
            let mut grad = vec![0.0; dim];
            let mut grad_acc = vec![0.0; dim];
            let mut curvature = match slices {
                Some(sl) => {
                    let l = sl.per_draw();
                    (0..l).map(|k| prior.quad(theta, sl.get(t, k))).sum::<f64>() / l as f64
                }
                None => prior.trace(theta),
            };
            for (m, (w, z)) in measure.iter().enumerate() {
                let c = match slices {
                    Some(sl) => {
                        let l = sl.per_draw();
                        grad_acc.fill(0.0);
                        let mut c = 0.0;
                        for k in 0..l {
                            c += model.eval_curvature_data_gradient(theta, z, Some(sl.get(t, k)), &mut grad);
                            for (a, g) in grad_acc.iter_mut().zip(&grad) {
                                *a += g;
                            }
                        }
                        let inv = 1.0 / l as f64;
                        grad_acc.iter_mut().for_each(|a| *a *= inv);
                        c * inv
                    }
                    None => model.eval_curvature_data_gradient(theta, z, None, &mut grad_acc),
                };
                curvature += w * c;
                let s = &scores[m * d..(m + 1) * d];
                out[1 + m] = c + dot(&total, s);
                model.eval_score_data_jacobian(theta, z, &mut jac);
                let gz = &mut out[1 + mm + m * pf..1 + mm + (m + 1) * pf];
                for (slot, &j) in gz.iter_mut().zip(&free) {
                    let jt_s: f64 = (0..d).map(|i| jac[i * dim + j] * total[i]).sum();
                    *slot = w * (grad_acc[j] + jt_s);
                }
            }
            out[0] = curvature + 0.5 * norm_sq(&total);
            out
        })
        .collect();

    let inv_t = 1.0 / draws.len() as f64;
    let sums: Vec<f64> = pairwise_sum_rows(&per_draw, width)
        .into_iter()
        .map(|s| s * inv_t)
        .collect();
    unpack(&sums, mm, pf)
}

fn unpack(sums: &[f64], mm: usize, pf: usize) -> ObjectiveGradients {
    ObjectiveGradients {
        value: sums[0],
        grad_w: sums[1..1 + mm].to_vec(),
        grad_z: sums[1 + mm..].chunks(pf.max(1)).take(mm).map(|c| c[..pf].to_vec()).collect(),
    }
}

fn nonbayes_gradients(model: &dyn LossModel, theta_star: &[f64], measure: &WeightedEmpiricalMeasure) -> ObjectiveGradients {
    let layout = model.layout();
    let free = layout.free_indices();
    let d = model.param_dim();
    let dim = layout.dim;
    let grads: Vec<Vec<f64>> = measure
        .iter()
        .map(|(_, z)| {
            let mut g = vec![0.0; d];
            model.eval_grad(theta_star, z, &mut g);
            g
        })
        .collect();
    let mut total = vec![0.0; d];
    model.regularizer().add_grad(theta_star, &mut total);
    for (i, t) in total.iter_mut().enumerate() {
        let terms: Vec<f64> = measure.weights().iter().zip(&grads).map(|(w, g)| w * g[i]).collect();
        *t += pairwise_sum(&terms);
    }
    let mut jac = vec![0.0; d * dim];
    let grad_w = grads.iter().map(|g| 2.0 * dot(&total, g)).collect();
    let grad_z = measure
        .iter()
        .map(|(w, z)| {
            model.eval_grad_data_jacobian(theta_star, z, &mut jac);
            free.iter()
                .map(|&j| 2.0 * w * (0..d).map(|i| jac[i * dim + j] * total[i]).sum::<f64>())
                .collect()
        })
        .collect();
    ObjectiveGradients {
        value: norm_sq(&total),
        grad_w,
        grad_z,
    }
}

/// Adam moment accumulators for the flattened `(w, Z_free)` vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
    hyper: AdamHyper,
}

impl AdamState {
    pub fn new(len: usize, hyper: AdamHyper) -> Self {
        AdamState {
            first: vec![0.0; len],
            second: vec![0.0; len],
            step: 0,
            hyper,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam step. `groups` lists contiguous
    /// `(length, learning rate)` blocks covering `params`.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], groups: &[(usize, f64)]) -> Result<()> {
        ensure_len("adam parameters", self.first.len(), params.len())?;
        ensure_len("adam gradients", self.first.len(), grads.len())?;
        ensure_len("adam groups", params.len(), groups.iter().map(|g| g.0).sum())?;
        self.step += 1;
        let AdamHyper { beta1, beta2, eps } = self.hyper;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let mut i = 0;
        for &(len, lr) in groups {
            for _ in 0..len {
                let g = grads[i];
                self.first[i] = beta1 * self.first[i] + (1.0 - beta1) * g;
                self.second[i] = beta2 * self.second[i] + (1.0 - beta2) * g * g;
                let m_hat = self.first[i] / bc1;
                let v_hat = self.second[i] / bc2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                i += 1;
            }
        }
        Ok(())
    }
}

/// Optional additive penalty on the reconstruction. Adds its gradient into
/// `grad_w` / `grad_z` (free coordinates) and returns its value.
pub trait Penalty: Sync {
    fn apply(&self, measure: &WeightedEmpiricalMeasure, layout: &Layout, grad_w: &mut [f64], grad_z: &mut [Vec<f64>]) -> f64;
}

/// `weights * sum_m w_m^2 + points * sum_m ||z_m,free||^2`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct L2Penalty {
    pub weights: f64,
    pub points: f64,
}

impl Penalty for L2Penalty {
    fn apply(&self, measure: &WeightedEmpiricalMeasure, layout: &Layout, grad_w: &mut [f64], grad_z: &mut [Vec<f64>]) -> f64 {
        let free = layout.free_indices();
        let mut value = 0.0;
        for (m, (w, z)) in measure.iter().enumerate() {
            value += self.weights * w * w;
            grad_w[m] += 2.0 * self.weights * w;
            for (g, &j) in grad_z[m].iter_mut().zip(&free) {
                value += self.points * z[j] * z[j];
                *g += 2.0 * self.points * z[j];
            }
        }
        value
    }
}

/// Reproducibility header stored alongside a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub objective: ObjectiveMode,
    pub pseudo_points: usize,
    pub iters: usize,
    pub slices: Option<usize>,
    pub seed: u64,
    pub lr_w: f64,
    pub lr_z: f64,
    pub adam: AdamHyper,
    pub draws: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    pub objective: f64,
    pub stats: ReconStats,
    pub errors: Option<StatErrors>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackTrace {
    pub header: TraceHeader,
    pub layout: Layout,
    pub target: Option<ReconStats>,
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Clone, Debug)]
pub struct AttackOutcome {
    pub trace: AttackTrace,
    pub measure: WeightedEmpiricalMeasure,
}

fn pack(measure: &WeightedEmpiricalMeasure, free: &[usize], out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(measure.weights());
    for p in measure.points() {
        out.extend(free.iter().map(|&j| p.coords()[j]));
    }
}

fn unpack_into(params: &[f64], free: &[usize], measure: &mut WeightedEmpiricalMeasure) {
    let mm = measure.len();
    measure.weights_mut().copy_from_slice(&params[..mm]);
    let pf = free.len();
    for (m, p) in measure.points_mut().iter_mut().enumerate() {
        let coords = p.coords_mut();
        for (k, &j) in free.iter().enumerate() {
            coords[j] = params[mm + m * pf + k];
        }
    }
}

/// Runs the attack for `config.iters` Adam steps. With a `target` measure
/// (test mode) every checkpoint also records relative errors of the
/// recovered statistics.
pub fn run_attack(
    problem: &AttackProblem<'_>,
    config: &AttackConfig,
    target: Option<&WeightedEmpiricalMeasure>,
    penalty: Option<&dyn Penalty>,
) -> Result<AttackOutcome> {
    config.validate()?;
    problem.validate(config.objective)?;
    let layout = problem.layout().clone();
    layout.validate()?;
    let target_stats = target.map(|t| recon_statistics(t, &layout)).transpose()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut measure = initialize_pseudo(problem, config, &mut rng)?;
    let free = layout.free_indices();
    let mm = measure.len();
    let groups = [(mm, config.lr_w), (mm * free.len(), config.lr_z)];
    let mut adam = AdamState::new(mm * (1 + free.len()), config.adam);
    let mut params = Vec::new();
    let mut flat_grad = Vec::new();

    let draw_shape = match problem {
        AttackProblem::Bayes { draws, model } => Some((draws.len(), model.param_dim())),
        AttackProblem::NonBayes { .. } => None,
    };
    let next_slices = |rng: &mut ChaCha8Rng| match (config.objective, draw_shape) {
        (ObjectiveMode::Sfd, Some((t, d))) => Some(SliceSet::from_rng(rng, t, config.slices, d)),
        _ => None,
    };

    let checkpoint = |iteration: usize, objective: f64, measure: &WeightedEmpiricalMeasure| -> Result<Checkpoint> {
        let stats = recon_statistics(measure, &layout)?;
        let errors = target_stats
            .as_ref()
            .map(|t| stat_errors(t, &stats, &layout))
            .transpose()?;
        Ok(Checkpoint {
            iteration,
            objective,
            stats,
            errors,
        })
    };

    let mut checkpoints = Vec::new();
    for it in 0..config.iters {
        let slices = next_slices(&mut rng);
        let mut g = objective_gradients(problem, config.objective, slices.as_ref(), &measure)?;
        if let Some(p) = penalty {
            g.value += p.apply(&measure, &layout, &mut g.grad_w, &mut g.grad_z);
        }
        if !g.value.is_finite() || g.grad_w.iter().chain(g.grad_z.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteObjective { iteration: it });
        }
        if it % config.trace_every == 0 {
            checkpoints.push(checkpoint(it, g.value, &measure)?);
        }
        pack(&measure, &free, &mut params);
        flat_grad.clear();
        flat_grad.extend_from_slice(&g.grad_w);
        g.grad_z.iter().for_each(|r| flat_grad.extend_from_slice(r));
        adam.update(&mut params, &flat_grad, &groups)?;
        unpack_into(&params, &free, &mut measure);
    }
    let slices = next_slices(&mut rng);
    let mut g = objective_gradients(problem, config.objective, slices.as_ref(), &measure)?;
    if let Some(p) = penalty {
        g.value += p.apply(&measure, &layout, &mut g.grad_w, &mut g.grad_z);
    }
    if !g.value.is_finite() {
        return Err(Error::NonFiniteObjective { iteration: config.iters });
    }
    checkpoints.push(checkpoint(config.iters, g.value, &measure)?);

    let header = TraceHeader {
        objective: config.objective,
        pseudo_points: config.pseudo_points,
        iters: config.iters,
        slices: (config.objective == ObjectiveMode::Sfd).then_some(config.slices),
        seed: config.seed,
        lr_w: config.lr_w,
        lr_z: config.lr_z,
        adam: config.adam,
        draws: draw_shape.map(|s| s.0),
    };
    Ok(AttackOutcome {
        trace: AttackTrace {
            header,
            layout,
            target: target_stats,
            checkpoints,
        },
        measure,
    })
}

impl AttackTrace {
    pub fn last(&self) -> &Checkpoint {
        self.checkpoints.last().expect("a trace always has a final checkpoint")
    }

    /// Largest relative change of the tracked moments (count, means,
    /// variances) across the last 10% of checkpoints.
    pub fn plateau_change(&self) -> f64 {
        let n = self.checkpoints.len();
        let window = (n / 10).max(2).min(n);
        let first = self.checkpoints[n - window].stats.moments(&self.layout);
        let last = self.checkpoints[n - 1].stats.moments(&self.layout);
        let a = tracked(&first);
        let b = tracked(&last);
        a.iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs() / y.abs().max(crate::measures::REL_ERR_FLOOR))
            .fold(0.0, f64::max)
    }

    /// Plateau when the relative change over the last 10% of checkpoints is below 1e-4.
    pub fn reached_plateau(&self) -> bool {
        self.plateau_change() < 1e-4
    }

    /// Plot-ready CSV: one row per checkpoint.
    pub fn to_csv(&self) -> String {
        let layout = &self.layout;
        let xs = layout.x_indices();
        let mut header = vec!["iteration".to_string(), "objective".into(), "total_mass".into()];
        let mo = self.checkpoints[0].stats.moments(layout);
        for &i in &mo.x_coords {
            header.push(format!("mean_{}", layout.name(i)));
            header.push(format!("var_{}", layout.name(i)));
        }
        let y_name = layout.response.map(|r| layout.name(r));
        if let Some(y) = &y_name {
            header.push(format!("mean_{y}"));
            header.push(format!("var_{y}"));
        }
        let mut raw_names = Vec::new();
        for (a, &i) in xs.iter().enumerate() {
            raw_names.push(format!("sum_{}", layout.name(i)));
            for &j in &xs[a..] {
                raw_names.push(format!("gram_{}_{}", layout.name(i), layout.name(j)));
            }
        }
        if let Some(y) = &y_name {
            for &i in &xs {
                raw_names.push(format!("xy_{}_{y}", layout.name(i)));
            }
            raw_names.push(format!("sum_{y}"));
            raw_names.push(format!("sumsq_{y}"));
        }
        header.extend(raw_names.iter().cloned());
        let with_errors = self.target.is_some();
        if with_errors {
            let tracked_names: Vec<String> = header[2..header.len() - raw_names.len()].to_vec();
            header.extend(tracked_names.iter().map(|n| format!("relerr_{n}")));
            header.extend(raw_names.iter().map(|n| format!("relerr_{n}")));
        }

        let mut out = header.join(",");
        out.push('\n');
        for c in &self.checkpoints {
            let m = c.stats.moments(layout);
            let mut row = vec![c.objective];
            row.extend(tracked(&m));
            row.extend(raw_stats(&c.stats));
            let mut line = format!("{}", c.iteration);
            if let Some(e) = c.errors.as_ref().filter(|_| with_errors) {
                row.extend(tracked_errors(e));
                row.extend(raw_errors(e));
            }
            for v in row {
                line.push(',');
                line.push_str(&format!("{v:?}"));
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// count, (mean, var) per free covariate, then response (mean, var).
fn tracked(m: &crate::measures::Moments) -> Vec<f64> {
    let mut v = vec![m.count];
    for (mean, var) in m.x_mean.iter().zip(&m.x_var) {
        v.push(*mean);
        v.push(*var);
    }
    if let (Some(mean), Some(var)) = (m.y_mean, m.y_var) {
        v.push(mean);
        v.push(var);
    }
    v
}

fn tracked_errors(e: &StatErrors) -> Vec<f64> {
    let mut v = vec![e.total_mass];
    for (mean, var) in e.x_mean.iter().zip(&e.x_var) {
        v.push(*mean);
        v.push(*var);
    }
    if let (Some(mean), Some(var)) = (e.y_mean, e.y_var) {
        v.push(mean);
        v.push(var);
    }
    v
}

fn raw_stats(s: &ReconStats) -> Vec<f64> {
    let mut v = Vec::new();
    for a in 0..s.first_moment.len() {
        v.push(s.first_moment[a]);
        v.extend_from_slice(&s.gram[a][a..]);
    }
    if s.has_response {
        v.extend_from_slice(&s.xy);
        v.push(s.y_sum);
        v.push(s.yy);
    }
    v
}

fn raw_errors(e: &StatErrors) -> Vec<f64> {
    let mut v = Vec::new();
    for a in 0..e.first_moment.len() {
        v.push(e.first_moment[a]);
        v.extend_from_slice(&e.gram[a][a..]);
    }
    if e.y_mean.is_some() {
        v.extend_from_slice(&e.xy);
        v.push(e.y_sum);
        v.push(e.yy);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::{fd_ibp_objective, nonbayes_objective, sfd_objective, DrawSource};
    use crate::models::{FeatureMap, GaussianMeanLocation, KidScoreModel, Regularizer, SquaredErrorLoss};

    fn draws(rows: Vec<Vec<f64>>) -> PosteriorDraws {
        PosteriorDraws::new(rows, Vec::new(), DrawSource::File).unwrap()
    }

    fn kid_draws() -> PosteriorDraws {
        draws(vec![vec![0.2, 0.5, 0.9], vec![0.1, 0.7, 1.1], vec![0.3, 0.6, 0.8]])
    }

    fn kid_measure() -> WeightedEmpiricalMeasure {
        WeightedEmpiricalMeasure::from_rows(
            vec![vec![1.0, 0.4, 0.9], vec![1.0, -1.2, -0.3], vec![1.0, 0.1, 0.5]],
            Some(vec![1.5, 0.7, 2.0]),
        )
        .unwrap()
    }

    fn config(objective: ObjectiveMode) -> AttackConfig {
        AttackConfig {
            objective,
            pseudo_points: 4,
            iters: 30,
            lr_w: 0.01,
            lr_z: 0.01,
            slices: 3,
            seed: 5,
            init: InitPolicy::Standard,
            trace_every: 10,
            adam: AdamHyper::default(),
        }
    }

    #[test]
    fn value_matches_divergence_estimators() {
        let model = KidScoreModel::default();
        let d = kid_draws();
        let m = kid_measure();
        let p = AttackProblem::Bayes { model: &model, draws: &d };
        let fd = objective_gradients(&p, ObjectiveMode::Fd, None, &m).unwrap().value;
        let want = fd_ibp_objective(&model, &d, &m).unwrap().value;
        assert!((fd - want).abs() <= 1e-12 * want.abs().max(1.0));

        let slices = SliceSet::standard_normal(3, 4, 3, 9);
        let sfd = objective_gradients(&p, ObjectiveMode::Sfd, Some(&slices), &m).unwrap().value;
        let want = sfd_objective(&model, &d, &slices, &m).unwrap().value;
        assert!((sfd - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn nonbayes_value_is_squared_gradient_norm() {
        let model = SquaredErrorLoss::new(FeatureMap::IdentityWithIntercept, 1, Regularizer::Ridge { lambda: 0.2 });
        let theta = [0.3, -0.4];
        let m = WeightedEmpiricalMeasure::from_rows(vec![vec![1.0, 2.0], vec![-0.5, 0.1]], Some(vec![1.0, 3.0])).unwrap();
        let p = AttackProblem::NonBayes { model: &model, theta_star: &theta };
        let v = objective_gradients(&p, ObjectiveMode::Nonbayes, None, &m).unwrap().value;
        let norm = nonbayes_objective(&model, &theta, &m).unwrap();
        assert!((v - norm * norm).abs() < 1e-12);
    }

    #[test]
    fn splitting_a_point_keeps_the_objective() {
        let model = KidScoreModel::default();
        let d = kid_draws();
        let p = AttackProblem::Bayes { model: &model, draws: &d };
        let one = WeightedEmpiricalMeasure::from_rows(vec![vec![1.0, 0.4, 0.9]], Some(vec![3.0])).unwrap();
        let two = WeightedEmpiricalMeasure::from_rows(vec![vec![1.0, 0.4, 0.9]; 2], Some(vec![1.5, 1.5])).unwrap();
        let a = objective_gradients(&p, ObjectiveMode::Fd, None, &one).unwrap();
        let b = objective_gradients(&p, ObjectiveMode::Fd, None, &two).unwrap();
        assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1.0));
        assert!((a.grad_w[0] - b.grad_w[1]).abs() <= 1e-12 * a.grad_w[0].abs().max(1.0));
    }

    #[test]
    fn gradient_vanishes_at_the_draw_optimum() {
        // Gaussian location: optimum has 1 + W = d / tr(cov) and sum wz = (1 + W) mean.
        let d = draws(vec![vec![0.1, 0.4], vec![0.5, -0.2], vec![-0.3, 0.3], vec![0.2, 0.1]]);
        let mean = d.mean();
        let spread: f64 = d
            .rows()
            .iter()
            .map(|t| t.iter().zip(&mean).map(|(a, b)| (a - b) * a).sum::<f64>())
            .sum::<f64>()
            / 4.0;
        let total = 2.0 / spread - 1.0;
        let z: Vec<f64> = mean.iter().map(|m| (1.0 + total) * m / total).collect();
        let model = GaussianMeanLocation::new(2);
        let m = WeightedEmpiricalMeasure::from_rows(vec![z], Some(vec![total])).unwrap();
        let p = AttackProblem::Bayes { model: &model, draws: &d };
        let g = objective_gradients(&p, ObjectiveMode::Fd, None, &m).unwrap();
        assert!(g.grad_w[0].abs() < 1e-10, "{:?}", g.grad_w);
        assert!(g.grad_z[0].iter().all(|v| v.abs() < 1e-10), "{:?}", g.grad_z);
    }

    #[test]
    fn frozen_coordinates_survive_the_run() {
        let model = KidScoreModel::default();
        let d = kid_draws();
        let p = AttackProblem::Bayes { model: &model, draws: &d };
        let out = run_attack(&p, &config(ObjectiveMode::Sfd), None, None).unwrap();
        assert!(out.measure.points().iter().all(|z| z.coords()[0] == 1.0));
        assert_eq!(out.measure.len(), 4);
    }

    #[test]
    fn equal_seeds_give_identical_traces() {
        let model = KidScoreModel::default();
        let d = kid_draws();
        let target = kid_measure();
        let p = AttackProblem::Bayes { model: &model, draws: &d };
        let a = run_attack(&p, &config(ObjectiveMode::Sfd), Some(&target), None).unwrap();
        let b = run_attack(&p, &config(ObjectiveMode::Sfd), Some(&target), None).unwrap();
        assert_eq!(a.trace.to_csv(), b.trace.to_csv());
        let mut other = config(ObjectiveMode::Sfd);
        other.seed = 6;
        let c = run_attack(&p, &other, Some(&target), None).unwrap();
        assert_ne!(a.trace.to_csv(), c.trace.to_csv());
    }

    #[test]
    fn checkpoints_cover_start_interval_and_end() {
        let model = GaussianMeanLocation::new(1);
        let d = draws(vec![vec![0.1], vec![0.3], vec![-0.2]]);
        let p = AttackProblem::Bayes { model: &model, draws: &d };
        let mut cfg = config(ObjectiveMode::Fd);
        cfg.iters = 25;
        let out = run_attack(&p, &cfg, None, None).unwrap();
        let its: Vec<usize> = out.trace.checkpoints.iter().map(|c| c.iteration).collect();
        assert_eq!(its, vec![0, 10, 20, 25]);
        let csv = out.trace.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("iteration,objective,total_mass,mean_c0,var_c0,sum_c0,gram_c0_c0\n"));
    }

    #[test]
    fn error_columns_follow_target() {
        let model = KidScoreModel::default();
        let d = kid_draws();
        let target = kid_measure();
        let p = AttackProblem::Bayes { model: &model, draws: &d };
        let out = run_attack(&p, &config(ObjectiveMode::Fd), Some(&target), None).unwrap();
        let csv = out.trace.to_csv();
        let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
        assert!(header.contains(&"relerr_total_mass"));
        assert!(header.contains(&"relerr_var_kid_score"));
        assert!(!header.iter().any(|h| h.contains("mean_intercept")));
        let widths: Vec<usize> = csv.lines().map(|l| l.split(',').count()).collect();
        assert!(widths.iter().all(|&w| w == header.len()));
    }

    #[test]
    fn nonbayes_attack_reduces_the_gradient_norm() {
        let model = SquaredErrorLoss::new(FeatureMap::IdentityWithIntercept, 1, Regularizer::Ridge { lambda: 0.5 });
        let theta = [0.8, -0.6];
        let p = AttackProblem::NonBayes { model: &model, theta_star: &theta };
        let mut cfg = config(ObjectiveMode::Nonbayes);
        cfg.iters = 500;
        cfg.lr_w = 0.02;
        cfg.lr_z = 0.02;
        let out = run_attack(&p, &cfg, None, None).unwrap();
        let first = out.trace.checkpoints[0].objective;
        let last = out.trace.last().objective;
        assert!(last < 1e-2 * first, "{first} -> {last}");
    }

    #[test]
    fn penalty_is_added() {
        let model = GaussianMeanLocation::new(1);
        let d = draws(vec![vec![0.1], vec![0.3]]);
        let p = AttackProblem::Bayes { model: &model, draws: &d };
        let mut cfg = config(ObjectiveMode::Fd);
        cfg.iters = 1;
        let plain = run_attack(&p, &cfg, None, None).unwrap();
        let pen = L2Penalty { weights: 1.0, points: 0.0 };
        let penalised = run_attack(&p, &cfg, None, Some(&pen)).unwrap();
        let start = plain.trace.checkpoints[0].objective;
        // unit initial weights
        assert!((penalised.trace.checkpoints[0].objective - start - 4.0).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut adam = AdamState::new(3, AdamHyper::default());
        let mut p = vec![1.0, 1.0, 1.0];
        adam.update(&mut p, &[2.0, -0.5, 4.0], &[(1, 0.1), (2, 0.01)]).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] - 1.01).abs() < 1e-7);
        assert!((p[2] - 0.99).abs() < 1e-7);
        assert_eq!(adam.step(), 1);
        assert!(adam.update(&mut p, &[1.0; 3], &[(2, 0.1)]).is_err());
    }

    #[test]
    fn rejects_bad_configuration() {
        let mut cfg = config(ObjectiveMode::Sfd);
        cfg.pseudo_points = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
        let mut cfg = config(ObjectiveMode::Sfd);
        cfg.adam.beta2 = 1.0;
        assert!(cfg.validate().is_err());

        let model = GaussianMeanLocation::new(1);
        let d = draws(vec![vec![0.1]]);
        let p = AttackProblem::Bayes { model: &model, draws: &d };
        assert!(run_attack(&p, &config(ObjectiveMode::Nonbayes), None, None).is_err());
        let m = WeightedEmpiricalMeasure::from_rows(vec![vec![0.0]], None).unwrap();
        assert!(objective_gradients(&p, ObjectiveMode::Sfd, None, &m).is_err());
    }

    #[test]
    fn initial_responses_follow_the_prediction() {
        let model = KidScoreModel::default();
        let d = draws(vec![vec![0.0, 1.0, 1e-9]]);
        let p = AttackProblem::Bayes { model: &model, draws: &d };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = initialize_pseudo(&p, &config(ObjectiveMode::Sfd), &mut rng).unwrap();
        for z in m.points() {
            let z = z.coords();
            assert_eq!(z[0], 1.0);
            assert!((z[2] - z[1]).abs() < 1e-7);
        }
        assert!(m.weights().iter().all(|&w| w == 1.0));
    }
}
