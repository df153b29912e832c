//! Fisher, sliced Fisher and gradient-norm objectives, and the model-induced
//! kernels whose MMD they equal.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::measures::WeightedEmpiricalMeasure;
use crate::models::{LikelihoodModel, LossModel};
use crate::numeric::{axpy, dot, mean_and_std_error, norm_sq, pairwise_sum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawSource {
    Exact,
    Rwm,
    File,
}

/// `T` posterior parameter draws, one row per draw.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraws {
    draws: Vec<Vec<f64>>,
    names: Vec<String>,
    source: DrawSource,
}

impl PosteriorDraws {
    pub fn new(draws: Vec<Vec<f64>>, names: Vec<String>, source: DrawSource) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Empty("posterior draws"));
        }
        let d = draws[0].len();
        if d == 0 {
            return Err(Error::Empty("posterior draw"));
        }
        for row in &draws {
            ensure_len("posterior draw", d, row.len())?;
            ensure_finite("posterior draw", row)?;
        }
        let names = if names.is_empty() {
            (0..d).map(|i| format!("theta{i}")).collect()
        } else {
            ensure_len("parameter names", d, names.len())?;
            names
        };
        Ok(PosteriorDraws { draws, names, source })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.draws
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn source(&self) -> DrawSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.draws[0].len()
    }

    pub fn mean(&self) -> Vec<f64> {
        let t = self.len() as f64;
        crate::numeric::pairwise_sum_rows(&self.draws, self.dim())
            .into_iter()
            .map(|s| s / t)
            .collect()
    }

    /// Checks every draw against the model's parameter domain.
    pub fn check_against(&self, model: &dyn LikelihoodModel) -> Result<()> {
        ensure_len("posterior draw dimension", model.param_dim(), self.dim())?;
        for (t, theta) in self.draws.iter().enumerate() {
            model
                .check_param(theta)
                .map_err(|e| Error::Domain(format!("draw {t}: {e}")))?;
        }
        Ok(())
    }
}

/// Standard normal slicing directions `v_{tl}`, `L` per posterior draw.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceSet {
    vectors: Vec<f64>,
    draws: usize,
    per_draw: usize,
    dim: usize,
    seed: Option<u64>,
}

impl SliceSet {
    pub fn standard_normal(draws: usize, per_draw: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Self::from_rng(&mut rng, draws, per_draw, dim);
        s.seed = Some(seed);
        s
    }

    /// Draws from an advancing stream; successive calls give fresh slices.
    pub fn from_rng<R: Rng>(rng: &mut R, draws: usize, per_draw: usize, dim: usize) -> Self {
        let vectors = (0..draws * per_draw * dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        SliceSet {
            vectors,
            draws,
            per_draw,
            dim,
            seed: None,
        }
    }

    /// Builds a slice set from explicit vectors, laid out `[t][l][i]`.
    pub fn from_vectors(vectors: Vec<f64>, draws: usize, per_draw: usize, dim: usize) -> Result<Self> {
        ensure_len("slice vectors", draws * per_draw * dim, vectors.len())?;
        if per_draw == 0 {
            return Err(Error::Empty("slices per draw"));
        }
        Ok(SliceSet {
            vectors,
            draws,
            per_draw,
            dim,
            seed: None,
        })
    }

    pub fn get(&self, t: usize, l: usize) -> &[f64] {
        let start = (t * self.per_draw + l) * self.dim;
        &self.vectors[start..start + self.dim]
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn per_draw(&self) -> usize {
        self.per_draw
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub(crate) fn check_shape(&self, draws: usize, dim: usize) -> Result<()> {
        ensure_len("slice draw count", draws, self.draws)?;
        ensure_len("slice dimension", dim, self.dim)?;
        if self.per_draw == 0 {
            return Err(Error::Empty("slices per draw"));
        }
        Ok(())
    }
}

/// Monte Carlo estimate of an objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEstimate {
    pub value: f64,
    /// Standard error over posterior draws.
    pub std_error: f64,
    /// Standard error of the sliced curvature term conditional on the draws
    /// (sliced objective only).
    pub slice_std_error: Option<f64>,
    /// True when an additive constant independent of `(w, Z)` was dropped.
    pub constant_omitted: bool,
}

impl DivergenceEstimate {
    fn from_per_draw(values: &[f64], constant_omitted: bool) -> Self {
        let (value, std_error) = mean_and_std_error(values);
        DivergenceEstimate {
            value,
            std_error,
            slice_std_error: None,
            constant_omitted,
        }
    }
}

fn check_measure(model_dim: usize, measure: &WeightedEmpiricalMeasure) -> Result<()> {
    ensure_len("data point dimension", model_dim, measure.dim())
}

/// `grad log pi_0(theta) + sum_m w_m grad log l(theta, z_m)` without validation.
pub(crate) fn posterior_score_into(
    model: &dyn LikelihoodModel,
    measure: &WeightedEmpiricalMeasure,
    theta: &[f64],
    out: &mut [f64],
    scratch: &mut [f64],
) {
    out.fill(0.0);
    model.prior().add_score(theta, 1.0, out);
    for (w, z) in measure.iter() {
        model.eval_score(theta, z, scratch);
        axpy(w, scratch, out);
    }
}

/// Score of the weighted pseudo-posterior `pi_{w,Z}` at `theta`.
pub fn weighted_posterior_score(
    model: &dyn LikelihoodModel,
    measure: &WeightedEmpiricalMeasure,
    theta: &[f64],
) -> Result<Vec<f64>> {
    model.check_param(theta)?;
    check_measure(model.layout().dim, measure)?;
    let d = model.param_dim();
    let mut out = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    posterior_score_into(model, measure, theta, &mut out, &mut scratch);
    Ok(out)
}

/// `(1/2T) sum_t ||score_target(theta_t) - score_recon(theta_t)||^2`.
/// Needs the target measure, so it is a test-side oracle only.
pub fn fd_direct(
    model: &dyn LikelihoodModel,
    draws: &PosteriorDraws,
    target: &WeightedEmpiricalMeasure,
    recon: &WeightedEmpiricalMeasure,
) -> Result<DivergenceEstimate> {
    draws.check_against(model)?;
    check_measure(model.layout().dim, target)?;
    check_measure(model.layout().dim, recon)?;
    let d = model.param_dim();
    let mut st = vec![0.0; d];
    let mut sr = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let per_draw: Vec<f64> = draws
        .rows()
        .iter()
        .map(|theta| {
            posterior_score_into(model, target, theta, &mut st, &mut scratch);
            posterior_score_into(model, recon, theta, &mut sr, &mut scratch);
            0.5 * st.iter().zip(&sr).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .collect();
    Ok(DivergenceEstimate::from_per_draw(&per_draw, false))
}

/// `Tr H_{w,Z}(theta)` of the pseudo-posterior log density.
fn posterior_trace(model: &dyn LikelihoodModel, measure: &WeightedEmpiricalMeasure, theta: &[f64]) -> f64 {
    let mut tr = model.prior().trace(theta);
    for (w, z) in measure.iter() {
        tr += w * model.eval_hessian_trace(theta, z);
    }
    tr
}

fn posterior_quad(
    model: &dyn LikelihoodModel,
    measure: &WeightedEmpiricalMeasure,
    theta: &[f64],
    v: &[f64],
) -> f64 {
    let mut q = model.prior().quad(theta, v);
    for (w, z) in measure.iter() {
        q += w * model.eval_hessian_quad(theta, z, v);
    }
    q
}

/// Integration-by-parts Fisher objective:
/// `(1/T) sum_t Tr H_{w,Z}(theta_t) + (1/2T) sum_t ||S_{w,Z}(theta_t)||^2`,
/// equal to the Fisher divergence minus a constant.
pub fn fd_ibp_objective(
    model: &dyn LikelihoodModel,
    draws: &PosteriorDraws,
    recon: &WeightedEmpiricalMeasure,
) -> Result<DivergenceEstimate> {
    draws.check_against(model)?;
    check_measure(model.layout().dim, recon)?;
    let d = model.param_dim();
    let mut s = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let per_draw: Vec<f64> = draws
        .rows()
        .iter()
        .map(|theta| {
            posterior_score_into(model, recon, theta, &mut s, &mut scratch);
            posterior_trace(model, recon, theta) + 0.5 * norm_sq(&s)
        })
        .collect();
    Ok(DivergenceEstimate::from_per_draw(&per_draw, true))
}

/// Sliced objective:
/// `(1/TL) sum_{t,l} v_tl^T H_{w,Z}(theta_t) v_tl + (1/2T) sum_t ||S_{w,Z}(theta_t)||^2`,
/// evaluated through Hessian quadratic forms only.
pub fn sfd_objective(
    model: &dyn LikelihoodModel,
    draws: &PosteriorDraws,
    slices: &SliceSet,
    recon: &WeightedEmpiricalMeasure,
) -> Result<DivergenceEstimate> {
    draws.check_against(model)?;
    check_measure(model.layout().dim, recon)?;
    let d = model.param_dim();
    slices.check_shape(draws.len(), d)?;
    let per = slices.per_draw();
    let mut s = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut quads = vec![0.0; per];
    let mut per_draw = Vec::with_capacity(draws.len());
    let mut slice_var = Vec::with_capacity(draws.len());
    for (t, theta) in draws.rows().iter().enumerate() {
        for (l, q) in quads.iter_mut().enumerate() {
            *q = posterior_quad(model, recon, theta, slices.get(t, l));
        }
        let (qmean, qse) = mean_and_std_error(&quads);
        // qse^2 = var_l / L
        slice_var.push(qse * qse);
        posterior_score_into(model, recon, theta, &mut s, &mut scratch);
        per_draw.push(qmean + 0.5 * norm_sq(&s));
    }
    let mut est = DivergenceEstimate::from_per_draw(&per_draw, true);
    est.slice_std_error = Some(pairwise_sum(&slice_var).sqrt() / draws.len() as f64);
    Ok(est)
}

/// Kernel induced by a model: the score feature map averaged over posterior
/// draws (Bayesian) or the loss-gradient feature map at released parameters.
#[derive(Clone, Copy)]
pub enum ModelKernel<'a> {
    Bayes {
        model: &'a dyn LikelihoodModel,
        draws: &'a PosteriorDraws,
    },
    NonBayes {
        model: &'a dyn LossModel,
        theta_star: &'a [f64],
    },
}

impl ModelKernel<'_> {
    fn data_dim(&self) -> usize {
        match self {
            ModelKernel::Bayes { model, .. } => model.layout().dim,
            ModelKernel::NonBayes { model, .. } => model.layout().dim,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ModelKernel::Bayes { model, draws } => draws.check_against(*model),
            ModelKernel::NonBayes { model, theta_star } => {
                ensure_len("released parameter", model.param_dim(), theta_star.len())?;
                ensure_finite("released parameter", theta_star)
            }
        }
    }

    /// Feature vector of `x`: concatenated per-draw scores, or the loss gradient.
    fn features(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ModelKernel::Bayes { model, draws } => {
                let d = model.param_dim();
                let mut out = vec![0.0; d * draws.len()];
                for (theta, chunk) in draws.rows().iter().zip(out.chunks_mut(d)) {
                    model.eval_score(theta, x, chunk);
                }
                out
            }
            ModelKernel::NonBayes { model, theta_star } => {
                let mut out = vec![0.0; model.param_dim()];
                model.eval_grad(theta_star, x, &mut out);
                out
            }
        }
    }

    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            ModelKernel::Bayes { model, draws } => {
                let d = model.param_dim();
                let per_draw: Vec<f64> = a.chunks(d).zip(b.chunks(d)).map(|(u, v)| dot(u, v)).collect();
                pairwise_sum(&per_draw) / draws.len() as f64
            }
            ModelKernel::NonBayes { .. } => dot(a, b),
        }
    }
}

pub fn model_kernel(kernel: &ModelKernel<'_>, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    kernel.validate()?;
    ensure_len("data point dimension", kernel.data_dim(), x.len())?;
    ensure_len("data point dimension", kernel.data_dim(), x_prime.len())?;
    Ok(kernel.inner(&kernel.features(x), &kernel.features(x_prime)))
}

/// Weighted double sum `sum_ij a_i b_j k(p_i, q_j)` in a fixed order.
fn cross_term(kernel: &ModelKernel<'_>, fa: &[Vec<f64>], wa: &[f64], fb: &[Vec<f64>], wb: &[f64]) -> f64 {
    let terms: Vec<f64> = fa
        .iter()
        .zip(wa)
        .flat_map(|(u, &a)| fb.iter().zip(wb).map(move |(v, &b)| a * b * kernel.inner(u, v)))
        .collect();
    pairwise_sum(&terms)
}

/// Squared MMD between two un-normalised weighted measures. Rounding can make
/// the result slightly negative; values within `-1e-9` of zero (relative to
/// the magnitude of the terms) are reported as zero.
pub fn mmd_squared(
    kernel: &ModelKernel<'_>,
    a: &WeightedEmpiricalMeasure,
    b: &WeightedEmpiricalMeasure,
) -> Result<f64> {
    kernel.validate()?;
    ensure_len("data point dimension", kernel.data_dim(), a.dim())?;
    ensure_len("data point dimension", kernel.data_dim(), b.dim())?;
    let fa: Vec<Vec<f64>> = a.points().iter().map(|p| kernel.features(p.coords())).collect();
    let fb: Vec<Vec<f64>> = b.points().iter().map(|p| kernel.features(p.coords())).collect();
    let aa = cross_term(kernel, &fa, a.weights(), &fa, a.weights());
    let bb = cross_term(kernel, &fb, b.weights(), &fb, b.weights());
    let ab = cross_term(kernel, &fa, a.weights(), &fb, b.weights());
    let value = aa + bb - 2.0 * ab;
    let scale = aa.abs() + bb.abs() + 2.0 * ab.abs();
    if value < 0.0 && value >= -1e-9 * scale.max(1.0) {
        return Ok(0.0);
    }
    Ok(value)
}

/// `||P||_H^2` diagonal form `sum_n w_n k(x_n, x_n)`, the quantity that grows
/// without bound as data points are added.
pub fn diagonal_norm_sq(kernel: &ModelKernel<'_>, measure: &WeightedEmpiricalMeasure) -> Result<f64> {
    kernel.validate()?;
    ensure_len("data point dimension", kernel.data_dim(), measure.dim())?;
    let terms: Vec<f64> = measure
        .iter()
        .map(|(w, x)| {
            let f = kernel.features(x);
            w * kernel.inner(&f, &f)
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

/// `sum_m w_m grad_theta l(theta*, z_m)`
fn loss_gradient_sum(model: &dyn LossModel, theta_star: &[f64], measure: &WeightedEmpiricalMeasure) -> Vec<f64> {
    let d = model.param_dim();
    let mut out = vec![0.0; d];
    let mut g = vec![0.0; d];
    for (w, z) in measure.iter() {
        model.eval_grad(theta_star, z, &mut g);
        axpy(w, &g, &mut out);
    }
    out
}

fn check_loss_inputs(model: &dyn LossModel, theta_star: &[f64], measure: &WeightedEmpiricalMeasure) -> Result<()> {
    ensure_len("released parameter", model.param_dim(), theta_star.len())?;
    ensure_finite("released parameter", theta_star)?;
    check_measure(model.layout().dim, measure)
}

/// `||grad R(theta*) + sum_m w_m grad_theta l(theta*, z_m)||`
pub fn nonbayes_objective(
    model: &dyn LossModel,
    theta_star: &[f64],
    recon: &WeightedEmpiricalMeasure,
) -> Result<f64> {
    check_loss_inputs(model, theta_star, recon)?;
    let mut g = loss_gradient_sum(model, theta_star, recon);
    model.regularizer().add_grad(theta_star, &mut g);
    Ok(norm_sq(&g).sqrt())
}

/// `||grad L(theta*, X) - grad L(theta*, w, Z)||`, the regulariser cancelling.
pub fn gradient_gap_norm(
    model: &dyn LossModel,
    theta_star: &[f64],
    target: &WeightedEmpiricalMeasure,
    recon: &WeightedEmpiricalMeasure,
) -> Result<f64> {
    check_loss_inputs(model, theta_star, target)?;
    check_loss_inputs(model, theta_star, recon)?;
    let gx = loss_gradient_sum(model, theta_star, target);
    let gz = loss_gradient_sum(model, theta_star, recon);
    Ok(gx.iter().zip(&gz).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{FeatureMap, GaussianMeanLocation, KidScoreModel, Regularizer, SquaredErrorLoss};

    fn measure(rows: &[&[f64]], w: Option<Vec<f64>>) -> WeightedEmpiricalMeasure {
        WeightedEmpiricalMeasure::from_rows(rows.iter().map(|r| r.to_vec()).collect(), w).unwrap()
    }

    fn draws(rows: Vec<Vec<f64>>) -> PosteriorDraws {
        PosteriorDraws::new(rows, vec![], DrawSource::Exact).unwrap()
    }

    #[test]
    fn posterior_score_examples() {
        let m = GaussianMeanLocation::new(2);
        let x = measure(&[&[1.0, 2.0], &[-0.5, 4.0]], None);
        assert_eq!(weighted_posterior_score(&m, &x, &[0.0, 0.0]).unwrap(), vec![0.5, 6.0]);
        // general theta: -(S_w + 1) theta + sum w z
        let s = weighted_posterior_score(&m, &x, &[1.0, -1.0]).unwrap();
        assert_eq!(s, vec![-3.0 + 0.5, 3.0 + 6.0]);

        let zero = measure(&[&[1.0, 2.0]], Some(vec![0.0]));
        assert_eq!(weighted_posterior_score(&m, &zero, &[0.3, 0.4]).unwrap(), vec![-0.3, -0.4]);

        let doubled = measure(&[&[1.5, -2.0]], Some(vec![2.0]));
        let split = measure(&[&[1.5, -2.0], &[1.5, -2.0]], None);
        let a = weighted_posterior_score(&m, &doubled, &[0.2, 0.1]).unwrap();
        let b = weighted_posterior_score(&m, &split, &[0.2, 0.1]).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-14));
    }

    #[test]
    fn fd_direct_examples() {
        let m = GaussianMeanLocation::new(1);
        let x = measure(&[&[0.0], &[2.0]], None);
        let dr = draws(vec![vec![0.1], vec![0.7], vec![1.3]]);
        assert_eq!(fd_direct(&m, &dr, &x, &x).unwrap().value, 0.0);
        let suff = measure(&[&[1.0]], Some(vec![2.0]));
        assert_eq!(fd_direct(&m, &dr, &x, &suff).unwrap().value, 0.0);
        // gap theta - 1 per draw
        let half = measure(&[&[1.0]], None);
        let v = fd_direct(&m, &dr, &x, &half).unwrap().value;
        let expect = (0.5 * 0.81 + 0.5 * 0.09 + 0.5 * 0.09) / 3.0;
        assert!((v - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_objectives_reduce_to_prior() {
        let m = GaussianMeanLocation::new(2);
        let z = measure(&[&[5.0, -1.0]], Some(vec![0.0]));
        let dr = draws(vec![vec![1.0, 1.0], vec![0.0, 2.0]]);
        // prior only: trace -2, score -theta
        let est = fd_ibp_objective(&m, &dr, &z).unwrap();
        assert!((est.value - (-2.0 + 0.5 * (2.0 + 4.0) / 2.0)).abs() < 1e-15);
        assert!(est.constant_omitted);
        let slices = SliceSet::standard_normal(2, 3, 2, 5);
        let sfd = sfd_objective(&m, &dr, &slices, &z).unwrap();
        let mut q = 0.0;
        for t in 0..2 {
            for l in 0..3 {
                q -= norm_sq(slices.get(t, l));
            }
        }
        assert!((sfd.value - (q / 6.0 + 1.5)).abs() < 1e-14);
    }

    #[test]
    fn unit_slices_reproduce_trace() {
        let m = KidScoreModel::default();
        let z = measure(&[&[1.0, 0.3, 0.5], &[1.0, -1.0, 0.1]], Some(vec![1.5, 0.7]));
        let dr = draws(vec![vec![0.2, 0.5, 0.9], vec![-0.1, 0.4, 1.2]]);
        let d = 3;
        let mut vecs = Vec::new();
        for _ in 0..2 {
            for i in 0..d {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                vecs.extend(e);
            }
        }
        let slices = SliceSet::from_vectors(vecs, 2, d, d).unwrap();
        let sfd = sfd_objective(&m, &dr, &slices, &z).unwrap();
        let fd = fd_ibp_objective(&m, &dr, &z).unwrap();
        // unit-vector slices sum to the trace; sfd averages over d of them
        let mut s = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        let mut expect = 0.0;
        for theta in dr.rows() {
            posterior_score_into(&m, &z, theta, &mut s, &mut scratch);
            expect += posterior_trace(&m, &z, theta) / d as f64 + 0.5 * norm_sq(&s);
        }
        expect /= 2.0;
        assert!((sfd.value - expect).abs() < 1e-12);
        assert!(fd.value.is_finite());
    }

    #[test]
    fn slice_shape_mismatch() {
        let m = GaussianMeanLocation::new(2);
        let z = measure(&[&[5.0, -1.0]], None);
        let dr = draws(vec![vec![1.0, 1.0]]);
        let slices = SliceSet::standard_normal(2, 3, 2, 5);
        assert!(sfd_objective(&m, &dr, &slices, &z).is_err());
    }

    #[test]
    fn domain_violation_in_draws() {
        let m = KidScoreModel::default();
        let z = measure(&[&[1.0, 0.0, 0.0]], None);
        let dr = draws(vec![vec![0.0, 0.0, -1.0]]);
        assert!(matches!(fd_ibp_objective(&m, &dr, &z), Err(Error::Domain(_))));
    }

    #[test]
    fn gaussian_kernel_matches_rearrangement() {
        let m = GaussianMeanLocation::new(2);
        let dr = draws(vec![vec![0.3, -0.2], vec![1.1, 0.4], vec![-0.7, 0.9]]);
        let k = ModelKernel::Bayes { model: &m, draws: &dr };
        let x = [1.0, 2.0];
        let xp = [-0.5, 0.25];
        let mu = dr.mean();
        let mean_sq = dr.rows().iter().map(|t| norm_sq(t)).sum::<f64>() / 3.0;
        let expect = dot(&x, &xp) - dot(&[x[0] + xp[0], x[1] + xp[1]], &mu) + mean_sq;
        let got = model_kernel(&k, &x, &xp).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} {expect}");
    }

    #[test]
    fn squared_error_kernel_residual_factor() {
        let m = SquaredErrorLoss::new(FeatureMap::IdentityWithIntercept, 1, Regularizer::None);
        let theta = [0.5, 2.0];
        let k = ModelKernel::NonBayes { model: &m, theta_star: &theta };
        // x = 1, y = 2.5 has zero residual
        assert_eq!(model_kernel(&k, &[1.0, 2.5], &[3.0, 0.0]).unwrap(), 0.0);
        let (x, y, xp, yp) = (2.0, 1.0, -1.0, 0.5);
        let r = 0.5 + 2.0 * x - y;
        let rp = 0.5 + 2.0 * xp - yp;
        let expect = 4.0 * (1.0 + x * xp) * r * rp;
        assert!((model_kernel(&k, &[x, y], &[xp, yp]).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn mmd_of_identical_measures_is_zero() {
        let m = KidScoreModel::default();
        let dr = draws(vec![vec![0.2, 0.5, 0.9], vec![-0.1, 0.4, 1.2]]);
        let a = measure(&[&[1.0, 0.3, 0.5], &[1.0, -1.0, 0.1]], Some(vec![1.5, 0.7]));
        let k = ModelKernel::Bayes { model: &m, draws: &dr };
        assert!(mmd_squared(&k, &a, &a).unwrap().abs() < 1e-10);
    }

    #[test]
    fn nonbayes_objective_cases() {
        let m = SquaredErrorLoss::new(FeatureMap::Identity, 1, Regularizer::Ridge { lambda: 1.0 });
        // theta* = 1: ridge grad 2; point (1, 2) grad 2 * 1 * (1 - 2) = -2
        let z = measure(&[&[1.0, 2.0]], None);
        assert_eq!(nonbayes_objective(&m, &[1.0], &z).unwrap(), 0.0);
        let plain = SquaredErrorLoss::new(FeatureMap::Identity, 1, Regularizer::None);
        let zero = measure(&[&[3.0, -1.0]], Some(vec![0.0]));
        assert_eq!(nonbayes_objective(&plain, &[0.7], &zero).unwrap(), 0.0);
    }
}
