//! Hermetic verification suite. Every fixture is generated internally from
//! fixed seeds, so the CLI `verify` command and the acceptance test target run
//! identical checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};

use crate::attack::{run_attack, AttackConfig, AttackOutcome, AttackProblem, ObjectiveMode};
use crate::divergence::{
    diagonal_norm_sq, fd_direct, fd_ibp_objective, gradient_gap_norm, mmd_squared, sfd_objective,
    DrawSource, ModelKernel, PosteriorDraws, SliceSet,
};
use crate::error::Result;
use crate::measures::{DataPoint, WeightedEmpiricalMeasure};
use crate::models::{
    finite_difference_audit, loss_finite_difference_audit, BayesLinReg, FeatureMap, GaussianMeanLocation,
    KidScoreModel, LikelihoodModel, LogisticLoss, LossModel, Regularizer, SquaredErrorLoss,
};
use crate::numeric::{mean_and_std_error, pairwise_sum};
use crate::samplers::{exact_gaussian_mean_draws, rwm_draws, SamplerConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckResult { name, passed, detail }
    }

    /// `PASS <name>: <detail>` or `FAIL ...`
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub struct Check {
    pub name: &'static str,
    pub summary: &'static str,
    pub run: fn() -> Result<CheckResult>,
}

/// All checks in a fixed order.
pub fn checks() -> Vec<Check> {
    vec![
        Check { name: "fd_half_mmd", summary: "FD equals half the squared Bayes-kernel MMD", run: fd_half_mmd },
        Check { name: "gradient_gap_mmd", summary: "gradient gap norm equals the loss-gradient-kernel MMD", run: gradient_gap_mmd },
        Check { name: "sliced_matches_ibp", summary: "sliced objective agrees with the IBP objective", run: sliced_matches_ibp },
        Check { name: "ibp_constant", summary: "IBP objective plus constant equals direct FD and the closed form", run: ibp_constant },
        Check { name: "gaussian_recovery", summary: "sliced attack recovers count and sum of Gaussian data", run: gaussian_recovery },
        Check { name: "kidscore_recovery", summary: "sliced attack recovers five regression statistics", run: kidscore_recovery },
        Check { name: "objective_gradients", summary: "exact objective gradients match central differences", run: objective_gradient_check },
        Check { name: "norm_growth", summary: "diagonal kernel mass grows as points are appended", run: norm_growth },
        Check { name: "determinism", summary: "equal seeds give bitwise-identical traces", run: determinism },
        Check { name: "model_audits", summary: "analytic model derivatives match finite differences", run: model_audits },
    ]
}

/// Runs checks whose name contains `filter`. Errors are reported as failures.
pub fn run(filter: Option<&str>) -> Vec<CheckResult> {
    checks()
        .into_iter()
        .filter(|c| filter.map_or(true, |f| c.name.contains(f)))
        .map(|c| (c.run)().unwrap_or_else(|e| CheckResult::new(c.name, false, format!("error: {e}"))))
        .collect()
}

/// Runs the check called exactly `name`.
pub fn run_named(name: &str) -> Option<CheckResult> {
    checks()
        .into_iter()
        .find(|c| c.name == name)
        .map(|c| (c.run)().unwrap_or_else(|e| CheckResult::new(c.name, false, format!("error: {e}"))))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn normal_rows<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

fn random_weights<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(Uniform::new(0.2, 2.0))).collect()
}

fn draws_from(rows: Vec<Vec<f64>>) -> Result<PosteriorDraws> {
    PosteriorDraws::new(rows, Vec::new(), DrawSource::File)
}

/// Random Gaussian-location or linear-regression instance with unit-weight
/// data, weighted pseudo-data and arbitrary parameter draws.
fn random_bayes_instance<R: Rng>(
    rng: &mut R,
    i: usize,
) -> Result<(Box<dyn LikelihoodModel>, PosteriorDraws, WeightedEmpiricalMeasure, WeightedEmpiricalMeasure)> {
    let model: Box<dyn LikelihoodModel> = if i % 2 == 0 {
        Box::new(GaussianMeanLocation::new(rng.gen_range(1..=3)))
    } else {
        let q = rng.gen_range(1..=2);
        Box::new(BayesLinReg::new(FeatureMap::IdentityWithIntercept, q, 1.0))
    };
    let dim = model.layout().dim;
    let n = rng.gen_range(1..=10);
    let m = rng.gen_range(1..=10);
    let t = rng.gen_range(1..=200);
    let draws = draws_from(normal_rows(rng, t, model.param_dim()))?;
    let target = WeightedEmpiricalMeasure::from_rows(normal_rows(rng, n, dim), None)?;
    let w = random_weights(rng, m);
    let recon = WeightedEmpiricalMeasure::from_rows(normal_rows(rng, m, dim), Some(w))?;
    Ok((model, draws, target, recon))
}

fn fd_half_mmd() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let (model, draws, target, recon) = random_bayes_instance(&mut rng, i)?;
        let fd = fd_direct(model.as_ref(), &draws, &target, &recon)?.value;
        let kernel = ModelKernel::Bayes { model: model.as_ref(), draws: &draws };
        let mmd = mmd_squared(&kernel, &target, &recon)?;
        worst = worst.max(rel(0.5 * mmd, fd));
    }
    Ok(CheckResult::new("fd_half_mmd", worst <= 1e-9, format!("50 instances, max rel err {worst:.3e} (tol 1e-9)")))
}

fn gradient_gap_mmd() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let q = rng.gen_range(1..=2);
        let model: Box<dyn LossModel> = if i % 2 == 0 {
            Box::new(SquaredErrorLoss::new(FeatureMap::IdentityWithIntercept, q, Regularizer::Ridge { lambda: 0.1 }))
        } else {
            Box::new(LogisticLoss::new(FeatureMap::IdentityWithIntercept, q, Regularizer::None))
        };
        let dim = model.layout().dim;
        let theta: Vec<f64> = (0..model.param_dim()).map(|_| rng.sample(StandardNormal)).collect();
        let n = rng.gen_range(1..=10);
        let m = rng.gen_range(1..=10);
        let label = |rows: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            if i % 2 == 0 {
                return rows;
            }
            rows.into_iter()
                .map(|mut r| {
                    let y = r[dim - 1];
                    r[dim - 1] = if y >= 0.0 { 1.0 } else { -1.0 };
                    r
                })
                .collect()
        };
        let target = WeightedEmpiricalMeasure::from_rows(label(normal_rows(&mut rng, n, dim)), None)?;
        let w = random_weights(&mut rng, m);
        let recon = WeightedEmpiricalMeasure::from_rows(label(normal_rows(&mut rng, m, dim)), Some(w))?;
        let gap = gradient_gap_norm(model.as_ref(), &theta, &target, &recon)?;
        let kernel = ModelKernel::NonBayes { model: model.as_ref(), theta_star: &theta };
        let mmd = mmd_squared(&kernel, &target, &recon)?.sqrt();
        worst = worst.max(rel(mmd, gap));
    }
    Ok(CheckResult::new("gradient_gap_mmd", worst <= 1e-10, format!("50 instances, max rel err {worst:.3e} (tol 1e-10)")))
}

fn sliced_matches_ibp() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let data: Vec<DataPoint> = normal_rows(&mut rng, 20, 2)
        .into_iter()
        .map(|r| DataPoint::new(vec![r[0] + 1.0, r[1] - 0.5]))
        .collect::<Result<_>>()?;
    let model = GaussianMeanLocation::new(2);
    let draws = exact_gaussian_mean_draws(&data, 100, 304)?;
    let recon = WeightedEmpiricalMeasure::from_rows(normal_rows(&mut rng, 5, 2), Some(random_weights(&mut rng, 5)))?;
    let slices = SliceSet::standard_normal(100, 10_000, 2, 305);
    let fd = fd_ibp_objective(&model, &draws, &recon)?;
    let sfd = sfd_objective(&model, &draws, &slices, &recon)?;
    let se = sfd.slice_std_error.unwrap_or(0.0);
    let gap = (sfd.value - fd.value).abs();
    Ok(CheckResult::new(
        "sliced_matches_ibp",
        gap <= 3.0 * se,
        format!("sfd {:.6} ibp {:.6} |diff| {gap:.3e} <= 3 se {:.3e}", sfd.value, fd.value, 3.0 * se),
    ))
}

fn ibp_constant() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let xs: Vec<f64> = (0..10).map(|_| 0.5 + rng.sample::<f64, _>(StandardNormal)).collect();
    let data: Vec<DataPoint> = xs.iter().map(|&x| DataPoint::new(vec![x])).collect::<Result<_>>()?;
    let target = WeightedEmpiricalMeasure::new(data.clone(), None)?;
    let recon = WeightedEmpiricalMeasure::from_rows(vec![vec![0.3], vec![-0.2], vec![1.1]], Some(vec![2.0, 3.5, 1.5]))?;
    let model = GaussianMeanLocation::new(1);
    let draws = exact_gaussian_mean_draws(&data, 100_000, 405)?;

    let direct = fd_direct(&model, &draws, &target, &recon)?;
    let ibp = fd_ibp_objective(&model, &draws, &recon)?;
    // C = E ||S_X||^2 / 2 with S_X(theta) = sum x - (N + 1) theta.
    let n = xs.len() as f64;
    let sx = pairwise_sum(&xs);
    let c_terms: Vec<f64> = draws.rows().iter().map(|t| 0.5 * (sx - (n + 1.0) * t[0]).powi(2)).collect();
    let (c, c_se) = mean_and_std_error(&c_terms);
    let total = ibp.value + c;
    let se = (direct.std_error.powi(2) + ibp.std_error.powi(2) + c_se.powi(2)).sqrt();

    // Posterior N(mu, 1/(N+1)); FD = ((a - b mu)^2 + b^2 / (N+1)) / 2.
    let w: f64 = recon.weights().iter().sum();
    let swz: f64 = recon.iter().map(|(w, z)| w * z[0]).sum();
    let a = sx - swz;
    let b = n - w;
    let mu = sx / (n + 1.0);
    let closed = 0.5 * ((a - b * mu).powi(2) + b * b / (n + 1.0));

    let ok_direct = (total - direct.value).abs() <= 3.0 * se;
    let ok_closed = (total - closed).abs() <= 3.0 * se;
    Ok(CheckResult::new(
        "ibp_constant",
        ok_direct && ok_closed,
        format!(
            "ibp+C {total:.5} direct {:.5} closed form {closed:.5}, 3 se {:.3e}",
            direct.value,
            3.0 * se
        ),
    ))
}

/// Data, model and configuration of the Gaussian-location recovery run.
pub struct GaussianRecovery {
    pub data: Vec<DataPoint>,
    pub model: GaussianMeanLocation,
    pub draws: PosteriorDraws,
    pub config: AttackConfig,
}

pub fn gaussian_recovery_setup() -> Result<GaussianRecovery> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data = normal_rows(&mut rng, 20, 2)
        .into_iter()
        .map(|r| DataPoint::new(vec![1.0 + r[0], -2.0 + r[1]]))
        .collect::<Result<Vec<_>>>()?;
    let draws = exact_gaussian_mean_draws(&data, 1000, 7)?;
    let config = AttackConfig {
        objective: ObjectiveMode::Sfd,
        pseudo_points: 5,
        iters: 4000,
        lr_w: 0.05,
        lr_z: 0.05,
        slices: 10,
        seed: 7,
        init: Default::default(),
        trace_every: 50,
        adam: Default::default(),
    };
    Ok(GaussianRecovery {
        data,
        model: GaussianMeanLocation::new(2),
        draws,
        config,
    })
}

pub fn gaussian_recovery_run(setup: &GaussianRecovery) -> Result<AttackOutcome> {
    let target = WeightedEmpiricalMeasure::new(setup.data.clone(), None)?;
    let problem = AttackProblem::Bayes {
        model: &setup.model,
        draws: &setup.draws,
    };
    run_attack(&problem, &setup.config, Some(&target), None)
}

fn gaussian_recovery() -> Result<CheckResult> {
    let setup = gaussian_recovery_setup()?;
    let out = gaussian_recovery_run(&setup)?;
    let e = out.trace.last().errors.clone().expect("target supplied");
    let worst = e.first_moment.iter().fold(e.total_mass, |a, &b| a.max(b));
    let recon = &out.trace.last().stats;
    // Optimum of the slice-averaged objective given these draws.
    let d = setup.model.dim() as f64;
    let mean = setup.draws.mean();
    let spread: f64 = setup
        .draws
        .rows()
        .iter()
        .map(|t| t.iter().zip(&mean).map(|(a, b)| (a - b) * a).sum::<f64>())
        .sum::<f64>()
        / setup.draws.len() as f64;
    let draw_optimum = d / spread - 1.0;
    Ok(CheckResult::new(
        "gaussian_recovery",
        worst < 0.01,
        format!(
            "sum w {:.4} (target 20, rel err {:.3e}), sum wz rel err {:.3e}/{:.3e}; draw-implied optimum of sum w {:.4}",
            recon.total_mass, e.total_mass, e.first_moment[0], e.first_moment[1], draw_optimum
        ),
    ))
}

/// Synthetic child/mother score data: rows `(1, m, y)` with mother scores
/// drawn from N(100, 15^2) and rescaled to `m = (s - 85) / 15`, and
/// `y = 0.3 + 0.6 m + 0.8 eps`. The shift keeps every tracked mean away from
/// zero, where relative errors are ill-conditioned.
pub fn kidscore_dataset(n: usize, seed: u64) -> Result<Vec<DataPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let raw = 100.0 + 15.0 * rng.sample::<f64, _>(StandardNormal);
            let m = (raw - 85.0) / 15.0;
            let y = 0.3 + 0.6 * m + 0.8 * rng.sample::<f64, _>(StandardNormal);
            DataPoint::new(vec![1.0, m, y])
        })
        .collect()
}

pub struct KidscoreRecovery {
    pub data: Vec<DataPoint>,
    pub model: KidScoreModel,
    pub sampler: SamplerConfig,
    pub config: AttackConfig,
}

pub fn kidscore_setup() -> Result<KidscoreRecovery> {
    let data = kidscore_dataset(100, 11)?;
    let sampler = SamplerConfig {
        draws: 1000,
        burn_in: Some(5000),
        // near-independent draws
        thinning: 100,
        step_scale: 0.06,
        seed: 11,
        init: vec![0.0, 0.0, 1.0],
    };
    let config = AttackConfig {
        objective: ObjectiveMode::Sfd,
        pseudo_points: 50,
        iters: 8000,
        lr_w: 0.001,
        lr_z: 0.001,
        slices: 10,
        seed: 11,
        init: Default::default(),
        trace_every: 100,
        adam: Default::default(),
    };
    Ok(KidscoreRecovery {
        data,
        model: KidScoreModel::default(),
        sampler,
        config,
    })
}

pub fn kidscore_run(setup: &KidscoreRecovery) -> Result<(PosteriorDraws, AttackOutcome)> {
    let draws = rwm_draws(&setup.model, &setup.data, &setup.sampler)?.draws;
    let target = WeightedEmpiricalMeasure::new(setup.data.clone(), None)?;
    let problem = AttackProblem::Bayes {
        model: &setup.model,
        draws: &draws,
    };
    let out = run_attack(&problem, &setup.config, Some(&target), None)?;
    Ok((draws, out))
}

fn kidscore_recovery() -> Result<CheckResult> {
    let setup = kidscore_setup()?;
    let (_, out) = kidscore_run(&setup)?;
    let last = out.trace.last();
    let e = last.errors.clone().expect("target supplied");
    let worst = e.tracked_max();
    Ok(CheckResult::new(
        "kidscore_recovery",
        worst < 0.05,
        format!(
            "rel errs count {:.3e}, mother mean {:.3e} var {:.3e}, child mean {:.3e} var {:.3e} (tol 5e-2); plateau change {:.2e}",
            e.total_mass,
            e.x_mean[0],
            e.x_var[0],
            e.y_mean.unwrap_or(f64::NAN),
            e.y_var.unwrap_or(f64::NAN),
            out.trace.plateau_change()
        ),
    ))
}

/// Flattened `(w, Z_free)` vector and its objective value for central differences.
fn objective_value(problem: &AttackProblem<'_>, mode: ObjectiveMode, slices: Option<&SliceSet>, m: &WeightedEmpiricalMeasure) -> Result<f64> {
    Ok(crate::attack::objective_gradients(problem, mode, slices, m)?.value)
}

fn perturbed(m: &WeightedEmpiricalMeasure, free: &[usize], k: usize, delta: f64) -> Result<WeightedEmpiricalMeasure> {
    let mm = m.len();
    let mut w = m.weights().to_vec();
    let mut rows: Vec<Vec<f64>> = m.points().iter().map(|p| p.coords().to_vec()).collect();
    if k < mm {
        w[k] += delta;
    } else {
        let j = k - mm;
        rows[j / free.len()][free[j % free.len()]] += delta;
    }
    WeightedEmpiricalMeasure::from_rows(rows, Some(w))
}

/// Largest relative error `max |a - f| / max(||f||, 1)` over random states.
pub fn gradient_check_error(mode: ObjectiveMode, states: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..states {
        let kid = KidScoreModel::default();
        let reg = BayesLinReg::new(FeatureMap::Polynomial { degree: 2 }, 1, 1.0);
        let sq = SquaredErrorLoss::new(FeatureMap::IdentityWithIntercept, 2, Regularizer::Ridge { lambda: 0.3 });
        let lo = LogisticLoss::new(FeatureMap::IdentityWithIntercept, 1, Regularizer::Ridge { lambda: 0.1 });
        let theta_star: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let draws;
        let problem = match mode {
            ObjectiveMode::Nonbayes => {
                if i % 2 == 0 {
                    AttackProblem::NonBayes { model: &sq, theta_star: &theta_star }
                } else {
                    AttackProblem::NonBayes { model: &lo, theta_star: &theta_star[..2] }
                }
            }
            _ => {
                let model: &dyn LikelihoodModel = if i % 2 == 0 { &kid } else { &reg };
                let rows: Vec<Vec<f64>> = normal_rows(&mut rng, 5, model.param_dim())
                    .into_iter()
                    .map(|mut r| {
                        if i % 2 == 0 {
                            r[2] = 0.5 + r[2].abs();
                        }
                        r
                    })
                    .collect();
                draws = draws_from(rows)?;
                AttackProblem::Bayes { model, draws: &draws }
            }
        };
        let layout = problem.layout().clone();
        let free = layout.free_indices();
        let rows: Vec<Vec<f64>> = normal_rows(&mut rng, 3, layout.dim)
            .into_iter()
            .map(|mut r| {
                for f in &layout.frozen {
                    r[f.index] = f.value;
                }
                r
            })
            .collect();
        let m = WeightedEmpiricalMeasure::from_rows(rows, Some(random_weights(&mut rng, 3)))?;
        let slices = match (mode, &problem) {
            (ObjectiveMode::Sfd, AttackProblem::Bayes { model, draws }) => {
                Some(SliceSet::from_rng(&mut rng, draws.len(), 2, model.param_dim()))
            }
            _ => None,
        };
        let g = crate::attack::objective_gradients(&problem, mode, slices.as_ref(), &m)?;
        let analytic: Vec<f64> = g.grad_w.iter().chain(g.grad_z.iter().flatten()).copied().collect();
        let mut numeric = Vec::with_capacity(analytic.len());
        for k in 0..analytic.len() {
            let current = if k < m.len() {
                m.weights()[k]
            } else {
                let j = k - m.len();
                m.points()[j / free.len()].coords()[free[j % free.len()]]
            };
            let h = 1e-5 * current.abs().max(1.0);
            let up = objective_value(&problem, mode, slices.as_ref(), &perturbed(&m, &free, k, h)?)?;
            let down = objective_value(&problem, mode, slices.as_ref(), &perturbed(&m, &free, k, -h)?)?;
            numeric.push((up - down) / (2.0 * h));
        }
        let scale = numeric.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        let err = analytic.iter().zip(&numeric).map(|(a, f)| (a - f).abs()).fold(0.0, f64::max) / scale;
        worst = worst.max(err);
    }
    Ok(worst)
}

fn objective_gradient_check() -> Result<CheckResult> {
    let mut details = Vec::new();
    let mut passed = true;
    for (mode, name, seed) in [
        (ObjectiveMode::Fd, "fd", 701),
        (ObjectiveMode::Sfd, "sfd", 702),
        (ObjectiveMode::Nonbayes, "nonbayes", 703),
    ] {
        let err = gradient_check_error(mode, 100, seed)?;
        passed &= err < 1e-5;
        details.push(format!("{name} {err:.2e}"));
    }
    Ok(CheckResult::new(
        "objective_gradients",
        passed,
        format!("max rel err over 100 states: {} (tol 1e-5)", details.join(", ")),
    ))
}

fn norm_growth() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut failures = 0;
    for trial in 0..20 {
        let n = rng.gen_range(5..=15);
        let (model, draws, rows): (Box<dyn LikelihoodModel>, PosteriorDraws, Vec<Vec<f64>>) = if trial % 2 == 0 {
            let d = rng.gen_range(1..=3);
            let rows = normal_rows(&mut rng, n, d);
            let pts = rows.iter().map(|r| DataPoint::new(r.clone())).collect::<Result<Vec<_>>>()?;
            let draws = exact_gaussian_mean_draws(&pts, 200, rng.gen())?;
            (Box::new(GaussianMeanLocation::new(d)), draws, rows)
        } else {
            let draws = draws_from(normal_rows(&mut rng, 200, 2))?;
            (Box::new(BayesLinReg::new(FeatureMap::IdentityWithIntercept, 1, 1.0)), draws, normal_rows(&mut rng, n, 2))
        };
        let kernel = ModelKernel::Bayes { model: model.as_ref(), draws: &draws };
        let mut previous = 0.0;
        for k in 1..=n {
            let m = WeightedEmpiricalMeasure::from_rows(rows[..k].to_vec(), None)?;
            let current = diagonal_norm_sq(&kernel, &m)?;
            if current <= previous {
                failures += 1;
                break;
            }
            previous = current;
        }
    }
    Ok(CheckResult::new(
        "norm_growth",
        failures == 0,
        format!("{} of 20 trials strictly increasing", 20 - failures),
    ))
}

fn determinism() -> Result<CheckResult> {
    let setup = gaussian_recovery_setup()?;
    let a = gaussian_recovery_run(&setup)?.trace.to_csv();
    let b = gaussian_recovery_run(&gaussian_recovery_setup()?)?.trace.to_csv();
    let kid = kidscore_setup()?;
    let short = |seed_offset: u64| -> Result<String> {
        let mut s = kidscore_setup()?;
        s.config.iters = 50;
        s.config.trace_every = 5;
        s.sampler.seed += seed_offset;
        Ok(kidscore_run(&s)?.1.trace.to_csv())
    };
    let (c, d) = (short(0)?, short(0)?);
    let draws_a = rwm_draws(&kid.model, &kid.data, &kid.sampler)?.draws;
    let draws_b = rwm_draws(&kid.model, &kid.data, &kid.sampler)?.draws;
    let same_draws = draws_a
        .rows()
        .iter()
        .flatten()
        .zip(draws_b.rows().iter().flatten())
        .all(|(x, y)| x.to_bits() == y.to_bits());
    let passed = a == b && c == d && same_draws;
    Ok(CheckResult::new(
        "determinism",
        passed,
        format!(
            "gaussian trace {} bytes identical: {}, kidscore trace identical: {}, rwm draws identical: {}",
            a.len(),
            a == b,
            c == d,
            same_draws
        ),
    ))
}

fn model_audits() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let likelihoods: Vec<Box<dyn LikelihoodModel>> = vec![
        Box::new(GaussianMeanLocation::new(3)),
        Box::new(BayesLinReg::new(FeatureMap::Polynomial { degree: 3 }, 1, 1.0)),
        Box::new(BayesLinReg::new(FeatureMap::IdentityWithIntercept, 2, 2.0)),
        Box::new(KidScoreModel::default()),
    ];
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    for model in &likelihoods {
        for k in 0..20 {
            let mut theta: Vec<f64> = (0..model.param_dim()).map(|_| rng.sample(StandardNormal)).collect();
            if model.name() == "kidscore" {
                theta[2] = 0.5 + theta[2].abs();
            }
            let mut x: Vec<f64> = (0..model.layout().dim).map(|_| rng.sample(StandardNormal)).collect();
            for f in &model.layout().frozen {
                x[f.index] = f.value;
            }
            let r = finite_difference_audit(model.as_ref(), &theta, &DataPoint::new(x)?, k)?;
            worst = worst.max(r.max_error);
            if !r.passed {
                failed.push(model.name().to_string());
            }
        }
    }
    let losses: Vec<Box<dyn LossModel>> = vec![
        Box::new(SquaredErrorLoss::new(FeatureMap::Polynomial { degree: 2 }, 1, Regularizer::Ridge { lambda: 0.5 })),
        Box::new(LogisticLoss::new(FeatureMap::IdentityWithIntercept, 2, Regularizer::None)),
    ];
    for model in &losses {
        for _ in 0..20 {
            let theta: Vec<f64> = (0..model.param_dim()).map(|_| rng.sample(StandardNormal)).collect();
            let x: Vec<f64> = (0..model.layout().dim).map(|_| rng.sample(StandardNormal)).collect();
            let r = loss_finite_difference_audit(model.as_ref(), &theta, &DataPoint::new(x)?)?;
            worst = worst.max(r.max_error);
            if !r.passed {
                failed.push(model.name().to_string());
            }
        }
    }
    failed.dedup();
    Ok(CheckResult::new(
        "model_audits",
        failed.is_empty(),
        if failed.is_empty() {
            format!("6 models x 20 points, max rel err {worst:.2e}")
        } else {
            format!("failing models: {}", failed.join(", "))
        },
    ))
}
