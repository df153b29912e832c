use super::{FeatureMap, LikelihoodModel, Prior};
use crate::measures::Layout;
use crate::models::CoordPrior;
use crate::numeric::{dot, norm_sq};

/// `l(theta, x) = exp(-||theta - x||^2 / 2)` with a standard normal prior.
#[derive(Clone, Debug)]
pub struct GaussianMeanLocation {
    layout: Layout,
    prior: Prior,
}

impl GaussianMeanLocation {
    pub fn new(dim: usize) -> Self {
        GaussianMeanLocation {
            layout: Layout::covariates(dim),
            prior: Prior::standard_normal(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }
}

impl LikelihoodModel for GaussianMeanLocation {
    fn name(&self) -> &str {
        "gaussian_mean_location"
    }

    fn param_dim(&self) -> usize {
        self.layout.dim
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn eval_log_lik(&self, theta: &[f64], x: &[f64]) -> f64 {
        -0.5 * theta
            .iter()
            .zip(x)
            .map(|(t, xi)| (t - xi) * (t - xi))
            .sum::<f64>()
    }

    fn eval_score(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        for ((o, t), xi) in out.iter_mut().zip(theta).zip(x) {
            *o = xi - t;
        }
    }

    fn eval_hessian_quad(&self, _theta: &[f64], _x: &[f64], v: &[f64]) -> f64 {
        -norm_sq(v)
    }

    fn eval_hessian_trace(&self, theta: &[f64], _x: &[f64]) -> f64 {
        -(theta.len() as f64)
    }

    fn eval_score_data_jacobian(&self, _theta: &[f64], _x: &[f64], jac: &mut [f64]) {
        let d = self.layout.dim;
        jac.fill(0.0);
        for i in 0..d {
            jac[i * d + i] = 1.0;
        }
    }

    fn eval_curvature_data_gradient(
        &self,
        theta: &[f64],
        x: &[f64],
        direction: Option<&[f64]>,
        grad: &mut [f64],
    ) -> f64 {
        grad.fill(0.0);
        match direction {
            Some(v) => self.eval_hessian_quad(theta, x, v),
            None => self.eval_hessian_trace(theta, x),
        }
    }
}

/// Gaussian linear regression on features `psi(x)` with unit noise:
/// `log l = -(<theta, psi(x)> - y)^2 / 2`. Data points are `(x, y)`.
#[derive(Clone, Debug)]
pub struct BayesLinReg {
    features: FeatureMap,
    covariate_dim: usize,
    layout: Layout,
    prior: Prior,
}

impl BayesLinReg {
    pub fn new(features: FeatureMap, covariate_dim: usize, prior_scale: f64) -> Self {
        let d = features.dim(covariate_dim);
        BayesLinReg {
            features,
            covariate_dim,
            layout: Layout::regression(covariate_dim),
            prior: Prior::new(vec![CoordPrior::Normal { scale: prior_scale }; d]),
        }
    }

    pub fn features(&self) -> FeatureMap {
        self.features
    }

    fn psi(&self, x: &[f64]) -> Vec<f64> {
        let mut psi = vec![0.0; self.features.dim(self.covariate_dim)];
        self.features.eval(&x[..self.covariate_dim], &mut psi);
        psi
    }

    fn psi_jacobian(&self, x: &[f64]) -> Vec<f64> {
        let mut jac = vec![0.0; self.features.dim(self.covariate_dim) * self.covariate_dim];
        self.features.jacobian(&x[..self.covariate_dim], &mut jac);
        jac
    }

    fn residual(&self, theta: &[f64], x: &[f64], psi: &[f64]) -> f64 {
        dot(theta, psi) - x[self.covariate_dim]
    }
}

impl LikelihoodModel for BayesLinReg {
    fn name(&self) -> &str {
        "bayes_lin_reg"
    }

    fn param_dim(&self) -> usize {
        self.features.dim(self.covariate_dim)
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn eval_log_lik(&self, theta: &[f64], x: &[f64]) -> f64 {
        let psi = self.psi(x);
        let r = self.residual(theta, x, &psi);
        -0.5 * r * r
    }

    fn eval_score(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let psi = self.psi(x);
        let r = self.residual(theta, x, &psi);
        for (o, p) in out.iter_mut().zip(&psi) {
            *o = -p * r;
        }
    }

    fn eval_hessian_quad(&self, _theta: &[f64], x: &[f64], v: &[f64]) -> f64 {
        let vp = dot(v, &self.psi(x));
        -vp * vp
    }

    fn eval_hessian_trace(&self, _theta: &[f64], x: &[f64]) -> f64 {
        -norm_sq(&self.psi(x))
    }

    fn eval_score_data_jacobian(&self, theta: &[f64], x: &[f64], jac: &mut [f64]) {
        let q = self.covariate_dim;
        let dim = q + 1;
        let psi = self.psi(x);
        let pj = self.psi_jacobian(x);
        let r = self.residual(theta, x, &psi);
        // theta . J[:, j]
        let tj: Vec<f64> = (0..q)
            .map(|j| (0..psi.len()).map(|k| theta[k] * pj[k * q + j]).sum())
            .collect();
        for i in 0..psi.len() {
            for j in 0..q {
                jac[i * dim + j] = -(pj[i * q + j] * r + psi[i] * tj[j]);
            }
            jac[i * dim + q] = psi[i];
        }
    }

    fn eval_curvature_data_gradient(
        &self,
        _theta: &[f64],
        x: &[f64],
        direction: Option<&[f64]>,
        grad: &mut [f64],
    ) -> f64 {
        let q = self.covariate_dim;
        let psi = self.psi(x);
        let pj = self.psi_jacobian(x);
        grad[q] = 0.0;
        match direction {
            Some(v) => {
                let vp = dot(v, &psi);
                for (j, g) in grad[..q].iter_mut().enumerate() {
                    let vj: f64 = (0..psi.len()).map(|k| v[k] * pj[k * q + j]).sum();
                    *g = -2.0 * vp * vj;
                }
                -vp * vp
            }
            None => {
                for (j, g) in grad[..q].iter_mut().enumerate() {
                    let pjj: f64 = (0..psi.len()).map(|k| psi[k] * pj[k * q + j]).sum();
                    *g = -2.0 * pjj;
                }
                -norm_sq(&psi)
            }
        }
    }

    fn predict(&self, theta: &[f64], x: &[f64]) -> Option<(f64, f64)> {
        Some((dot(theta, &self.psi(x)), 1.0))
    }
}

/// Linear regression with unknown noise scale, `theta = (beta, sigma)`:
/// `l = N(y; <beta, x>, sigma^2)`, flat prior on `beta`, half-Cauchy prior on
/// `sigma`. Data points are `(x, y)` where `x` starts with a frozen intercept.
#[derive(Clone, Debug)]
pub struct KidScoreModel {
    covariate_dim: usize,
    layout: Layout,
    prior: Prior,
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

impl KidScoreModel {
    /// `covariate_dim` counts the intercept; intercept plus one covariate is 2.
    pub fn new(covariate_dim: usize, sigma_prior_scale: f64) -> Self {
        let mut coords = vec![CoordPrior::Flat; covariate_dim];
        coords.push(CoordPrior::HalfCauchy {
            scale: sigma_prior_scale,
        });
        let mut layout = Layout::regression(covariate_dim).with_frozen(0, 1.0);
        if covariate_dim == 2 {
            layout = layout.with_names(["intercept", "mom_iq", "kid_score"]);
        }
        KidScoreModel {
            covariate_dim,
            layout,
            prior: Prior::new(coords),
        }
    }

    #[inline]
    fn split<'a>(&self, theta: &'a [f64], x: &'a [f64]) -> (&'a [f64], f64, &'a [f64], f64) {
        let k = self.covariate_dim;
        (&theta[..k], theta[k], &x[..k], x[k])
    }
}

impl Default for KidScoreModel {
    fn default() -> Self {
        KidScoreModel::new(2, 2.5)
    }
}

impl LikelihoodModel for KidScoreModel {
    fn name(&self) -> &str {
        "kidscore"
    }

    fn param_dim(&self) -> usize {
        self.covariate_dim + 1
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn eval_log_lik(&self, theta: &[f64], x: &[f64]) -> f64 {
        let (beta, sigma, xs, y) = self.split(theta, x);
        let r = dot(beta, xs) - y;
        -HALF_LN_2PI - sigma.ln() - 0.5 * r * r / (sigma * sigma)
    }

    fn eval_score(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let (beta, sigma, xs, y) = self.split(theta, x);
        let r = dot(beta, xs) - y;
        let s2 = sigma * sigma;
        for (o, xi) in out.iter_mut().zip(xs) {
            *o = -r * xi / s2;
        }
        out[self.covariate_dim] = r * r / (s2 * sigma) - 1.0 / sigma;
    }

    fn eval_hessian_quad(&self, theta: &[f64], x: &[f64], v: &[f64]) -> f64 {
        let (beta, sigma, xs, y) = self.split(theta, x);
        let k = self.covariate_dim;
        let r = dot(beta, xs) - y;
        let ax = dot(&v[..k], xs);
        let c = v[k];
        let s2 = sigma * sigma;
        -ax * ax / s2 + 4.0 * c * r * ax / (s2 * sigma) + c * c * (1.0 / s2 - 3.0 * r * r / (s2 * s2))
    }

    fn eval_hessian_trace(&self, theta: &[f64], x: &[f64]) -> f64 {
        let (beta, sigma, xs, y) = self.split(theta, x);
        let r = dot(beta, xs) - y;
        let s2 = sigma * sigma;
        -norm_sq(xs) / s2 + 1.0 / s2 - 3.0 * r * r / (s2 * s2)
    }

    fn eval_score_data_jacobian(&self, theta: &[f64], x: &[f64], jac: &mut [f64]) {
        let (beta, sigma, xs, y) = self.split(theta, x);
        let k = self.covariate_dim;
        let dim = k + 1;
        let r = dot(beta, xs) - y;
        let s2 = sigma * sigma;
        let s3 = s2 * sigma;
        for i in 0..k {
            for j in 0..k {
                let delta = if i == j { r } else { 0.0 };
                jac[i * dim + j] = -(beta[j] * xs[i] + delta) / s2;
            }
            jac[i * dim + k] = xs[i] / s2;
        }
        for j in 0..k {
            jac[k * dim + j] = 2.0 * r * beta[j] / s3;
        }
        jac[k * dim + k] = -2.0 * r / s3;
    }

    fn eval_curvature_data_gradient(
        &self,
        theta: &[f64],
        x: &[f64],
        direction: Option<&[f64]>,
        grad: &mut [f64],
    ) -> f64 {
        let (beta, sigma, xs, y) = self.split(theta, x);
        let k = self.covariate_dim;
        let r = dot(beta, xs) - y;
        let s2 = sigma * sigma;
        let s3 = s2 * sigma;
        let s4 = s2 * s2;
        match direction {
            Some(v) => {
                let a = &v[..k];
                let c = v[k];
                let ax = dot(a, xs);
                for j in 0..k {
                    grad[j] = -2.0 * ax * a[j] / s2 + 4.0 * c * (beta[j] * ax + r * a[j]) / s3
                        - 6.0 * c * c * r * beta[j] / s4;
                }
                grad[k] = -4.0 * c * ax / s3 + 6.0 * c * c * r / s4;
                -ax * ax / s2 + 4.0 * c * r * ax / s3 + c * c * (1.0 / s2 - 3.0 * r * r / s4)
            }
            None => {
                for j in 0..k {
                    grad[j] = -2.0 * xs[j] / s2 - 6.0 * r * beta[j] / s4;
                }
                grad[k] = 6.0 * r / s4;
                -norm_sq(xs) / s2 + 1.0 / s2 - 3.0 * r * r / s4
            }
        }
    }

    fn predict(&self, theta: &[f64], x: &[f64]) -> Option<(f64, f64)> {
        let (beta, sigma, xs, _) = self.split(theta, x);
        Some((dot(beta, xs), sigma))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::measures::DataPoint;
    use crate::models::{curvature, data_derivatives, log_lik, prior_terms, score_theta};

    fn pt(v: &[f64]) -> DataPoint {
        DataPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn gaussian_log_lik_and_score() {
        let m = GaussianMeanLocation::new(1);
        assert_eq!(log_lik(&m, &[2.0], &pt(&[2.0])).unwrap(), 0.0);
        assert_eq!(log_lik(&m, &[0.0], &pt(&[2.0])).unwrap(), -2.0);
        let m2 = GaussianMeanLocation::new(2);
        assert_eq!(score_theta(&m2, &[0.0, 0.0], &pt(&[1.0, 2.0])).unwrap(), vec![1.0, 2.0]);
        // closed form -(theta - x)
        let theta = [0.3, -1.7];
        let x = [2.5, 0.25];
        let s = score_theta(&m2, &theta, &pt(&x)).unwrap();
        assert_eq!(s, vec![-(theta[0] - x[0]), -(theta[1] - x[1])]);
    }

    #[test]
    fn gaussian_curvature_and_data_derivatives() {
        let m = GaussianMeanLocation::new(2);
        let x = pt(&[0.4, 1.0]);
        assert_eq!(curvature(&m, &[1.0, 2.0], &x, Some(&[1.0, 0.0])).unwrap(), -1.0);
        assert_eq!(curvature(&m, &[1.0, 2.0], &x, None).unwrap(), -2.0);
        let dd = data_derivatives(&m, &[1.0, 2.0], &x, Some(&[0.3, 0.2])).unwrap();
        assert_eq!(dd.jac_score, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(dd.grad_quad, Some(vec![0.0, 0.0]));
    }

    #[test]
    fn linreg_score_and_curvature() {
        let m = BayesLinReg::new(FeatureMap::IdentityWithIntercept, 1, 1.0);
        // psi(3) = (1, 3), y = 2, theta = 0 -> psi y
        assert_eq!(score_theta(&m, &[0.0, 0.0], &pt(&[3.0, 2.0])).unwrap(), vec![2.0, 6.0]);
        assert_eq!(curvature(&m, &[0.5, 0.5], &pt(&[3.0, 2.0]), Some(&[1.0, 1.0])).unwrap(), -16.0);
        let dd = data_derivatives(&m, &[0.7, -0.2], &pt(&[3.0, 2.0]), None).unwrap();
        // last column (response) equals psi(x)
        assert_eq!(dd.jac_score[0][1], 1.0);
        assert_eq!(dd.jac_score[1][1], 3.0);
    }

    #[test]
    fn linreg_matches_closed_form() {
        let m = BayesLinReg::new(FeatureMap::Polynomial { degree: 2 }, 1, 1.0);
        let theta = [0.2, -0.5, 1.1];
        let (x, y) = (1.5, -0.3);
        let psi = [1.0, x, x * x];
        let s = score_theta(&m, &theta, &pt(&[x, y])).unwrap();
        let tp = dot(&theta, &psi);
        for i in 0..3 {
            // -psi psi^T theta + psi y
            assert_eq!(s[i], -psi[i] * (tp - y));
        }
    }

    #[test]
    fn kidscore_values() {
        let m = KidScoreModel::default();
        let ll = log_lik(&m, &[1.0, 0.0, 1.0], &pt(&[1.0, 0.0, 1.0])).unwrap();
        assert!((ll + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);

        let s = score_theta(&m, &[0.0, 0.0, 1.0], &pt(&[1.0, 0.0, 1.0])).unwrap();
        assert_eq!(s, vec![1.0, 0.0, 0.0]);

        let q = curvature(&m, &[0.3, -0.2, 2.0], &pt(&[1.0, 1.0, 0.7]), Some(&[1.0, 0.0, 0.0])).unwrap();
        assert!((q + 0.25).abs() < 1e-15);

        // d(sigma score)/du at beta = 0, sigma = 1, u = 2
        let dd = data_derivatives(&m, &[0.0, 0.0, 1.0], &pt(&[1.0, 0.5, 2.0]), None).unwrap();
        assert_eq!(dd.jac_score.len(), 3);
        assert_eq!(dd.jac_score[2].len(), 2);
        assert!((dd.jac_score[2][1] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn kidscore_rejects_nonpositive_sigma() {
        let m = KidScoreModel::default();
        assert!(matches!(
            log_lik(&m, &[0.0, 0.0, 0.0], &pt(&[1.0, 0.0, 1.0])),
            Err(Error::Domain(_))
        ));
        assert!(score_theta(&m, &[0.0, 0.0, -1.0], &pt(&[1.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn prior_terms_cases() {
        let g = GaussianMeanLocation::new(2);
        let p = prior_terms(&g, &[1.0, -1.0], None).unwrap();
        assert_eq!(p.score, vec![-1.0, 1.0]);
        assert_eq!(p.trace, -2.0);

        let k = KidScoreModel::default();
        let p = prior_terms(&k, &[0.4, -3.0, 2.5], Some(&[0.0, 0.0, 1.0])).unwrap();
        assert_eq!(&p.score[..2], &[0.0, 0.0]);
        assert!((p.score[2] + 0.4).abs() < 1e-15);
        // d/dsigma of -2 sigma / (s^2 + sigma^2) vanishes at sigma = s
        assert!(p.quad.unwrap().abs() < 1e-15);
    }

    #[test]
    fn unit_direction_quads_sum_to_trace() {
        let models: Vec<(Box<dyn LikelihoodModel>, Vec<f64>, Vec<f64>)> = vec![
            (Box::new(GaussianMeanLocation::new(3)), vec![0.1, 0.2, -0.3], vec![1.0, -2.0, 0.5]),
            (
                Box::new(BayesLinReg::new(FeatureMap::Polynomial { degree: 3 }, 1, 1.0)),
                vec![0.1, 0.2, -0.3, 0.05],
                vec![1.3, -0.4],
            ),
            (Box::new(KidScoreModel::default()), vec![0.3, 0.8, 1.7], vec![1.0, -0.6, 0.9]),
        ];
        for (m, theta, x) in models {
            let x = pt(&x);
            let d = m.param_dim();
            let total: f64 = (0..d)
                .map(|i| {
                    let mut e = vec![0.0; d];
                    e[i] = 1.0;
                    curvature(m.as_ref(), &theta, &x, Some(&e)).unwrap()
                })
                .sum();
            let tr = curvature(m.as_ref(), &theta, &x, None).unwrap();
            assert!((total - tr).abs() <= 1e-10 * tr.abs().max(1.0), "{}", m.name());
        }
    }
}
