use proptest::prelude::*;
use score_recon::attack::{objective_gradients, AttackProblem, ObjectiveMode};
use score_recon::divergence::{
    diagonal_norm_sq, fd_direct, mmd_squared, DrawSource, ModelKernel, PosteriorDraws,
};
use score_recon::models::{BayesLinReg, FeatureMap, KidScoreModel};
use score_recon::WeightedEmpiricalMeasure;

fn coord() -> impl Strategy<Value = f64> {
    -3.0..3.0f64
}

fn points(dim: usize, max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(coord(), dim), 1..=max)
}

fn weighted(dim: usize, max: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    points(dim, max).prop_flat_map(|p| {
        let n = p.len();
        (Just(p), prop::collection::vec(0.1..3.0f64, n))
    })
}

fn draws(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(coord(), dim), 1..=30)
}

fn kid_rows(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    rows.into_iter().map(|r| vec![1.0, r[0], r[1]]).collect()
}

fn kid_draws(rows: Vec<Vec<f64>>) -> PosteriorDraws {
    let rows = rows.into_iter().map(|r| vec![r[0], r[1], 0.2 + r[2].abs()]).collect();
    PosteriorDraws::new(rows, Vec::new(), DrawSource::File).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fd_is_half_mmd_and_nonnegative(x in points(2, 8), (z, w) in weighted(2, 8), t in draws(2)) {
        let model = BayesLinReg::new(FeatureMap::IdentityWithIntercept, 1, 1.0);
        let draws = PosteriorDraws::new(t, Vec::new(), DrawSource::File).unwrap();
        let target = WeightedEmpiricalMeasure::from_rows(x, None).unwrap();
        let recon = WeightedEmpiricalMeasure::from_rows(z, Some(w)).unwrap();
        let fd = fd_direct(&model, &draws, &target, &recon).unwrap().value;
        let kernel = ModelKernel::Bayes { model: &model, draws: &draws };
        let mmd = mmd_squared(&kernel, &target, &recon).unwrap();
        prop_assert!(fd >= 0.0);
        prop_assert!((fd - 0.5 * mmd).abs() <= 1e-9 * fd.max(1e-12));
    }

    #[test]
    fn mmd_is_symmetric(x in points(2, 6), (z, w) in weighted(2, 6), t in draws(3)) {
        let model = KidScoreModel::default();
        let draws = kid_draws(t);
        let a = WeightedEmpiricalMeasure::from_rows(kid_rows(x), None).unwrap();
        let b = WeightedEmpiricalMeasure::from_rows(kid_rows(z), Some(w)).unwrap();
        let kernel = ModelKernel::Bayes { model: &model, draws: &draws };
        let ab = mmd_squared(&kernel, &a, &b).unwrap();
        let ba = mmd_squared(&kernel, &b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-10 * ab.abs().max(1.0));
    }

    #[test]
    fn diagonal_mass_grows_with_points(x in points(2, 8), extra in prop::collection::vec(coord(), 2), t in draws(3)) {
        let model = KidScoreModel::default();
        let draws = kid_draws(t);
        let kernel = ModelKernel::Bayes { model: &model, draws: &draws };
        let base = WeightedEmpiricalMeasure::from_rows(kid_rows(x.clone()), None).unwrap();
        let mut more = x;
        more.push(extra);
        let grown = WeightedEmpiricalMeasure::from_rows(kid_rows(more), None).unwrap();
        prop_assert!(diagonal_norm_sq(&kernel, &grown).unwrap() > diagonal_norm_sq(&kernel, &base).unwrap());
    }

    #[test]
    fn objective_ignores_pseudo_point_order((z, w) in weighted(2, 6), t in draws(3), shift in 1usize..6) {
        let model = KidScoreModel::default();
        let draws = kid_draws(t);
        let problem = AttackProblem::Bayes { model: &model, draws: &draws };
        let rows = kid_rows(z);
        let n = rows.len();
        let k = shift % n;
        let mut r2 = rows.clone();
        r2.rotate_left(k);
        let mut w2 = w.clone();
        w2.rotate_left(k);
        let a = objective_gradients(&problem, ObjectiveMode::Fd, None, &WeightedEmpiricalMeasure::from_rows(rows, Some(w)).unwrap()).unwrap();
        let b = objective_gradients(&problem, ObjectiveMode::Fd, None, &WeightedEmpiricalMeasure::from_rows(r2, Some(w2)).unwrap()).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-10 * a.value.abs().max(1.0));
        let mut gw = a.grad_w.clone();
        gw.rotate_left(k);
        for (x, y) in gw.iter().zip(&b.grad_w) {
            prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
        }
    }

    #[test]
    fn splitting_weight_preserves_objective((z, w) in weighted(2, 5), t in draws(3), frac in 0.05..0.95f64) {
        let model = KidScoreModel::default();
        let draws = kid_draws(t);
        let problem = AttackProblem::Bayes { model: &model, draws: &draws };
        let rows = kid_rows(z);
        let mut rows2 = rows.clone();
        rows2.push(rows[0].clone());
        let mut w2 = w.clone();
        w2[0] = w[0] * frac;
        w2.push(w[0] * (1.0 - frac));
        let a = objective_gradients(&problem, ObjectiveMode::Fd, None, &WeightedEmpiricalMeasure::from_rows(rows, Some(w)).unwrap()).unwrap();
        let b = objective_gradients(&problem, ObjectiveMode::Fd, None, &WeightedEmpiricalMeasure::from_rows(rows2, Some(w2)).unwrap()).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-10 * a.value.abs().max(1.0));
    }
}
