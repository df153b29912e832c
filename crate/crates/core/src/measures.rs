//! Un-normalised weighted empirical measures and the sufficient statistics
//! that a perfect reconstruction must reproduce.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::table;

/// Guard for relative errors against exactly-zero targets.
pub const REL_ERR_FLOOR: f64 = 1e-12;

/// A single data point; coordinates follow the owning model's [`Layout`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DataPoint(Vec<f64>);

impl DataPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        ensure_finite("data point", &coords)?;
        Ok(DataPoint(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub(crate) fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<DataPoint> for Vec<f64> {
    fn from(p: DataPoint) -> Self {
        p.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenCoord {
    pub index: usize,
    pub value: f64,
}

/// Which coordinates of a data point form the covariate part, which one (if
/// any) is the response, and which are fixed by the model and never optimised
/// (e.g. a leading intercept of 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    pub dim: usize,
    #[serde(default)]
    pub response: Option<usize>,
    #[serde(default)]
    pub frozen: Vec<FrozenCoord>,
    #[serde(default)]
    pub names: Vec<String>,
}

impl Layout {
    /// All coordinates are covariates, none frozen.
    pub fn covariates(dim: usize) -> Self {
        Layout {
            dim,
            response: None,
            frozen: Vec::new(),
            names: Vec::new(),
        }
    }

    /// Covariates followed by a trailing response coordinate.
    pub fn regression(covariate_dim: usize) -> Self {
        Layout {
            dim: covariate_dim + 1,
            response: Some(covariate_dim),
            frozen: Vec::new(),
            names: Vec::new(),
        }
    }

    pub fn with_frozen(mut self, index: usize, value: f64) -> Self {
        self.frozen.push(FrozenCoord { index, value });
        self
    }

    pub fn with_names<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        self.names = names.into_iter().map(Into::into).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Layout("dimension must be positive".into()));
        }
        if let Some(r) = self.response {
            if r >= self.dim {
                return Err(Error::Layout(format!(
                    "response index {r} out of range for dimension {}",
                    self.dim
                )));
            }
        }
        for (k, f) in self.frozen.iter().enumerate() {
            if f.index >= self.dim {
                return Err(Error::Layout(format!(
                    "frozen index {} out of range for dimension {}",
                    f.index, self.dim
                )));
            }
            if self.frozen[..k].iter().any(|g| g.index == f.index) {
                return Err(Error::Layout(format!("frozen index {} repeated", f.index)));
            }
            if !f.value.is_finite() {
                return Err(Error::Layout(format!("frozen value at {} not finite", f.index)));
            }
        }
        if !self.names.is_empty() && self.names.len() != self.dim {
            return Err(Error::Layout(format!(
                "{} names given for dimension {}",
                self.names.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn is_frozen(&self, index: usize) -> bool {
        self.frozen.iter().any(|f| f.index == index)
    }

    /// Covariate coordinates in increasing order.
    pub fn x_indices(&self) -> Vec<usize> {
        (0..self.dim).filter(|&i| Some(i) != self.response).collect()
    }

    /// Coordinates the attack is allowed to move.
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.dim).filter(|&i| !self.is_frozen(i)).collect()
    }

    pub fn free_dim(&self) -> usize {
        self.dim - self.frozen.len()
    }

    pub fn name(&self, index: usize) -> String {
        self.names
            .get(index)
            .cloned()
            .unwrap_or_else(|| format!("c{index}"))
    }

    pub fn check_point(&self, point: &DataPoint) -> Result<()> {
        if point.dim() != self.dim {
            return Err(Error::Layout(format!(
                "point has {} coordinates, layout expects {}",
                point.dim(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// `P_{w,Z} = sum_m w_m delta_{z_m}`. Weights are unconstrained reals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedEmpiricalMeasure {
    weights: Vec<f64>,
    points: Vec<DataPoint>,
}

impl WeightedEmpiricalMeasure {
    /// Builds a measure; omitted weights default to one, giving `P_X`.
    pub fn new(points: Vec<DataPoint>, weights: Option<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("point list"));
        }
        let dim = points[0].dim();
        for p in &points {
            ensure_len("point dimension", dim, p.dim())?;
        }
        let weights = match weights {
            Some(w) => {
                ensure_len("weights", points.len(), w.len())?;
                ensure_finite("weights", &w)?;
                w
            }
            None => vec![1.0; points.len()],
        };
        Ok(WeightedEmpiricalMeasure { weights, points })
    }

    /// Unit-weight measure from raw coordinate rows.
    pub fn from_rows(rows: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> Result<Self> {
        let points = rows
            .into_iter()
            .map(DataPoint::new)
            .collect::<Result<Vec<_>>>()?;
        Self::new(points, weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.weights
            .iter()
            .zip(&self.points)
            .map(|(&w, p)| (w, p.coords()))
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub(crate) fn points_mut(&mut self) -> &mut [DataPoint] {
        &mut self.points
    }
}

/// Free-function form of [`WeightedEmpiricalMeasure::new`].
pub fn build_measure(
    points: Vec<DataPoint>,
    weights: Option<Vec<f64>>,
) -> Result<WeightedEmpiricalMeasure> {
    WeightedEmpiricalMeasure::new(points, weights)
}

/// Weighted sufficient statistics of a measure.
///
/// `gram`, `first_moment` and `xy` are indexed by position within the
/// covariate part ([`Layout::x_indices`]); for models without a response the
/// response fields are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconStats {
    pub total_mass: f64,
    pub first_moment: Vec<f64>,
    pub gram: Vec<Vec<f64>>,
    pub xy: Vec<f64>,
    pub y_sum: f64,
    pub yy: f64,
    pub has_response: bool,
}

pub fn recon_statistics(measure: &WeightedEmpiricalMeasure, layout: &Layout) -> Result<ReconStats> {
    layout.validate()?;
    for p in measure.points() {
        layout.check_point(p)?;
    }
    let xs = layout.x_indices();
    let px = xs.len();
    let mut stats = ReconStats {
        total_mass: 0.0,
        first_moment: vec![0.0; px],
        gram: vec![vec![0.0; px]; px],
        xy: vec![0.0; px],
        y_sum: 0.0,
        yy: 0.0,
        has_response: layout.response.is_some(),
    };
    for (w, z) in measure.iter() {
        stats.total_mass += w;
        let y = layout.response.map(|r| z[r]);
        for (a, &i) in xs.iter().enumerate() {
            let wz = w * z[i];
            stats.first_moment[a] += wz;
            for (b, &j) in xs.iter().enumerate().skip(a) {
                stats.gram[a][b] += wz * z[j];
            }
            if let Some(y) = y {
                stats.xy[a] += wz * y;
            }
        }
        if let Some(y) = y {
            stats.y_sum += w * y;
            stats.yy += w * y * y;
        }
    }
    for a in 0..px {
        for b in 0..a {
            stats.gram[a][b] = stats.gram[b][a];
        }
    }
    Ok(stats)
}

/// Normalised moments derived from [`ReconStats`]: weighted means and
/// variances of every free covariate and of the response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: f64,
    /// Layout indices of the free covariates described by `x_mean`/`x_var`.
    pub x_coords: Vec<usize>,
    pub x_mean: Vec<f64>,
    pub x_var: Vec<f64>,
    pub y_mean: Option<f64>,
    pub y_var: Option<f64>,
}

impl ReconStats {
    pub fn moments(&self, layout: &Layout) -> Moments {
        let count = self.total_mass;
        let mut x_coords = Vec::new();
        let mut x_mean = Vec::new();
        let mut x_var = Vec::new();
        for (a, i) in layout.x_indices().into_iter().enumerate() {
            if layout.is_frozen(i) {
                continue;
            }
            let mean = self.first_moment[a] / count;
            x_coords.push(i);
            x_mean.push(mean);
            x_var.push(self.gram[a][a] / count - mean * mean);
        }
        let (y_mean, y_var) = if self.has_response {
            let mean = self.y_sum / count;
            (Some(mean), Some(self.yy / count - mean * mean))
        } else {
            (None, None)
        };
        Moments {
            count,
            x_coords,
            x_mean,
            x_var,
            y_mean,
            y_var,
        }
    }
}

fn rel_err(target: f64, recon: f64) -> f64 {
    (target - recon).abs() / target.abs().max(REL_ERR_FLOOR)
}

/// Per-statistic relative errors `|target - recon| / max(|target|, 1e-12)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatErrors {
    pub total_mass: f64,
    pub first_moment: Vec<f64>,
    pub gram: Vec<Vec<f64>>,
    pub xy: Vec<f64>,
    pub y_sum: f64,
    pub yy: f64,
    pub x_mean: Vec<f64>,
    pub x_var: Vec<f64>,
    pub y_mean: Option<f64>,
    pub y_var: Option<f64>,
}

impl StatErrors {
    /// Largest error among the tracked quantities: count, then mean and
    /// variance of each free covariate and of the response.
    pub fn tracked_max(&self) -> f64 {
        std::iter::once(self.total_mass)
            .chain(self.x_mean.iter().copied())
            .chain(self.x_var.iter().copied())
            .chain(self.y_mean)
            .chain(self.y_var)
            .fold(0.0, f64::max)
    }
}

pub fn stat_errors(target: &ReconStats, recon: &ReconStats, layout: &Layout) -> Result<StatErrors> {
    let px = layout.x_indices().len();
    ensure_len("target covariate statistics", px, target.first_moment.len())?;
    ensure_len("reconstructed covariate statistics", px, recon.first_moment.len())?;
    if target.has_response != recon.has_response {
        return Err(Error::Layout("response presence differs between statistics".into()));
    }
    let vec_err = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(&x, &y)| rel_err(x, y)).collect()
    };
    let tm = target.moments(layout);
    let rm = recon.moments(layout);
    let opt_err = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(x, y)| rel_err(x, y));
    Ok(StatErrors {
        total_mass: rel_err(target.total_mass, recon.total_mass),
        first_moment: vec_err(&target.first_moment, &recon.first_moment),
        gram: target
            .gram
            .iter()
            .zip(&recon.gram)
            .map(|(a, b)| vec_err(a, b))
            .collect(),
        xy: vec_err(&target.xy, &recon.xy),
        y_sum: rel_err(target.y_sum, recon.y_sum),
        yy: rel_err(target.yy, recon.yy),
        x_mean: vec_err(&tm.x_mean, &rm.x_mean),
        x_var: vec_err(&tm.x_var, &rm.x_var),
        y_mean: opt_err(tm.y_mean, rm.y_mean),
        y_var: opt_err(tm.y_var, rm.y_var),
    })
}

/// A dataset file: header names plus one data point per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub points: Vec<DataPoint>,
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Self> {
        let t = table::read(path)?;
        if t.rows.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        Ok(Dataset {
            names: t.header,
            points: t.rows.into_iter().map(DataPoint).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        table::write(
            path,
            &table::render(&self.names, self.points.iter().map(|p| p.0.clone())),
        )
    }

    /// Unit-weight measure `P_X`.
    pub fn measure(&self) -> Result<WeightedEmpiricalMeasure> {
        WeightedEmpiricalMeasure::new(self.points.clone(), None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kid_layout() -> Layout {
        Layout::regression(2).with_frozen(0, 1.0)
    }

    #[test]
    fn unit_weights_by_default() {
        let m = WeightedEmpiricalMeasure::from_rows(vec![vec![1.0, 2.0]], None).unwrap();
        assert_eq!(m.weights(), &[1.0]);
    }

    #[test]
    fn total_mass_sums_weights() {
        let m = WeightedEmpiricalMeasure::from_rows(vec![vec![0.0], vec![2.0]], Some(vec![0.5, 1.5]))
            .unwrap();
        assert_eq!(m.total_mass(), 2.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            build_measure(vec![], Some(vec![1.0])),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            WeightedEmpiricalMeasure::from_rows(vec![vec![1.0]], Some(vec![1.0, 2.0])),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            WeightedEmpiricalMeasure::from_rows(vec![vec![f64::NAN]], None),
            Err(Error::NonFinite { .. })
        ));
        assert!(WeightedEmpiricalMeasure::from_rows(vec![vec![1.0]], Some(vec![f64::INFINITY])).is_err());
    }

    #[test]
    fn single_point_outer_product() {
        let m = WeightedEmpiricalMeasure::from_rows(vec![vec![1.0, 3.0, 2.0]], None).unwrap();
        let s = recon_statistics(&m, &kid_layout()).unwrap();
        assert_eq!(s.total_mass, 1.0);
        assert_eq!(s.gram, vec![vec![1.0, 3.0], vec![3.0, 9.0]]);
        assert_eq!(s.xy, vec![2.0, 6.0]);
        assert_eq!(s.yy, 4.0);

        let m2 = WeightedEmpiricalMeasure::from_rows(vec![vec![1.0, 3.0, 2.0]], Some(vec![2.0])).unwrap();
        let s2 = recon_statistics(&m2, &kid_layout()).unwrap();
        assert_eq!(s2.gram, vec![vec![2.0, 6.0], vec![6.0, 18.0]]);
        assert_eq!(s2.xy, vec![4.0, 12.0]);
        assert_eq!(s2.yy, 8.0);
        assert_eq!(s2.total_mass, 2.0);
    }

    #[test]
    fn pure_covariate_layout_has_zero_response_fields() {
        let m = WeightedEmpiricalMeasure::from_rows(vec![vec![1.0, 2.0]], None).unwrap();
        let s = recon_statistics(&m, &Layout::covariates(2)).unwrap();
        assert!(!s.has_response);
        assert_eq!(s.xy, vec![0.0, 0.0]);
        assert_eq!(s.yy, 0.0);
        assert_eq!(s.first_moment, vec![1.0, 2.0]);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let m = WeightedEmpiricalMeasure::from_rows(vec![vec![1.0, 2.0]], None).unwrap();
        assert!(matches!(
            recon_statistics(&m, &kid_layout()),
            Err(Error::Layout(_))
        ));
        let bad = Layout::covariates(2).with_frozen(5, 1.0);
        assert!(recon_statistics(&m, &bad).is_err());
    }

    #[test]
    fn errors_identity_and_arithmetic() {
        let layout = kid_layout();
        let m = WeightedEmpiricalMeasure::from_rows(
            vec![vec![1.0, 0.5, 1.0], vec![1.0, -1.0, 3.0]],
            Some(vec![0.7, 1.9]),
        )
        .unwrap();
        let s = recon_statistics(&m, &layout).unwrap();
        let e = stat_errors(&s, &s, &layout).unwrap();
        assert_eq!(e.tracked_max(), 0.0);
        assert!(e.gram.iter().flatten().all(|&v| v == 0.0));

        let mut other = s.clone();
        let mut target = s.clone();
        target.total_mass = 434.0;
        other.total_mass = 400.0;
        let e = stat_errors(&target, &other, &layout).unwrap();
        assert!((e.total_mass - 34.0 / 434.0).abs() < 1e-15);
        assert!((e.total_mass - 0.0783).abs() < 1e-4);
    }

    #[test]
    fn two_point_variance() {
        let layout = Layout::covariates(1);
        let m = WeightedEmpiricalMeasure::from_rows(vec![vec![0.0], vec![2.0]], None).unwrap();
        let mo = recon_statistics(&m, &layout).unwrap().moments(&layout);
        assert_eq!(mo.x_mean, vec![1.0]);
        assert_eq!(mo.x_var, vec![1.0]);
    }

    #[test]
    fn frozen_coordinates_excluded_from_moments() {
        let layout = kid_layout();
        let m = WeightedEmpiricalMeasure::from_rows(vec![vec![1.0, 3.0, 2.0]], None).unwrap();
        let mo = recon_statistics(&m, &layout).unwrap().moments(&layout);
        assert_eq!(mo.x_coords, vec![1]);
        assert_eq!(mo.y_mean, Some(2.0));
        assert_eq!(mo.y_var, Some(0.0));
    }

    #[test]
    fn identical_measures_give_identical_stats() {
        let layout = kid_layout();
        let rows = vec![vec![1.0, 0.3, -1.0], vec![1.0, 2.0, 0.5]];
        let a = WeightedEmpiricalMeasure::from_rows(rows.clone(), None).unwrap();
        let b = WeightedEmpiricalMeasure::from_rows(rows, None).unwrap();
        assert_eq!(
            recon_statistics(&a, &layout).unwrap(),
            recon_statistics(&b, &layout).unwrap()
        );
    }

    fn arb_rows() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
        (1usize..8).prop_flat_map(|m| {
            (
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), m),
                prop::collection::vec(-3.0f64..3.0, m),
                prop::collection::vec(-3.0f64..3.0, m),
            )
        })
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
    }

    fn flatten(s: &ReconStats) -> Vec<f64> {
        let mut v = vec![s.total_mass, s.y_sum, s.yy];
        v.extend(&s.first_moment);
        v.extend(s.gram.iter().flatten());
        v.extend(&s.xy);
        v
    }

    proptest! {
        #[test]
        fn linear_in_weights((rows, w1, w2) in arb_rows()) {
            let layout = Layout::regression(1);
            let sum: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
            let s = |w: Vec<f64>| {
                let m = WeightedEmpiricalMeasure::from_rows(rows.clone(), Some(w)).unwrap();
                flatten(&recon_statistics(&m, &layout).unwrap())
            };
            let (a, b, c) = (s(w1), s(w2), s(sum));
            for i in 0..a.len() {
                prop_assert!(close(a[i] + b[i], c[i]), "{} + {} != {}", a[i], b[i], c[i]);
            }
        }

        #[test]
        fn permutation_invariant((rows, w, _) in arb_rows(), rot in 0usize..8) {
            let layout = Layout::regression(1);
            let k = rot % rows.len();
            let mut r2 = rows.clone();
            let mut w2 = w.clone();
            r2.rotate_left(k);
            w2.rotate_left(k);
            let a = flatten(&recon_statistics(&WeightedEmpiricalMeasure::from_rows(rows, Some(w)).unwrap(), &layout).unwrap());
            let b = flatten(&recon_statistics(&WeightedEmpiricalMeasure::from_rows(r2, Some(w2)).unwrap(), &layout).unwrap());
            for i in 0..a.len() {
                prop_assert!(close(a[i], b[i]));
            }
        }

        #[test]
        fn gram_symmetric((rows, w, _) in arb_rows()) {
            let layout = Layout::covariates(2);
            let s = recon_statistics(&WeightedEmpiricalMeasure::from_rows(rows, Some(w)).unwrap(), &layout).unwrap();
            prop_assert!((s.gram[0][1] - s.gram[1][0]).abs() <= 1e-12);
        }
    }
}
