//! Small dense helpers. Parameter and data dimensions here are tiny (d <= ~10),
//! so plain slices beat pulling in a matrix library.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Fixed-tree pairwise summation. The reduction order depends only on the
/// length of the input, so serial and parallel producers of `values` give
/// bit-identical totals.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean and standard error of the mean (sample variance with T-1 divisor;
/// zero when there is a single value).
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let centered: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&centered) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Column-wise pairwise sum of equally sized rows.
pub fn pairwise_sum_rows(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    let mut column = vec![0.0; rows.len()];
    (0..width)
        .map(|j| {
            for (c, row) in column.iter_mut().zip(rows) {
                *c = row[j];
            }
            pairwise_sum(&column)
        })
        .collect()
}
