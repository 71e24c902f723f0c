use ndarray::Array2;
use rand::seq::SliceRandom;

use super::batch::{standardize_columns, WeightVector};
use super::estimator::{frob_norm_sq, CrossCovEstimator};
use crate::error::{invalid, Result};
use crate::rff::RffMap;
use crate::rng::Rng;
use crate::Scalar;

/// Dependence score of two columns plus its permutation null.
#[derive(Clone, Debug)]
pub struct PermutationTest<T> {
    pub statistic: T,
    /// Scores after shuffling the rows of `y`, sorted ascending.
    pub null: Vec<T>,
}

impl<T: Scalar> PermutationTest<T> {
    pub fn percentile(&self, q: f64) -> T {
        percentile(&self.null, q)
    }

    /// Fraction of null scores at least as large as the statistic.
    pub fn p_value(&self) -> f64 {
        let exceed = self.null.iter().filter(|&&s| s >= self.statistic).count();
        (exceed + 1) as f64 / (self.null.len() + 1) as f64
    }
}

/// Linear-interpolated `q`-quantile (`q` in `[0, 1]`) of an ascending slice.
pub fn percentile<T: Scalar>(sorted: &[T], q: f64) -> T {
    if sorted.is_empty() {
        return T::nan();
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::of(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Runs `permutations` row shuffles of `y` against fixed `x` under uniform weights.
#[allow(clippy::too_many_arguments)]
pub fn permutation_test<T: Scalar>(
    x: &[T],
    y: &[T],
    map_x: &RffMap<T>,
    map_y: &RffMap<T>,
    permutations: usize,
    standardize: bool,
    estimator: CrossCovEstimator,
    rng: &mut Rng,
) -> Result<PermutationTest<T>> {
    let n = x.len();
    if y.len() != n || n < 2 {
        return invalid("permutation test needs two equal-length columns with n >= 2");
    }
    let mut xy = Array2::zeros((n, 2));
    for k in 0..n {
        xy[[k, 0]] = x[k];
        xy[[k, 1]] = y[k];
    }
    if standardize {
        xy = standardize_columns(xy.view());
    }
    let u = map_x.apply_column(&xy.column(0).to_vec())?;
    let v = map_y.apply_column(&xy.column(1).to_vec())?;
    let w = WeightVector::<T>::uniform(n);
    let score = |v: &Array2<T>| -> Result<T> {
        let cov = estimator.cross_cov(u.view(), v.view(), w.as_slice())?;
        frob_norm_sq(cov.view())
    };
    let statistic = score(&v)?;
    let mut order: Vec<usize> = (0..n).collect();
    let mut null = Vec::with_capacity(permutations);
    for _ in 0..permutations {
        order.shuffle(rng);
        let shuffled = v.select(ndarray::Axis(0), &order);
        null.push(score(&shuffled)?);
    }
    null.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    Ok(PermutationTest { statistic, null })
}
