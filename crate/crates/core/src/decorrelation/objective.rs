use ndarray::{s, Array2, ArrayView1, Axis};

use super::batch::{standardize_columns, FeatureBatch, WeightVector};
use super::estimator::{frob_norm_sq, CrossCovEstimator};
use crate::error::{invalid, Result};
use crate::rff::FeatureMaps;
use crate::Scalar;

/// The saliency-weighted decorrelation objective on one batch, with the RFF
/// features of every column precomputed.
///
/// `value(w) = sum_{i<j} p_i p_j ||C_ij(w)||_F^2`; uniform `p` gives the plain
/// all-pairs objective scaled by `1/d^2`.
#[derive(Clone, Debug)]
pub struct DecorrProblem<T> {
    features: Vec<Array2<T>>,
    /// All RFF blocks side by side (`n x sum M_j`); block `j` starts at `offsets[j]`.
    stacked: Array2<T>,
    offsets: Vec<usize>,
    probs: Vec<T>,
    estimator: CrossCovEstimator,
    n: usize,
}

impl<T: Scalar> DecorrProblem<T> {
    pub fn new(
        batch: &FeatureBatch<T>,
        maps: &FeatureMaps<T>,
        probs: &[T],
        standardize: bool,
        estimator: CrossCovEstimator,
    ) -> Result<Self> {
        let d = batch.d();
        if d < 2 {
            return invalid("decorrelation needs at least two features");
        }
        if batch.n() < 2 {
            return invalid("decorrelation needs at least two samples");
        }
        if maps.num_features() != d {
            return invalid(format!("{} rff maps for {d} features", maps.num_features()));
        }
        if probs.len() != d {
            return invalid(format!(
                "{} feature probabilities for {d} features",
                probs.len()
            ));
        }
        if probs.iter().any(|&p| !(p >= T::zero()) || !p.is_finite()) {
            return invalid("feature probabilities must be finite and nonnegative");
        }
        let values = if standardize {
            standardize_columns(batch.values())
        } else {
            batch.values().to_owned()
        };
        let features = (0..d)
            .map(|j| {
                let column: Vec<T> = values.column(j).to_vec();
                maps.maps[j].apply_column(&column)
            })
            .collect::<Result<Vec<Array2<T>>>>()?;
        let views: Vec<_> = features.iter().map(|f| f.view()).collect();
        let stacked = ndarray::concatenate(Axis(1), &views).expect("blocks share the row count");
        let mut offsets = Vec::with_capacity(d + 1);
        offsets.push(0);
        for f in &features {
            offsets.push(offsets.last().copied().unwrap_or(0) + f.ncols());
        }
        Ok(DecorrProblem {
            features,
            stacked,
            offsets,
            probs: probs.to_vec(),
            estimator,
            n: batch.n(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.features.len()
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// RFF features of column `j` (`n x M`).
    pub fn features(&self, j: usize) -> &Array2<T> {
        &self.features[j]
    }

    /// `sum_{i<j} p_i p_j`.
    pub fn pair_mass(&self) -> T {
        let mut total = T::zero();
        for i in 0..self.d() {
            for j in i + 1..self.d() {
                total += self.probs[i] * self.probs[j];
            }
        }
        total
    }

    fn check_weights(&self, w: &[T]) -> Result<()> {
        if w.len() != self.n {
            return invalid(format!("{} weights for {} samples", w.len(), self.n));
        }
        Ok(())
    }

    /// `||C_ij(w)||_F^2` for one pair, without the probability factor.
    pub fn pair_term(&self, i: usize, j: usize, w: &[T]) -> Result<T> {
        if i == j {
            return invalid("a feature is not paired with itself");
        }
        if i >= self.d() || j >= self.d() {
            return invalid("feature index out of range");
        }
        self.check_weights(w)?;
        let cov = self
            .estimator
            .cross_cov(self.features[i].view(), self.features[j].view(), w)?;
        frob_norm_sq(cov.view())
    }

    /// Pair terms are reduced in `(i, j)` lexicographic order.
    pub fn value(&self, w: &[T]) -> Result<T> {
        self.check_weights(w)?;
        if self.estimator == CrossCovEstimator::WeightedMoments {
            return Ok(self.moments(w, false)?.0);
        }
        let mut total = T::zero();
        for i in 0..self.d() {
            for j in i + 1..self.d() {
                let pw = self.probs[i] * self.probs[j];
                if pw == T::zero() {
                    continue;
                }
                total += pw * self.pair_term(i, j, w)?;
            }
        }
        Ok(total)
    }

    pub fn value_and_grad(&self, w: &[T]) -> Result<(T, Vec<T>)> {
        self.check_weights(w)?;
        if self.estimator == CrossCovEstimator::WeightedMoments {
            let (value, grad) = self.moments(w, true)?;
            return Ok((value, grad.expect("gradient requested")));
        }
        let mut grad = vec![T::zero(); self.n];
        let mut total = T::zero();
        for i in 0..self.d() {
            for j in i + 1..self.d() {
                let pw = self.probs[i] * self.probs[j];
                if pw == T::zero() {
                    continue;
                }
                let term = self.estimator.frob_sq_with_grad(
                    self.features[i].view(),
                    self.features[j].view(),
                    w,
                    pw,
                    &mut grad,
                )?;
                total += pw * term;
            }
        }
        Ok((total, grad))
    }

    /// Every pair at once for the weighted-moment estimator. The pair covariances are
    /// the off-diagonal blocks of `G = F_c^T diag(w) F_c / (n-1)` with `F_c` the stacked
    /// features centered at their weighted means. With `W` holding `p_i p_j C_ij` in
    /// block `(i, j)`, `i < j`, the gradient is
    /// `2/(n-1) [rowsum((F_c W) o F_c) - F (W + W^T) z / n]`, `z = (n - sum w) mu`.
    fn moments(&self, w: &[T], with_grad: bool) -> Result<(T, Option<Vec<T>>)> {
        let nt = T::of(self.n as f64);
        let denom = T::of((self.n - 1) as f64);
        let wv = ArrayView1::from(w);
        let f = &self.stacked;
        let mu = f.t().dot(&wv).mapv(|x| x / nt);
        let fc = f - &mu;
        let fw = &fc * &wv.insert_axis(Axis(1));
        let g = fw.t().dot(&fc);
        let m = f.ncols();
        let mut pair_cov = Array2::<T>::zeros((m, m));
        let mut total = T::zero();
        for i in 0..self.d() {
            for j in i + 1..self.d() {
                let pw = self.probs[i] * self.probs[j];
                if pw == T::zero() {
                    continue;
                }
                let (ri, rj) = (
                    self.offsets[i]..self.offsets[i + 1],
                    self.offsets[j]..self.offsets[j + 1],
                );
                let block = g.slice(s![ri.clone(), rj.clone()]).mapv(|x| x / denom);
                total += pw * frob_norm_sq(block.view())?;
                pair_cov
                    .slice_mut(s![ri, rj])
                    .assign(&block.mapv(|x| x * pw));
            }
        }
        if !with_grad {
            return Ok((total, None));
        }
        let slack = nt - w.iter().copied().sum::<T>();
        let z = mu.mapv(|x| x * slack);
        let main = (&fc.dot(&pair_cov) * &fc).sum_axis(Axis(1));
        let corr = f.dot(&(pair_cov.dot(&z) + pair_cov.t().dot(&z)));
        let coef = T::of(2.0) / denom;
        let grad = main
            .iter()
            .zip(corr.iter())
            .map(|(&a, &c)| coef * (a - c / nt))
            .collect();
        Ok((total, Some(grad)))
    }
}

/// Dependence score of features `i` and `j` under weights `w`.
pub fn pair_independence<T: Scalar>(
    batch: &FeatureBatch<T>,
    i: usize,
    j: usize,
    maps: &FeatureMaps<T>,
    w: &WeightVector<T>,
    standardize: bool,
    estimator: CrossCovEstimator,
) -> Result<T> {
    if i == j {
        return invalid("pair_independence needs two distinct features");
    }
    let d = batch.d();
    let uniform = vec![T::one() / T::of(d.max(1) as f64); d];
    DecorrProblem::new(batch, maps, &uniform, standardize, estimator)?.pair_term(i, j, w.as_slice())
}

pub fn decorrelation_objective<T: Scalar>(
    batch: &FeatureBatch<T>,
    w: &WeightVector<T>,
    maps: &FeatureMaps<T>,
    probs: &[T],
    standardize: bool,
    estimator: CrossCovEstimator,
) -> Result<T> {
    DecorrProblem::new(batch, maps, probs, standardize, estimator)?.value(w.as_slice())
}

/// Exact gradient of [`decorrelation_objective`] with respect to each weight.
pub fn objective_grad_w<T: Scalar>(
    batch: &FeatureBatch<T>,
    w: &WeightVector<T>,
    maps: &FeatureMaps<T>,
    probs: &[T],
    standardize: bool,
    estimator: CrossCovEstimator,
) -> Result<Vec<T>> {
    Ok(
        DecorrProblem::new(batch, maps, probs, standardize, estimator)?
            .value_and_grad(w.as_slice())?
            .1,
    )
}
