use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{invalid, Result};
use crate::Scalar;

/// `n x d` latent feature values plus the environment each sample came from.
///
/// Environment labels are stored as class indices; the one-hot vector `e^k` is
/// available through [`FeatureBatch::env_one_hot`].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBatch<T> {
    values: Array2<T>,
    env_labels: Vec<usize>,
    num_envs: usize,
}

impl<T: Scalar> FeatureBatch<T> {
    pub fn new(values: Array2<T>, env_labels: Vec<usize>, num_envs: usize) -> Result<Self> {
        if env_labels.len() != values.nrows() {
            return invalid(format!(
                "{} rows but {} environment labels",
                values.nrows(),
                env_labels.len()
            ));
        }
        if num_envs == 0 {
            return invalid("at least one environment is required");
        }
        if let Some(&bad) = env_labels.iter().find(|&&k| k >= num_envs) {
            return invalid(format!(
                "environment label {bad} out of range for {num_envs} environments"
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("feature values must be finite");
        }
        Ok(FeatureBatch {
            values,
            env_labels,
            num_envs,
        })
    }

    /// Batch whose samples all come from environment 0.
    pub fn unlabeled(values: Array2<T>) -> Result<Self> {
        let n = values.nrows();
        Self::new(values, vec![0; n], 1)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn num_envs(&self) -> usize {
        self.num_envs
    }

    pub fn values(&self) -> ArrayView2<'_, T> {
        self.values.view()
    }

    pub fn env_labels(&self) -> &[usize] {
        &self.env_labels
    }

    pub fn env_one_hot(&self, sample: usize) -> Vec<T> {
        let mut e = vec![T::zero(); self.num_envs];
        e[self.env_labels[sample]] = T::one();
        e
    }

    pub fn column(&self, feature: usize) -> Vec<T> {
        self.values.column(feature).to_vec()
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureBatch<T> {
        FeatureBatch {
            values: self.values.select(Axis(0), rows),
            env_labels: rows.iter().map(|&r| self.env_labels[r]).collect(),
            num_envs: self.num_envs,
        }
    }
}

/// Per-column zero mean / unit (population) variance, with the variance floored
/// at `1e-8` so constant columns map to zeros.
pub fn standardize_columns<T: Scalar>(values: ArrayView2<T>) -> Array2<T> {
    let n = T::of(values.nrows().max(1) as f64);
    let floor = T::of(1e-8);
    let mut out = values.to_owned();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let mean = col.iter().copied().sum::<T>() / n;
        let var = col.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
        let scale = var.max(floor).sqrt();
        col.mapv_inplace(|x| (x - mean) / scale);
    }
    out
}

/// Sample weights with `sum w = n`.
///
/// Nonnegativity is enforced by [`WeightVector::new`]; signed weights are only
/// produced by [`project_weights`] with `nonnegative = false`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector<T>(Vec<T>);

fn sum_tolerance<T: Scalar>(n: usize) -> f64 {
    (1e-9f64).max(T::epsilon().as_f64() * 8.0 * n as f64)
}

impl<T: Scalar> WeightVector<T> {
    pub fn uniform(n: usize) -> Self {
        WeightVector(vec![T::one(); n])
    }

    pub fn new(w: Vec<T>) -> Result<Self> {
        if w.is_empty() {
            return invalid("weight vector is empty");
        }
        if w.iter().any(|x| !x.is_finite()) {
            return invalid("weights must be finite");
        }
        if w.iter().any(|&x| x < T::zero()) {
            return invalid("weights must be nonnegative");
        }
        let n = w.len();
        let sum: f64 = w.iter().map(|x| x.as_f64()).sum();
        if (sum - n as f64).abs() > sum_tolerance::<T>(n) * n as f64 {
            return invalid(format!("weights sum to {sum}, expected {n}"));
        }
        Ok(WeightVector(w))
    }

    /// `n * e_k`: all mass on one sample.
    pub fn one_hot(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return invalid("one-hot index out of range");
        }
        let mut w = vec![T::zero(); n];
        w[k] = T::of(n as f64);
        Ok(WeightVector(w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn min(&self) -> T {
        self.0.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.0.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Shannon entropy of `w / n` in nats; `ln n` for uniform weights.
    pub fn entropy(&self) -> T {
        let n = T::of(self.0.len() as f64);
        self.0
            .iter()
            .filter(|&&w| w > T::zero())
            .map(|&w| {
                let q = w / n;
                -q * q.ln()
            })
            .sum()
    }

    /// `(sum w)^2 / sum w^2`.
    pub fn effective_sample_size(&self) -> T {
        let s: T = self.0.iter().copied().sum();
        let s2: T = self.0.iter().map(|&w| w * w).sum();
        s * s / s2
    }

    pub fn permuted(&self, order: &[usize]) -> WeightVector<T> {
        WeightVector(order.iter().map(|&i| self.0[i]).collect())
    }
}

/// Maps raw weights back onto the feasible set `sum w = n`.
///
/// With `nonnegative`, negatives are clamped to zero before rescaling and an
/// all-zero result resets to uniform. Without it, the vector is shifted by a
/// constant (the Euclidean projection onto the constraint hyperplane).
pub fn project_weights<T: Scalar>(raw: &[T], nonnegative: bool) -> WeightVector<T> {
    let n = raw.len();
    let target = T::of(n as f64);
    if n == 0 {
        return WeightVector(Vec::new());
    }
    if !nonnegative {
        let sum: T = raw.iter().copied().sum();
        let shift = (target - sum) / target;
        return WeightVector(raw.iter().map(|&w| w + shift).collect());
    }
    let clamped: Vec<T> = raw
        .iter()
        .map(|&w| if w > T::zero() { w } else { T::zero() })
        .collect();
    let sum: T = clamped.iter().copied().sum();
    if !(sum > T::zero()) || !sum.is_finite() {
        return WeightVector::uniform(n);
    }
    let scale = target / sum;
    WeightVector(clamped.into_iter().map(|w| w * scale).collect())
}
