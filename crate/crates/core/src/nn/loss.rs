use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{invalid, Result};
use crate::Scalar;

/// Floor applied to the true-class probability inside the log.
pub const LOG_PROB_FLOOR: f64 = 1e-12;

/// Softmax with max subtraction.
pub fn softmax<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    if v.is_empty() {
        return invalid("softmax of an empty vector");
    }
    if v.iter().any(|x| !x.is_finite()) {
        return invalid("softmax input contains non-finite values");
    }
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = v.iter().map(|&x| (x - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Row-wise softmax of a logit matrix.
pub fn softmax_rows<T: Scalar>(logits: ArrayView2<T>) -> Array2<T> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|x| (x - max).exp());
        let total: T = row.iter().copied().sum();
        row.mapv_inplace(|x| x / total);
    }
    out
}

/// `-log p[label]`, with the probability floored at [`LOG_PROB_FLOOR`].
pub fn cross_entropy<T: Scalar>(probs: &[T], label: usize) -> Result<T> {
    if label >= probs.len() {
        return invalid(format!(
            "label {label} out of range for {} classes",
            probs.len()
        ));
    }
    Ok(-probs[label].max(T::of(LOG_PROB_FLOOR)).ln())
}

/// Cross-entropy against an explicit one-hot vector.
pub fn cross_entropy_one_hot<T: Scalar>(probs: &[T], one_hot: &[T]) -> Result<T> {
    if probs.len() != one_hot.len() {
        return invalid("probability and label vectors differ in length");
    }
    let label = one_hot_index(one_hot)?;
    cross_entropy(probs, label)
}

pub fn one_hot_index<T: Scalar>(one_hot: &[T]) -> Result<usize> {
    let mut hot = None;
    for (i, &v) in one_hot.iter().enumerate() {
        if v == T::one() {
            if hot.is_some() {
                return invalid("label has more than one hot entry");
            }
            hot = Some(i);
        } else if v != T::zero() {
            return invalid("label entries must be 0 or 1");
        }
    }
    hot.ok_or_else(|| crate::SgfdError::InvalidArgument("label has no hot entry".into()))
}

/// Mean softmax cross-entropy over a batch of logits, with its gradient w.r.t. the logits.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: ArrayView2<T>,
    labels: &[usize],
) -> Result<(T, Array2<T>)> {
    let n = logits.nrows();
    if n == 0 || labels.len() != n {
        return invalid("logit rows and labels must be non-empty and equal in number");
    }
    let mut probs = softmax_rows(logits);
    let mut loss = T::zero();
    let scale = T::one() / T::of(n as f64);
    for (mut row, &label) in probs.axis_iter_mut(Axis(0)).zip(labels) {
        let row_slice = row.as_slice().expect("owned rows are contiguous");
        loss += cross_entropy(row_slice, label)?;
        row[label] -= T::one();
        row.mapv_inplace(|g| g * scale);
    }
    Ok((loss * scale, probs))
}
