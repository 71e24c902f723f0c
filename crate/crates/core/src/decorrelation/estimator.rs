use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::Scalar;

/// How sample weights enter the RFF cross-covariance.
///
/// Both forms reduce to the plain unbiased cross-covariance when every weight is one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossCovEstimator {
    /// `(1/(n-1)) sum_k w_k (u_k - mean_w u)(v_k - mean_w v)^T`: the covariance of
    /// the reweighted distribution. Driving it to zero decorrelates the weighted sample.
    #[default]
    WeightedMoments,
    /// `(1/(n-1)) sum_k (w_k u_k - mean(w u))(w_k v_k - mean(w v))^T`: the covariance
    /// of the weight-scaled features.
    ScaledFeatures,
}

fn check_inputs<T: Scalar>(u: &ArrayView2<T>, v: &ArrayView2<T>, w: &[T]) -> Result<usize> {
    let n = u.nrows();
    if v.nrows() != n || w.len() != n {
        return invalid(format!(
            "row counts differ: u {}, v {}, w {}",
            n,
            v.nrows(),
            w.len()
        ));
    }
    if n < 2 {
        return invalid("cross-covariance needs at least two samples");
    }
    Ok(n)
}

/// `(1/n) sum_k w_k x_k`, accumulated sample-major.
fn weighted_mean<T: Scalar>(x: &ArrayView2<T>, w: &[T]) -> Vec<T> {
    let n = T::of(x.nrows() as f64);
    let mut acc = vec![T::zero(); x.ncols()];
    for (row, &wk) in x.rows().into_iter().zip(w) {
        for (a, &xv) in acc.iter_mut().zip(row.iter()) {
            *a += wk * xv;
        }
    }
    for a in &mut acc {
        *a /= n;
    }
    acc
}

/// Row-major copy (or view) of an `n x M` feature block.
fn rows<'a, T: Scalar>(x: &'a ArrayView2<T>) -> std::borrow::Cow<'a, [T]> {
    match x.as_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(x.iter().copied().collect()),
    }
}

/// Shared accumulation of both estimators: `cov[a][b] += (s_k * du[a]) * dv[b]`
/// with the deviations produced per sample by `dev`.
fn accumulate_cov<T: Scalar>(
    u: &ArrayView2<T>,
    v: &ArrayView2<T>,
    mut dev: impl FnMut(usize, &[T], &[T], &mut [T], &mut [T]) -> T,
) -> Array2<T> {
    let (n, mu, mv) = (u.nrows(), u.ncols(), v.ncols());
    let (us, vs) = (rows(u), rows(v));
    let mut cov = vec![T::zero(); mu * mv];
    let mut du = vec![T::zero(); mu];
    let mut dv = vec![T::zero(); mv];
    for k in 0..n {
        let scale = dev(
            k,
            &us[k * mu..(k + 1) * mu],
            &vs[k * mv..(k + 1) * mv],
            &mut du,
            &mut dv,
        );
        for (a, &xa) in du.iter().enumerate() {
            let sx = scale * xa;
            for (c, &yb) in cov[a * mv..(a + 1) * mv].iter_mut().zip(&dv) {
                *c += sx * yb;
            }
        }
    }
    let denom = T::of((n - 1) as f64);
    Array2::from_shape_vec((mu, mv), cov.into_iter().map(|c| c / denom).collect())
        .expect("shape matches")
}

/// Plain unbiased cross-covariance `(1/(n-1)) sum_k (u_k - mean u)(v_k - mean v)^T`.
pub fn cross_cov<T: Scalar>(u: ArrayView2<T>, v: ArrayView2<T>) -> Result<Array2<T>> {
    let n = u.nrows();
    if v.nrows() != n {
        return invalid(format!("row counts differ: u {n}, v {}", v.nrows()));
    }
    if n < 2 {
        return invalid("cross-covariance needs at least two samples");
    }
    let nt = T::of(n as f64);
    let mean = |x: &ArrayView2<T>| -> Vec<T> {
        let mut m = vec![T::zero(); x.ncols()];
        for row in x.rows() {
            for (a, &xv) in m.iter_mut().zip(row.iter()) {
                *a += xv;
            }
        }
        m.into_iter().map(|a| a / nt).collect()
    };
    let (mu, mv) = (mean(&u), mean(&v));
    let mut cov = Array2::<T>::zeros((u.ncols(), v.ncols()));
    for k in 0..n {
        for a in 0..u.ncols() {
            let du = u[[k, a]] - mu[a];
            for b in 0..v.ncols() {
                cov[[a, b]] += du * (v[[k, b]] - mv[b]);
            }
        }
    }
    let denom = T::of((n - 1) as f64);
    Ok(cov.mapv(|c| c / denom))
}

/// Covariance of the weight-scaled RFF features (the literal weighted form).
pub fn weighted_cross_cov<T: Scalar>(
    u: ArrayView2<T>,
    v: ArrayView2<T>,
    w: &[T],
) -> Result<Array2<T>> {
    check_inputs(&u, &v, w)?;
    let gu = weighted_mean(&u, w);
    let gv = weighted_mean(&v, w);
    Ok(accumulate_cov(&u, &v, |k, uk, vk, du, dv| {
        let wk = w[k];
        for ((d, &x), &m) in du.iter_mut().zip(uk).zip(&gu) {
            *d = wk * x - m;
        }
        for ((d, &x), &m) in dv.iter_mut().zip(vk).zip(&gv) {
            *d = wk * x - m;
        }
        T::one()
    }))
}

/// Covariance of the reweighted distribution.
pub fn weighted_moment_cross_cov<T: Scalar>(
    u: ArrayView2<T>,
    v: ArrayView2<T>,
    w: &[T],
) -> Result<Array2<T>> {
    check_inputs(&u, &v, w)?;
    let mu = weighted_mean(&u, w);
    let mv = weighted_mean(&v, w);
    Ok(accumulate_cov(&u, &v, |k, uk, vk, du, dv| {
        for ((d, &x), &m) in du.iter_mut().zip(uk).zip(&mu) {
            *d = x - m;
        }
        for ((d, &x), &m) in dv.iter_mut().zip(vk).zip(&mv) {
            *d = x - m;
        }
        w[k]
    }))
}

/// Sum of squared entries.
pub fn frob_norm_sq<T: Scalar>(m: ArrayView2<T>) -> Result<T> {
    if m.iter().any(|x| !x.is_finite()) {
        return invalid("matrix has non-finite entries");
    }
    Ok(m.iter().map(|&x| x * x).sum())
}

fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

/// `out = C y` for a row-major `rows x cols` matrix.
fn mat_vec<T: Scalar>(c: &[T], cols: usize, y: &[T], out: &mut [T]) {
    for (o, row) in out.iter_mut().zip(c.chunks_exact(cols)) {
        *o = dot(row, y);
    }
}

/// `out = C^T x` for a row-major `rows x cols` matrix.
fn mat_t_vec<T: Scalar>(c: &[T], cols: usize, x: &[T], out: &mut [T]) {
    out.iter_mut().for_each(|o| *o = T::zero());
    for (row, &xa) in c.chunks_exact(cols).zip(x) {
        for (o, &cab) in out.iter_mut().zip(row) {
            *o += xa * cab;
        }
    }
}

impl CrossCovEstimator {
    pub fn cross_cov<T: Scalar>(
        self,
        u: ArrayView2<T>,
        v: ArrayView2<T>,
        w: &[T],
    ) -> Result<Array2<T>> {
        match self {
            CrossCovEstimator::WeightedMoments => weighted_moment_cross_cov(u, v, w),
            CrossCovEstimator::ScaledFeatures => weighted_cross_cov(u, v, w),
        }
    }

    /// `||C||_F^2` and its gradient with respect to every weight, accumulated into
    /// `grad` after scaling by `pair_weight`. Weights are not assumed to sum to `n`.
    pub(crate) fn frob_sq_with_grad<T: Scalar>(
        self,
        u: ArrayView2<T>,
        v: ArrayView2<T>,
        w: &[T],
        pair_weight: T,
        grad: &mut [T],
    ) -> Result<T> {
        let n = u.nrows();
        let (m_u, m_v) = (u.ncols(), v.ncols());
        let cov = self.cross_cov(u, v, w)?;
        let value = frob_norm_sq(cov.view())?;
        let c = cov.as_slice().expect("fresh matrices are contiguous");
        let coef = T::of(2.0) * pair_weight / T::of((n - 1) as f64);
        let nt = T::of(n as f64);
        let (us, vs) = (rows(&u), rows(&v));
        let mut cy = vec![T::zero(); m_u];
        let mut a = vec![T::zero(); m_u];
        let mut b = vec![T::zero(); m_v];
        match self {
            CrossCovEstimator::WeightedMoments => {
                // dC/dw_k = [a_k b_k^T - u_k B^T / n - A v_k^T / n] / (n-1)
                // with A = sum_l w_l a_l = (n - S) mean_w u, likewise B.
                let mu = weighted_mean(&u, w);
                let mv = weighted_mean(&v, w);
                let s: T = w.iter().copied().sum();
                let slack = nt - s;
                let big_a: Vec<T> = mu.iter().map(|&m| m * slack).collect();
                let big_b: Vec<T> = mv.iter().map(|&m| m * slack).collect();
                let mut cb = vec![T::zero(); m_u];
                let mut cta = vec![T::zero(); m_v];
                mat_vec(c, m_v, &big_b, &mut cb);
                mat_t_vec(c, m_v, &big_a, &mut cta);
                for k in 0..n {
                    let uk = &us[k * m_u..(k + 1) * m_u];
                    let vk = &vs[k * m_v..(k + 1) * m_v];
                    a.iter_mut()
                        .zip(uk)
                        .zip(&mu)
                        .for_each(|((d, &x), &m)| *d = x - m);
                    b.iter_mut()
                        .zip(vk)
                        .zip(&mv)
                        .for_each(|((d, &x), &m)| *d = x - m);
                    mat_vec(c, m_v, &b, &mut cy);
                    let main = dot(&a, &cy);
                    let corr = (dot(uk, &cb) + dot(&cta, vk)) / nt;
                    grad[k] += coef * (main - corr);
                }
            }
            CrossCovEstimator::ScaledFeatures => {
                // dC/dw_k = [u_k (h_k - mean h)^T + (g_k - mean g) v_k^T] / (n-1), g = w u, h = w v
                let gu = weighted_mean(&u, w);
                let gv = weighted_mean(&v, w);
                let mut cv = vec![T::zero(); m_u];
                for k in 0..n {
                    let uk = &us[k * m_u..(k + 1) * m_u];
                    let vk = &vs[k * m_v..(k + 1) * m_v];
                    a.iter_mut()
                        .zip(uk)
                        .zip(&gu)
                        .for_each(|((d, &x), &m)| *d = w[k] * x - m);
                    b.iter_mut()
                        .zip(vk)
                        .zip(&gv)
                        .for_each(|((d, &x), &m)| *d = w[k] * x - m);
                    mat_vec(c, m_v, &b, &mut cy);
                    mat_vec(c, m_v, vk, &mut cv);
                    grad[k] += coef * (dot(uk, &cy) + dot(&a, &cv));
                }
            }
        }
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::SQRT_2;

    /// Plain unbiased cross-covariance, written independently of the weighted paths.
    fn unweighted(u: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
        let n = u.nrows();
        let mut mu = vec![0.0; u.ncols()];
        let mut mv = vec![0.0; v.ncols()];
        for k in 0..n {
            for a in 0..u.ncols() {
                mu[a] += u[[k, a]];
            }
            for b in 0..v.ncols() {
                mv[b] += v[[k, b]];
            }
        }
        mu.iter_mut().for_each(|m| *m /= n as f64);
        mv.iter_mut().for_each(|m| *m /= n as f64);
        let mut c = Array2::<f64>::zeros((u.ncols(), v.ncols()));
        for k in 0..n {
            for a in 0..u.ncols() {
                for b in 0..v.ncols() {
                    c[[a, b]] += (u[[k, a]] - mu[a]) * (v[[k, b]] - mv[b]);
                }
            }
        }
        c.mapv(|x| x / (n - 1) as f64)
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = crate::rng::seeded(seed);
        Array2::from_shape_fn((rows, cols), |_| crate::rng::normal::<f64>(&mut rng))
    }

    #[test]
    fn two_sample_hand_value() {
        let u = array![[SQRT_2], [0.0]];
        let ones = [1.0, 1.0];
        for est in [
            CrossCovEstimator::WeightedMoments,
            CrossCovEstimator::ScaledFeatures,
        ] {
            let c = est.cross_cov(u.view(), u.view(), &ones).unwrap();
            assert!((c[[0, 0]] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_features_give_zero() {
        let u = Array2::from_elem((5, 3), 0.7);
        let v = random_matrix(5, 3, 1);
        let c = weighted_moment_cross_cov(u.view(), v.view(), &[1.0; 5]).unwrap();
        assert!(c.iter().all(|&x| x == 0.0));
        let c = weighted_cross_cov(u.view(), v.view(), &[1.0; 5]).unwrap();
        assert!(c.iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn uniform_weights_reduce_to_unweighted_bit_for_bit() {
        for seed in 0..10 {
            let u = random_matrix(17, 5, seed);
            let v = random_matrix(17, 5, seed + 100);
            let ones = vec![1.0; 17];
            let reference = unweighted(&u, &v);
            assert_eq!(
                weighted_moment_cross_cov(u.view(), v.view(), &ones).unwrap(),
                reference
            );
            assert_eq!(
                weighted_cross_cov(u.view(), v.view(), &ones).unwrap(),
                reference
            );
        }
    }

    #[test]
    fn rejects_short_or_mismatched_inputs() {
        let u = random_matrix(1, 2, 0);
        assert!(weighted_cross_cov(u.view(), u.view(), &[1.0]).is_err());
        let u = random_matrix(3, 2, 0);
        let v = random_matrix(4, 2, 0);
        assert!(weighted_moment_cross_cov(u.view(), v.view(), &[1.0; 3]).is_err());
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(
            frob_norm_sq(Array2::<f64>::zeros((2, 2)).view()).unwrap(),
            0.0
        );
        assert_eq!(frob_norm_sq(Array2::<f64>::eye(2).view()).unwrap(), 2.0);
        assert_eq!(
            frob_norm_sq(array![[1.0, 2.0], [3.0, 4.0]].view()).unwrap(),
            30.0
        );
        assert!(frob_norm_sq(array![[f64::NAN]].view()).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for est in [
            CrossCovEstimator::WeightedMoments,
            CrossCovEstimator::ScaledFeatures,
        ] {
            let u = random_matrix(7, 3, 4);
            let v = random_matrix(7, 3, 5);
            let w: Vec<f64> = (0..7).map(|k| 0.5 + 0.2 * k as f64).collect();
            let mut grad = vec![0.0; 7];
            est.frob_sq_with_grad(u.view(), v.view(), &w, 0.3, &mut grad)
                .unwrap();
            let f = |w: &[f64]| {
                0.3 * frob_norm_sq(est.cross_cov(u.view(), v.view(), w).unwrap().view()).unwrap()
            };
            for k in 0..7 {
                let h = 1e-6;
                let mut wp = w.clone();
                wp[k] += h;
                let mut wm = w.clone();
                wm[k] -= h;
                let fd = (f(&wp) - f(&wm)) / (2.0 * h);
                let rel = (fd - grad[k]).abs() / (fd.abs() + grad[k].abs()).max(1e-8);
                assert!(rel < 1e-6, "{est:?} k={k}: fd {fd} vs {}", grad[k]);
            }
        }
    }
}
