//! Random Fourier functions `x -> sqrt(2) cos(omega x + phase)` applied to scalar
//! feature columns.

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{self, Rng};
use crate::Scalar;

/// `M` frequency/phase pairs. Frequencies are standard normal, phases uniform on `[0, 2pi)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RffMap<T> {
    omegas: Vec<T>,
    phases: Vec<T>,
}

impl<T: Scalar> RffMap<T> {
    pub fn sample(count: usize, rng: &mut Rng) -> Result<Self> {
        if count == 0 {
            return invalid("an rff map needs at least one function");
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut omegas = Vec::with_capacity(count);
        let mut phases = Vec::with_capacity(count);
        for _ in 0..count {
            omegas.push(rng::normal::<T>(rng));
            let mut phase = T::of(rng.random::<f64>() * two_pi);
            // Rounding into f32 can land exactly on 2pi.
            if phase >= T::of(two_pi) {
                phase = T::zero();
            }
            phases.push(phase);
        }
        Ok(RffMap { omegas, phases })
    }

    pub fn with_seed(count: usize, seed: u64) -> Result<Self> {
        Self::sample(count, &mut rng::seeded(seed))
    }

    pub fn from_parts(omegas: Vec<T>, phases: Vec<T>) -> Result<Self> {
        if omegas.is_empty() || omegas.len() != phases.len() {
            return invalid("frequencies and phases must be non-empty and equal in number");
        }
        let two_pi = T::PI() + T::PI();
        if phases.iter().any(|&p| !(p >= T::zero() && p < two_pi)) {
            return invalid("phases must lie in [0, 2pi)");
        }
        if omegas.iter().any(|w| !w.is_finite()) {
            return invalid("frequencies must be finite");
        }
        Ok(RffMap { omegas, phases })
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn omegas(&self) -> &[T] {
        &self.omegas
    }

    pub fn phases(&self) -> &[T] {
        &self.phases
    }

    #[inline]
    fn eval(&self, m: usize, x: T) -> T {
        T::SQRT_2() * (self.omegas[m] * x + self.phases[m]).cos()
    }

    pub fn apply(&self, x: T) -> Result<Vec<T>> {
        if !x.is_finite() {
            return invalid("rff input must be finite");
        }
        Ok((0..self.len()).map(|m| self.eval(m, x)).collect())
    }

    /// Maps a column of `n` values to an `n x M` matrix.
    pub fn apply_column(&self, column: &[T]) -> Result<Array2<T>> {
        if column.iter().any(|x| !x.is_finite()) {
            return invalid("rff input must be finite");
        }
        let m = self.len();
        Ok(Array2::from_shape_fn((column.len(), m), |(k, j)| {
            self.eval(j, column[k])
        }))
    }
}

/// One independent map per feature index, held fixed for a whole run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMaps<T> {
    pub maps: Vec<RffMap<T>>,
}

impl<T: Scalar> FeatureMaps<T> {
    pub fn sample(num_features: usize, count: usize, rng: &mut Rng) -> Result<Self> {
        let maps = (0..num_features)
            .map(|_| RffMap::sample(count, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureMaps { maps })
    }

    pub fn with_seed(num_features: usize, count: usize, seed: u64) -> Result<Self> {
        Self::sample(num_features, count, &mut rng::seeded(seed))
    }

    pub fn num_features(&self) -> usize {
        self.maps.len()
    }

    pub fn functions_per_feature(&self) -> usize {
        self.maps.first().map_or(0, RffMap::len)
    }

    pub fn get(&self, feature: usize) -> Option<&RffMap<T>> {
        self.maps.get(feature)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    #[test]
    fn sampling_is_deterministic() {
        let a = RffMap::<f64>::with_seed(5, 3).unwrap();
        let b = RffMap::<f64>::with_seed(5, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
    }

    #[test]
    fn zero_count_is_rejected() {
        assert!(RffMap::<f64>::with_seed(0, 1).is_err());
    }

    #[test]
    fn frequencies_are_standard_normal() {
        let map = RffMap::<f64>::with_seed(10_000, 17).unwrap();
        let n = map.len() as f64;
        let mean = map.omegas().iter().sum::<f64>() / n;
        let var = map.omegas().iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "variance {var}");
        assert!(map.phases().iter().all(|&p| (0.0..2.0 * PI).contains(&p)));
    }

    #[test]
    fn hand_evaluated_components() {
        let constant = RffMap::from_parts(vec![0.0f64], vec![0.0]).unwrap();
        assert_eq!(constant.apply(123.4).unwrap(), vec![SQRT_2]);
        let quarter = RffMap::from_parts(vec![1.0f64], vec![FRAC_PI_2]).unwrap();
        assert!(quarter.apply(0.0).unwrap()[0].abs() < 1e-15);
        let half = RffMap::from_parts(vec![1.0f64], vec![0.0]).unwrap();
        assert!((half.apply(PI).unwrap()[0] + SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let map = RffMap::<f64>::with_seed(3, 1).unwrap();
        assert!(map.apply(f64::NAN).is_err());
        assert!(map.apply_column(&[0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn bad_parts_are_rejected() {
        assert!(RffMap::from_parts(vec![1.0f64], vec![7.0]).is_err());
        assert!(RffMap::from_parts(vec![1.0f64, 2.0], vec![0.0]).is_err());
    }

    #[test]
    fn column_matches_pointwise() {
        let map = RffMap::<f64>::with_seed(4, 8).unwrap();
        let col = [0.3, -1.0, 2.5];
        let feats = map.apply_column(&col).unwrap();
        for (k, &x) in col.iter().enumerate() {
            assert_eq!(feats.row(k).to_vec(), map.apply(x).unwrap());
        }
    }

    proptest! {
        #[test]
        fn components_are_bounded(seed in any::<u64>(), x in -1e6f64..1e6) {
            let map = RffMap::<f64>::with_seed(8, seed).unwrap();
            for v in map.apply(x).unwrap() {
                prop_assert!(v.abs() <= SQRT_2 + 1e-15);
            }
        }

        #[test]
        fn components_are_periodic(seed in any::<u64>(), x in -10.0f64..10.0) {
            let map = RffMap::<f64>::with_seed(4, seed).unwrap();
            let base = map.apply(x).unwrap();
            for (m, &w) in map.omegas().iter().enumerate() {
                if w.abs() > 0.05 {
                    let shifted = map.apply(x + 2.0 * PI / w).unwrap();
                    prop_assert!((shifted[m] - base[m]).abs() < 1e-9);
                }
            }
        }
    }
}
