use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::decorrelation::FeatureBatch;
use crate::error::{invalid, Result};
use crate::rng::{self, Rng};

/// Standard-normal features where one column's mean moves by `shift` stds per environment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftedFeatureConfig {
    pub num_envs: usize,
    pub state_dim: usize,
    pub shifted_index: usize,
    /// Mean gap between adjacent environments, in units of the feature std.
    pub shift: f64,
}

impl Default for ShiftedFeatureConfig {
    fn default() -> Self {
        ShiftedFeatureConfig {
            num_envs: 4,
            state_dim: 6,
            shifted_index: 2,
            shift: 4.0,
        }
    }
}

/// `n` samples with balanced environment labels (`k = i mod K`).
pub fn shifted_feature_batch(
    cfg: &ShiftedFeatureConfig,
    n: usize,
    rng: &mut Rng,
) -> Result<FeatureBatch<f64>> {
    if cfg.shifted_index >= cfg.state_dim {
        return invalid("shifted feature index out of range");
    }
    if cfg.num_envs < 2 || !(cfg.shift >= 2.0) {
        return invalid("need at least two environments and a shift of at least two stds");
    }
    let labels: Vec<usize> = (0..n).map(|i| i % cfg.num_envs).collect();
    let mut values = Array2::from_shape_simple_fn((n, cfg.state_dim), || rng::normal::<f64>(rng));
    for (i, &k) in labels.iter().enumerate() {
        values[[i, cfg.shifted_index]] += cfg.shift * k as f64;
    }
    FeatureBatch::new(values, labels, cfg.num_envs)
}
