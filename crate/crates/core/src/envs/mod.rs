//! Seeded synthetic environments with one feature that varies across training environments.

mod bandit;
mod dataset;
mod pointmass;
mod shifted;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use bandit::{
    make_spurious_bandit, BanditConfig, SpuriousBandit, CHANGED_INDEX, NUISANCE_INDEX,
    RELEVANT_INDEX,
};
pub use dataset::{
    collect_dataset, dataset_features, read_dataset_csv, write_dataset_csv, DatasetRow,
    DATASET_FORMAT_VERSION,
};
pub use pointmass::{make_pointmass, PointMass, PointmassConfig, MASS_INDEX};
pub use shifted::{shifted_feature_batch, ShiftedFeatureConfig};

/// Result of one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// A seeded episodic environment with actions in `[-1, 1]^A`.
pub trait Env: Send {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    /// The per-environment parameter that changes across environments.
    fn variation_value(&self) -> f64;
    /// Index of the state feature that carries the varying parameter.
    fn changed_feature_index(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    /// Out-of-range action components are clipped with a warning.
    fn step(&mut self, action: &[f64]) -> Result<EnvStep>;
}

/// Clips each component into `[-1, 1]`, warning once per call when anything was clipped.
pub fn clip_action(action: &[f64], expected: usize) -> Result<Vec<f64>> {
    if action.len() != expected {
        return invalid(format!(
            "expected {expected} action components, got {}",
            action.len()
        ));
    }
    if action.iter().any(|a| a.is_nan()) {
        return invalid("action contains NaN");
    }
    if action.iter().any(|a| a.abs() > 1.0) {
        log::warn!("action {action:?} outside [-1, 1]; clipping");
    }
    Ok(action.iter().map(|a| a.clamp(-1.0, 1.0)).collect())
}

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Interpolation,
    #[default]
    Extrapolation,
}

impl EvalMode {
    pub const ALL: [EvalMode; 2] = [EvalMode::Interpolation, EvalMode::Extrapolation];

    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Interpolation => "interpolation",
            EvalMode::Extrapolation => "extrapolation",
        }
    }
}

/// Held-out variation values, strictly inside (interpolation) or strictly
/// outside (extrapolation) the training range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSuite {
    pub mode: EvalMode,
    pub train_range: (f64, f64),
    pub test_values: Vec<f64>,
}

impl EvalSuite {
    pub fn new(mode: EvalMode, train_range: (f64, f64), test_values: Vec<f64>) -> Result<Self> {
        let (lo, hi) = train_range;
        if !(lo < hi) {
            return invalid(format!("training range [{lo}, {hi}] is empty"));
        }
        if test_values.is_empty() {
            return invalid("an evaluation suite needs at least one test value");
        }
        for &v in &test_values {
            let inside = v > lo && v < hi;
            let outside = v < lo || v > hi;
            let ok = match mode {
                EvalMode::Interpolation => inside,
                EvalMode::Extrapolation => outside,
            };
            if !ok || !v.is_finite() {
                return invalid(format!(
                    "test value {v} violates the {} contract for range [{lo}, {hi}]",
                    mode.name()
                ));
            }
        }
        Ok(EvalSuite {
            mode,
            train_range,
            test_values,
        })
    }
}

/// Evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Midpoints between consecutive training values: the default interpolation set.
pub fn midpoints(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Held-out environments built from an [`EvalSuite`].
pub struct EvalSet {
    pub suite: EvalSuite,
    pub envs: Vec<Box<dyn Env>>,
}

/// Training environments plus one held-out set per [`EvalMode`].
pub struct EnvSuite {
    pub train: Vec<Box<dyn Env>>,
    pub evals: Vec<EvalSet>,
}

impl EnvSuite {
    pub fn eval_set(&mut self, mode: EvalMode) -> &mut EvalSet {
        self.evals
            .iter_mut()
            .find(|s| s.suite.mode == mode)
            .expect("every mode has an eval set")
    }
}

#[cfg(test)]
mod tests;
