use serde::{Deserialize, Serialize};

use super::batch::{project_weights, FeatureBatch, WeightVector};
use super::estimator::CrossCovEstimator;
use super::objective::DecorrProblem;
use crate::error::{invalid, Result, SgfdError};
use crate::nn::{Optimizer, OptimizerConfig};
use crate::rff::FeatureMaps;
use crate::Scalar;

/// Settings for learning sample weights on one batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecorrConfig {
    /// Random Fourier functions per feature.
    pub rff_count: usize,
    /// Weight-optimization steps per batch.
    pub inner_iters: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Applied to `w - 1`, pulling toward uniform weights.
    pub weight_decay: f64,
    pub standardize_features: bool,
    pub estimator: CrossCovEstimator,
    /// Take steps on the gradient with respect to `w / n` and divide the pair
    /// weights by `sum_{i<j} p_i p_j`. Neither changes the minimizer; both keep
    /// the step size independent of batch size and of how peaked `p` is.
    pub normalize_step: bool,
    pub nonnegative: bool,
}

impl Default for DecorrConfig {
    fn default() -> Self {
        DecorrConfig {
            rff_count: 5,
            inner_iters: 10,
            learning_rate: 1.0,
            momentum: 0.9,
            weight_decay: 1e-4,
            standardize_features: true,
            estimator: CrossCovEstimator::WeightedMoments,
            normalize_step: true,
            nonnegative: true,
        }
    }
}

impl DecorrConfig {
    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig::sgd(self.learning_rate, self.momentum, self.weight_decay)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rff_count == 0 {
            return Err(SgfdError::Config {
                field: "decorr.rff_count".into(),
                message: "must be at least 1".into(),
            });
        }
        if self.inner_iters == 0 {
            return Err(SgfdError::Config {
                field: "decorr.inner_iters".into(),
                message: "must be at least 1".into(),
            });
        }
        self.optimizer().validate().map_err(|e| SgfdError::Config {
            field: "decorr.learning_rate/momentum/weight_decay".into(),
            message: e.to_string(),
        })
    }
}

/// One row of the objective trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
    pub weight_min: f64,
    pub weight_max: f64,
    pub weight_entropy: f64,
}

impl TracePoint {
    fn new<T: Scalar>(iteration: usize, objective: T, w: &WeightVector<T>) -> Self {
        TracePoint {
            iteration,
            objective: objective.as_f64(),
            weight_min: w.min().as_f64(),
            weight_max: w.max().as_f64(),
            weight_entropy: w.entropy().as_f64(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct WeightOutcome<T> {
    pub weights: WeightVector<T>,
    pub initial_objective: T,
    pub final_objective: T,
    pub trace: Vec<TracePoint>,
}

/// Learns sample weights for one batch by SGD with momentum from `w = 1`,
/// projecting onto `sum w = n` after every step.
pub fn optimize_weights<T: Scalar>(
    batch: &FeatureBatch<T>,
    maps: &FeatureMaps<T>,
    probs: &[T],
    cfg: &DecorrConfig,
) -> Result<WeightOutcome<T>> {
    cfg.validate()?;
    let problem = DecorrProblem::new(batch, maps, probs, cfg.standardize_features, cfg.estimator)?;
    optimize_problem(&problem, cfg)
}

pub fn optimize_problem<T: Scalar>(
    problem: &DecorrProblem<T>,
    cfg: &DecorrConfig,
) -> Result<WeightOutcome<T>> {
    if cfg.inner_iters == 0 {
        return invalid("inner_iters must be at least 1");
    }
    let n = problem.n();
    let mut weights = WeightVector::uniform(n);
    let initial = problem.value(weights.as_slice())?;
    if !initial.is_finite() {
        return Err(SgfdError::Divergence(
            "initial decorrelation objective is not finite".into(),
        ));
    }
    let mut trace = vec![TracePoint::new(0, initial, &weights)];
    let pair_mass = problem.pair_mass();
    if initial == T::zero() || pair_mass == T::zero() {
        for it in 1..=cfg.inner_iters {
            trace.push(TracePoint::new(it, initial, &weights));
        }
        return Ok(WeightOutcome {
            weights,
            initial_objective: initial,
            final_objective: initial,
            trace,
        });
    }
    let scale = if cfg.normalize_step {
        T::of(n as f64) / pair_mass
    } else {
        T::one()
    };
    let mut opt = Optimizer::<T>::new(cfg.optimizer())?.with_decay_center(T::one());
    let mut current = initial;
    let mut grad = problem.value_and_grad(weights.as_slice())?.1;
    for it in 1..=cfg.inner_iters {
        grad.iter_mut().for_each(|g| *g *= scale);
        let mut raw = weights.into_vec();
        opt.step(&mut raw, &grad)?;
        weights = project_weights(&raw, cfg.nonnegative);
        if it < cfg.inner_iters {
            (current, grad) = problem.value_and_grad(weights.as_slice())?;
        } else {
            current = problem.value(weights.as_slice())?;
        }
        if !current.is_finite() {
            return Err(SgfdError::Divergence(format!(
                "decorrelation objective became non-finite at iteration {it}"
            )));
        }
        trace.push(TracePoint::new(it, current, &weights));
    }
    Ok(WeightOutcome {
        weights,
        initial_objective: initial,
        final_objective: current,
        trace,
    })
}
