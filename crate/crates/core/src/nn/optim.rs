use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SgfdError};
use crate::Scalar;

/// First-order optimizer settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    /// `buf <- momentum * buf + grad + weight_decay * (param - decay_center)`,
    /// `param <- param - lr * buf`.
    SgdMomentum {
        learning_rate: f64,
        momentum: f64,
        weight_decay: f64,
    },
    /// Adam with bias correction; weight decay is added to the gradient (L2 form).
    Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        weight_decay: f64,
    },
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig::Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn sgd(learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        OptimizerConfig::SgdMomentum {
            learning_rate,
            momentum,
            weight_decay,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            OptimizerConfig::SgdMomentum { learning_rate, .. }
            | OptimizerConfig::Adam { learning_rate, .. } => learning_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::SgdMomentum {
                learning_rate,
                momentum,
                weight_decay,
            } => {
                learning_rate > 0.0
                    && learning_rate.is_finite()
                    && (0.0..1.0).contains(&momentum)
                    && weight_decay >= 0.0
                    && weight_decay.is_finite()
            }
            OptimizerConfig::Adam {
                learning_rate,
                beta1,
                beta2,
                epsilon,
                weight_decay,
            } => {
                learning_rate > 0.0
                    && learning_rate.is_finite()
                    && (0.0..1.0).contains(&beta1)
                    && (0.0..1.0).contains(&beta2)
                    && epsilon > 0.0
                    && weight_decay >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("optimizer settings out of range: {self:?}"))
        }
    }
}

/// Optimizer state: settings plus per-parameter accumulators.
///
/// Accumulators are sized on the first step and every later step must pass the
/// same number of parameters.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    config: OptimizerConfig,
    decay_center: T,
    first: Vec<T>,
    second: Vec<T>,
    steps: u64,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Optimizer {
            config,
            decay_center: T::zero(),
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        })
    }

    /// Weight decay pulls parameters toward `center` instead of the origin.
    pub fn with_decay_center(mut self, center: T) -> Self {
        self.decay_center = center;
        self
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != grads.len() {
            return invalid(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            ));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(SgfdError::Divergence(format!(
                "non-finite gradient at parameter {i}"
            )));
        }
        if self.first.is_empty() {
            self.first = vec![T::zero(); params.len()];
            if matches!(self.config, OptimizerConfig::Adam { .. }) {
                self.second = vec![T::zero(); params.len()];
            }
        } else if self.first.len() != params.len() {
            return invalid(format!(
                "optimizer was sized for {} parameters, got {}",
                self.first.len(),
                params.len()
            ));
        }
        self.steps += 1;
        let center = self.decay_center;
        match self.config {
            OptimizerConfig::SgdMomentum {
                learning_rate,
                momentum,
                weight_decay,
            } => {
                let (lr, mu, wd) = (T::of(learning_rate), T::of(momentum), T::of(weight_decay));
                for ((p, &g), buf) in params.iter_mut().zip(grads).zip(self.first.iter_mut()) {
                    *buf = mu * *buf + g + wd * (*p - center);
                    *p -= lr * *buf;
                }
            }
            OptimizerConfig::Adam {
                learning_rate,
                beta1,
                beta2,
                epsilon,
                weight_decay,
            } => {
                let t = self.steps as i32;
                let c1 = T::of(1.0 - beta1.powi(t));
                let c2 = T::of(1.0 - beta2.powi(t));
                let (lr, b1, b2, eps, wd) = (
                    T::of(learning_rate),
                    T::of(beta1),
                    T::of(beta2),
                    T::of(epsilon),
                    T::of(weight_decay),
                );
                for (((p, &g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.first.iter_mut())
                    .zip(self.second.iter_mut())
                {
                    let g = g + wd * (*p - center);
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}
