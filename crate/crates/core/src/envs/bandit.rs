use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{
    clip_action, linspace, midpoints, Env, EnvStep, EnvSuite, EvalMode, EvalSet, EvalSuite,
};
use crate::error::{Result, SgfdError};
use crate::rng::{self, Rng};

/// Contextual bandit whose optimal action depends on a changed feature that a
/// nuisance feature tracks only in the training environments.
///
/// State layout: `[z_changed, z_rel, z_nui, z_noise...]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditConfig {
    pub num_envs: usize,
    pub state_dim: usize,
    pub train_low: f64,
    pub train_high: f64,
    /// Within-environment std of the changed feature.
    pub changed_noise: f64,
    /// Target Pearson correlation of (z_changed, z_nui) over the pooled training data.
    pub nuisance_correlation: f64,
    pub changed_weight: f64,
    pub relevant_weight: f64,
    /// Mean shift of the first pure-noise feature across the training range.
    pub noise_shift: f64,
    pub reward_noise: f64,
    /// Defaults to the midpoints of the training values.
    pub interpolation_values: Option<Vec<f64>>,
    /// Defaults to `{lo - 1, hi + 1, hi + 2}`.
    pub extrapolation_values: Option<Vec<f64>>,
}

impl Default for BanditConfig {
    fn default() -> Self {
        BanditConfig {
            num_envs: 4,
            state_dim: 6,
            train_low: 1.0,
            train_high: 5.0,
            changed_noise: 0.3,
            nuisance_correlation: 0.8,
            changed_weight: 0.3,
            relevant_weight: 0.3,
            noise_shift: 0.5,
            reward_noise: 0.0,
            interpolation_values: None,
            extrapolation_values: None,
        }
    }
}

pub const CHANGED_INDEX: usize = 0;
pub const RELEVANT_INDEX: usize = 1;
pub const NUISANCE_INDEX: usize = 2;

impl BanditConfig {
    pub fn train_values(&self) -> Vec<f64> {
        linspace(self.train_low, self.train_high, self.num_envs)
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.train_low + self.train_high)
    }

    pub fn eval_suite(&self, mode: EvalMode) -> Result<EvalSuite> {
        let values = match mode {
            EvalMode::Interpolation => self
                .interpolation_values
                .clone()
                .unwrap_or_else(|| midpoints(&self.train_values())),
            EvalMode::Extrapolation => self.extrapolation_values.clone().unwrap_or_else(|| {
                vec![
                    self.train_low - 1.0,
                    self.train_high + 1.0,
                    self.train_high + 2.0,
                ]
            }),
        };
        EvalSuite::new(mode, (self.train_low, self.train_high), values)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(SgfdError::Config {
                field: format!("env.{field}"),
                message,
            })
        };
        if self.num_envs < 2 {
            return bad(
                "num_envs",
                "at least two training environments are required".into(),
            );
        }
        if self.state_dim < 3 {
            return bad(
                "state_dim",
                "the bandit needs at least three features".into(),
            );
        }
        if !(self.nuisance_correlation.abs() < 1.0) {
            return Err(SgfdError::InvalidArgument(format!(
                "nuisance correlation must satisfy |rho| < 1, got {}",
                self.nuisance_correlation
            )));
        }
        if !(self.changed_noise > 0.0) || !(self.reward_noise >= 0.0) {
            return bad("changed_noise", "noise levels must be positive".into());
        }
        // Adjacent environments must differ by at least two within-environment stds.
        let gap = (self.train_high - self.train_low) / (self.num_envs - 1) as f64;
        if !(gap >= 2.0 * self.changed_noise) {
            return bad(
                "changed_noise",
                format!(
                    "environment spacing {gap} is under two stds ({})",
                    self.changed_noise
                ),
            );
        }
        for mode in EvalMode::ALL {
            self.eval_suite(mode)?;
        }
        Ok(())
    }

    /// Pooled mean and std of `z_changed` over the training environments.
    fn changed_moments(&self) -> (f64, f64) {
        let values = self.train_values();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
        (mean, (var + self.changed_noise.powi(2)).sqrt())
    }
}

#[derive(Clone, Debug)]
pub struct SpuriousBandit {
    cfg: BanditConfig,
    variation: f64,
    training: bool,
    changed_mean: f64,
    changed_std: f64,
    rng: Rng,
    state: Vec<f64>,
}

impl SpuriousBandit {
    pub fn new(cfg: BanditConfig, variation: f64, training: bool) -> Result<Self> {
        cfg.validate()?;
        let (changed_mean, changed_std) = cfg.changed_moments();
        let d = cfg.state_dim;
        Ok(SpuriousBandit {
            cfg,
            variation,
            training,
            changed_mean,
            changed_std,
            rng: rng::seeded(0),
            state: vec![0.0; d],
        })
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    /// The reward-maximizing action for a state.
    pub fn optimal_action(&self, state: &[f64]) -> f64 {
        (self.cfg.changed_weight * (state[CHANGED_INDEX] - self.cfg.center())
            + self.cfg.relevant_weight * state[RELEVANT_INDEX])
            .tanh()
    }

    fn draw_state(&mut self) -> Vec<f64> {
        let cfg = &self.cfg;
        let rng = &mut self.rng;
        let mut s = Vec::with_capacity(cfg.state_dim);
        let changed = self.variation + cfg.changed_noise * rng::normal::<f64>(rng);
        s.push(changed);
        s.push(rng::normal::<f64>(rng));
        let eta = rng::normal::<f64>(rng);
        let rho = cfg.nuisance_correlation;
        let nuisance = if self.training {
            rho * (changed - self.changed_mean) / self.changed_std + (1.0 - rho * rho).sqrt() * eta
        } else {
            eta
        };
        s.push(nuisance);
        let span = cfg.train_high - cfg.train_low;
        for j in 3..cfg.state_dim {
            let shift = if j == 3 {
                cfg.noise_shift * (self.variation - cfg.train_low) / span
            } else {
                0.0
            };
            s.push(shift + rng::normal::<f64>(rng));
        }
        s
    }
}

impl Env for SpuriousBandit {
    fn state_dim(&self) -> usize {
        self.cfg.state_dim
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        1
    }

    fn variation_value(&self) -> f64 {
        self.variation
    }

    fn changed_feature_index(&self) -> usize {
        CHANGED_INDEX
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = rng::seeded(seed);
        self.state = self.draw_state();
        self.state.clone()
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep> {
        let a = clip_action(action, 1)?[0];
        let target = self.optimal_action(&self.state);
        let noise = if self.cfg.reward_noise > 0.0 {
            self.cfg.reward_noise * rng::normal::<f64>(&mut self.rng)
        } else {
            0.0
        };
        Ok(EnvStep {
            state: self.state.clone(),
            reward: -(a - target).powi(2) + noise,
            done: true,
        })
    }
}

/// `num_envs` training bandits spread evenly over the training range, plus
/// uncorrelated test bandits at the evaluation values.
pub fn make_spurious_bandit(cfg: &BanditConfig) -> Result<EnvSuite> {
    cfg.validate()?;
    let build = |v: f64, training: bool| {
        SpuriousBandit::new(cfg.clone(), v, training).map(|e| Box::new(e) as Box<dyn Env>)
    };
    let train = cfg
        .train_values()
        .into_iter()
        .map(|v| build(v, true))
        .collect::<Result<Vec<_>>>()?;
    let evals = EvalMode::ALL
        .iter()
        .map(|&mode| {
            let suite = cfg.eval_suite(mode)?;
            let envs = suite
                .test_values
                .iter()
                .map(|&v| build(v, false))
                .collect::<Result<Vec<_>>>()?;
            Ok(EvalSet { suite, envs })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnvSuite { train, evals })
}

/// Uniform random action in `[-1, 1]`, used for exploration-free data collection.
pub(crate) fn random_action(rng: &mut Rng) -> f64 {
    rng.random_range(-1.0..=1.0)
}
