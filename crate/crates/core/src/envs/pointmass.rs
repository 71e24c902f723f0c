use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{
    clip_action, linspace, midpoints, Env, EnvStep, EnvSuite, EvalMode, EvalSet, EvalSuite,
};
use crate::error::{invalid, Result, SgfdError};
use crate::rng::{self, Rng};

/// Point mass pushed toward a goal; each environment has its own mass.
///
/// State layout: `[x, v, goal, mass_obs, nuisance...]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointmassConfig {
    pub num_envs: usize,
    pub mass_low: f64,
    pub mass_high: f64,
    pub dt: f64,
    pub horizon: usize,
    /// Observation noise on the mass feature.
    pub mass_noise: f64,
    pub nuisance_dims: usize,
    pub nuisance_correlation: f64,
    pub interpolation_values: Option<Vec<f64>>,
    pub extrapolation_values: Option<Vec<f64>>,
}

impl Default for PointmassConfig {
    fn default() -> Self {
        PointmassConfig {
            num_envs: 4,
            mass_low: 1.0,
            mass_high: 5.0,
            dt: 0.1,
            horizon: 100,
            mass_noise: 0.1,
            nuisance_dims: 1,
            nuisance_correlation: 0.8,
            interpolation_values: None,
            extrapolation_values: None,
        }
    }
}

pub const MASS_INDEX: usize = 3;

impl PointmassConfig {
    pub fn state_dim(&self) -> usize {
        4 + self.nuisance_dims
    }

    pub fn train_values(&self) -> Vec<f64> {
        linspace(self.mass_low, self.mass_high, self.num_envs)
    }

    pub fn eval_suite(&self, mode: EvalMode) -> Result<EvalSuite> {
        let values = match mode {
            EvalMode::Interpolation => self
                .interpolation_values
                .clone()
                .unwrap_or_else(|| midpoints(&self.train_values())),
            EvalMode::Extrapolation => self.extrapolation_values.clone().unwrap_or_else(|| {
                vec![
                    0.5 * self.mass_low,
                    self.mass_high + 1.0,
                    self.mass_high + 2.0,
                ]
            }),
        };
        EvalSuite::new(mode, (self.mass_low, self.mass_high), values)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_envs < 2 {
            return Err(SgfdError::Config {
                field: "env.num_envs".into(),
                message: "at least two training environments are required".into(),
            });
        }
        if !(self.mass_low > 0.0) {
            return invalid(format!("masses must be positive, got {}", self.mass_low));
        }
        if !(self.dt > 0.0) || self.horizon == 0 {
            return Err(SgfdError::Config {
                field: "env.dt/horizon".into(),
                message: "time step and horizon must be positive".into(),
            });
        }
        if !(self.nuisance_correlation.abs() < 1.0) {
            return invalid("nuisance correlation must satisfy |rho| < 1");
        }
        for mode in EvalMode::ALL {
            if self
                .eval_suite(mode)?
                .test_values
                .iter()
                .any(|&m| !(m > 0.0))
            {
                return invalid("test masses must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PointMass {
    cfg: PointmassConfig,
    mass: f64,
    training: bool,
    mass_mean: f64,
    mass_std: f64,
    rng: Rng,
    x: f64,
    v: f64,
    goal: f64,
    mass_obs: f64,
    nuisance: Vec<f64>,
    t: usize,
}

impl PointMass {
    pub fn new(cfg: PointmassConfig, mass: f64, training: bool) -> Result<Self> {
        cfg.validate()?;
        if !(mass > 0.0) {
            return invalid(format!("mass must be positive, got {mass}"));
        }
        let values = cfg.train_values();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / values.len() as f64;
        let std = (var + cfg.mass_noise.powi(2)).sqrt();
        Ok(PointMass {
            nuisance: vec![0.0; cfg.nuisance_dims],
            cfg,
            mass,
            training,
            mass_mean: mean,
            mass_std: std,
            rng: rng::seeded(0),
            x: 0.0,
            v: 0.0,
            goal: 0.0,
            mass_obs: mass,
            t: 0,
        })
    }

    pub fn position(&self) -> f64 {
        self.x
    }

    pub fn velocity(&self) -> f64 {
        self.v
    }

    /// Places the mass at `x` with velocity `v`, keeping the goal.
    pub fn set_state(&mut self, x: f64, v: f64) {
        self.x = x;
        self.v = v;
    }

    fn observe(&self) -> Vec<f64> {
        let mut s = vec![self.x, self.v, self.goal, self.mass_obs];
        s.extend_from_slice(&self.nuisance);
        s
    }
}

impl Env for PointMass {
    fn state_dim(&self) -> usize {
        self.cfg.state_dim()
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn variation_value(&self) -> f64 {
        self.mass
    }

    fn changed_feature_index(&self) -> usize {
        MASS_INDEX
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = rng::seeded(seed);
        self.x = self.rng.random_range(-1.0..1.0);
        self.v = 0.0;
        self.goal = self.rng.random_range(-1.0..1.0);
        self.mass_obs = self.mass + self.cfg.mass_noise * rng::normal::<f64>(&mut self.rng);
        let rho = self.cfg.nuisance_correlation;
        let z = (self.mass_obs - self.mass_mean) / self.mass_std;
        for j in 0..self.cfg.nuisance_dims {
            let eta = rng::normal::<f64>(&mut self.rng);
            self.nuisance[j] = if self.training {
                rho * z + (1.0 - rho * rho).sqrt() * eta
            } else {
                eta
            };
        }
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep> {
        let a = clip_action(action, 1)?[0];
        let dt = self.cfg.dt;
        self.x += self.v * dt;
        self.v += a / self.mass * dt;
        self.t += 1;
        Ok(EnvStep {
            state: self.observe(),
            reward: -(self.x - self.goal).powi(2),
            done: self.t >= self.cfg.horizon,
        })
    }
}

pub fn make_pointmass(cfg: &PointmassConfig) -> Result<EnvSuite> {
    cfg.validate()?;
    let build = |m: f64, training: bool| {
        PointMass::new(cfg.clone(), m, training).map(|e| Box::new(e) as Box<dyn Env>)
    };
    let train = cfg
        .train_values()
        .into_iter()
        .map(|m| build(m, true))
        .collect::<Result<Vec<_>>>()?;
    let evals = EvalMode::ALL
        .iter()
        .map(|&mode| {
            let suite = cfg.eval_suite(mode)?;
            let envs = suite
                .test_values
                .iter()
                .map(|&m| build(m, false))
                .collect::<Result<Vec<_>>>()?;
            Ok(EvalSet { suite, envs })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnvSuite { train, evals })
}
