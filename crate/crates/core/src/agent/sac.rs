use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::buffer::SampledBatch;
use crate::error::{invalid, Result, SgfdError};
use crate::nn::{Activation, ForwardTrace, Mlp, Optimizer, OptimizerConfig};
use crate::rng::{self, Rng};
use crate::Scalar;

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    /// Hidden layer widths shared by the policy and both critics.
    pub hidden: Vec<usize>,
    /// Adam step size for the policy and both critics.
    pub learning_rate: f64,
    /// Fixed entropy temperature.
    pub alpha: f64,
    pub gamma: f64,
    pub tau: f64,
    pub actor_update_frequency: u64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Weight the critic loss with the learned sample weights too.
    pub weighted_critic: bool,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            hidden: vec![64],
            learning_rate: 1e-3,
            alpha: 0.1,
            gamma: 0.99,
            tau: 0.01,
            actor_update_frequency: 2,
            batch_size: 128,
            replay_capacity: 100_000,
            weighted_critic: false,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(SgfdError::Config {
                field: format!("agent.{field}"),
                message,
            })
        };
        if self.hidden.contains(&0) {
            return bad("hidden", "layer widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", format!("must lie in [0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau", format!("must lie in [0, 1], got {}", self.tau));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(
                "alpha",
                format!("must be finite and nonnegative, got {}", self.alpha),
            );
        }
        if self.actor_update_frequency == 0 {
            return bad("actor_update_frequency", "must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad("batch_size", "must be at least 2".into());
        }
        if self.replay_capacity < self.batch_size {
            return bad("replay_capacity", "must hold at least one batch".into());
        }
        if let Err(e) = OptimizerConfig::adam(self.learning_rate).validate() {
            return bad("learning_rate", e.to_string());
        }
        Ok(())
    }
}

/// Reparameterized actions for a batch, plus what the backward pass needs.
#[derive(Clone, Debug)]
pub struct PolicySample<T> {
    pub actions: Array2<T>,
    pub log_probs: Vec<T>,
    trace: ForwardTrace<T>,
    std: Array2<T>,
    noise: Array2<T>,
    /// `false` where the raw log-std was clamped, so its gradient is zero.
    log_std_free: Array2<bool>,
}

/// Per-critic losses and parameter gradients.
#[derive(Clone, Debug)]
pub struct CriticLoss<T> {
    pub loss1: T,
    pub loss2: T,
    pub grads1: Vec<T>,
    pub grads2: Vec<T>,
}

/// `log(1 - tanh(u)^2)` without cancellation for large `|u|`.
fn log_one_minus_tanh_sq<T: Scalar>(u: T) -> T {
    let two = T::of(2.0);
    let z = -two * u;
    let softplus = if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    two * (T::LN_2() - u - softplus)
}

fn concat_cols<T: Scalar>(a: ArrayView2<T>, b: ArrayView2<T>) -> Array2<T> {
    let mut out = Array2::zeros((a.nrows(), a.ncols() + b.ncols()));
    out.slice_mut(s![.., ..a.ncols()]).assign(&a);
    out.slice_mut(s![.., a.ncols()..]).assign(&b);
    out
}

/// Per-sample policy terms, whether critic 1 was the minimum, and both critic traces.
type PolicyTerms<T> = (Vec<T>, Vec<bool>, [ForwardTrace<T>; 2]);

/// Soft actor-critic with a tanh-squashed Gaussian policy and clipped double Q.
#[derive(Clone, Debug)]
pub struct SacAgent<T> {
    cfg: SacConfig,
    state_dim: usize,
    action_dim: usize,
    pub policy: Mlp<T>,
    pub q1: Mlp<T>,
    pub q2: Mlp<T>,
    pub q1_target: Mlp<T>,
    pub q2_target: Mlp<T>,
    policy_opt: Optimizer<T>,
    q1_opt: Optimizer<T>,
    q2_opt: Optimizer<T>,
}

impl<T: Scalar> SacAgent<T> {
    pub fn new(state_dim: usize, action_dim: usize, cfg: SacConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        if state_dim == 0 || action_dim == 0 {
            return invalid("state and action dimensions must be positive");
        }
        let sizes = |input: usize, output: usize| {
            let mut v = vec![input];
            v.extend_from_slice(&cfg.hidden);
            v.push(output);
            v
        };
        let policy = Mlp::new(
            &sizes(state_dim, 2 * action_dim),
            Activation::Relu,
            Activation::Identity,
            rng,
        )?;
        let q_sizes = sizes(state_dim + action_dim, 1);
        let q1 = Mlp::new(&q_sizes, Activation::Relu, Activation::Identity, rng)?;
        let q2 = Mlp::new(&q_sizes, Activation::Relu, Activation::Identity, rng)?;
        Ok(SacAgent {
            state_dim,
            action_dim,
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            policy,
            q1,
            q2,
            policy_opt: Optimizer::new(OptimizerConfig::adam(cfg.learning_rate))?,
            q1_opt: Optimizer::new(OptimizerConfig::adam(cfg.learning_rate))?,
            q2_opt: Optimizer::new(OptimizerConfig::adam(cfg.learning_rate))?,
            cfg,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.cfg
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn alpha(&self) -> T {
        T::of(self.cfg.alpha)
    }

    /// Standard normal noise for `n` reparameterized actions.
    pub fn draw_noise(&self, n: usize, rng: &mut Rng) -> Array2<T> {
        Array2::from_shape_simple_fn((n, self.action_dim), || rng::normal::<T>(rng))
    }

    /// `a = tanh(mean + std * noise)` with its log-density under the squashed Gaussian.
    pub fn sample_actions(
        &self,
        states: ArrayView2<T>,
        noise: ArrayView2<T>,
    ) -> Result<PolicySample<T>> {
        let n = states.nrows();
        let a_dim = self.action_dim;
        if noise.dim() != (n, a_dim) {
            return invalid("noise shape must be batch x action_dim");
        }
        let trace = self.policy.forward_trace(states)?;
        let out = trace.output();
        let (lo, hi) = (T::of(LOG_STD_MIN), T::of(LOG_STD_MAX));
        let half_log_2pi = T::of(0.5 * (2.0 * std::f64::consts::PI).ln());
        let half = T::of(0.5);
        let mut actions = Array2::zeros((n, a_dim));
        let mut std = Array2::zeros((n, a_dim));
        let mut free = Array2::from_elem((n, a_dim), true);
        let mut log_probs = Vec::with_capacity(n);
        for k in 0..n {
            let mut lp = T::zero();
            for j in 0..a_dim {
                let mean = out[[k, j]];
                let raw = out[[k, a_dim + j]];
                let ls = raw.max(lo).min(hi);
                free[[k, j]] = raw >= lo && raw <= hi;
                let sd = ls.exp();
                let eps = noise[[k, j]];
                let u = mean + sd * eps;
                actions[[k, j]] = u.tanh();
                std[[k, j]] = sd;
                lp += -half * eps * eps - ls - half_log_2pi - log_one_minus_tanh_sq(u);
            }
            log_probs.push(lp);
        }
        Ok(PolicySample {
            actions,
            log_probs,
            trace,
            std,
            noise: noise.to_owned(),
            log_std_free: free,
        })
    }

    pub fn act(&self, state: &[T], deterministic: bool, rng: &mut Rng) -> Result<Vec<T>> {
        if state.len() != self.state_dim || state.iter().any(|v| !v.is_finite()) {
            return invalid("state must be finite with the agent's dimension");
        }
        let out = self.policy.forward(state)?;
        if deterministic {
            return Ok(out[..self.action_dim].iter().map(|m| m.tanh()).collect());
        }
        let (lo, hi) = (T::of(LOG_STD_MIN), T::of(LOG_STD_MAX));
        Ok((0..self.action_dim)
            .map(|j| {
                let sd = out[self.action_dim + j].max(lo).min(hi).exp();
                (out[j] + sd * rng::normal::<T>(rng)).tanh()
            })
            .collect())
    }

    fn q_values(net: &Mlp<T>, states: ArrayView2<T>, actions: ArrayView2<T>) -> Result<Vec<T>> {
        let input = concat_cols(states, actions);
        Ok(net.forward_batch(input.view())?.column(0).to_vec())
    }

    /// Soft Bellman targets `r + gamma (1 - done) (min Q_target(s', a') - alpha log pi(a'|s'))`.
    pub fn critic_targets(
        &self,
        batch: &SampledBatch<T>,
        next_noise: ArrayView2<T>,
    ) -> Result<Vec<T>> {
        let gamma = T::of(self.cfg.gamma);
        if gamma == T::zero() || batch.dones.iter().all(|&d| d) {
            return Ok(batch.rewards.clone());
        }
        let next = self.sample_actions(batch.next_states.view(), next_noise)?;
        let t1 = Self::q_values(
            &self.q1_target,
            batch.next_states.view(),
            next.actions.view(),
        )?;
        let t2 = Self::q_values(
            &self.q2_target,
            batch.next_states.view(),
            next.actions.view(),
        )?;
        let alpha = self.alpha();
        Ok((0..batch.len())
            .map(|k| {
                if batch.dones[k] {
                    batch.rewards[k]
                } else {
                    let v = t1[k].min(t2[k]) - alpha * next.log_probs[k];
                    batch.rewards[k] + gamma * v
                }
            })
            .collect())
    }

    fn critic_loss_one(
        net: &Mlp<T>,
        input: ArrayView2<T>,
        targets: &[T],
        weights: Option<&[T]>,
    ) -> Result<(T, Vec<T>)> {
        let n = targets.len();
        let inv_n = T::one() / T::of(n as f64);
        let half = T::of(0.5);
        let trace = net.forward_trace(input)?;
        let q = trace.output();
        let mut upstream = Array2::zeros((n, 1));
        let mut total = T::zero();
        for k in 0..n {
            let w = weights.map_or(T::one(), |w| w[k]);
            let diff = q[[k, 0]] - targets[k];
            total += w * half * diff * diff;
            upstream[[k, 0]] = w * diff * inv_n;
        }
        let loss = total * inv_n;
        if !loss.is_finite() {
            return Err(SgfdError::Divergence("critic loss is not finite".into()));
        }
        let (grads, _) = net.backward(&trace, upstream.view())?;
        Ok((loss, grads))
    }

    /// Mean of `0.5 (Q(s, a) - y)^2` per critic; `targets` carry no gradient.
    pub fn q_loss(
        &self,
        batch: &SampledBatch<T>,
        targets: &[T],
        weights: Option<&[T]>,
    ) -> Result<CriticLoss<T>> {
        let n = batch.len();
        if n == 0 || targets.len() != n || weights.is_some_and(|w| w.len() != n) {
            return invalid("targets and weights must match the batch size");
        }
        let input = concat_cols(batch.states.view(), batch.actions.view());
        let (loss1, grads1) = Self::critic_loss_one(&self.q1, input.view(), targets, weights)?;
        let (loss2, grads2) = Self::critic_loss_one(&self.q2, input.view(), targets, weights)?;
        Ok(CriticLoss {
            loss1,
            loss2,
            grads1,
            grads2,
        })
    }

    /// Per-sample `alpha log pi(a_k|s_k) - min(Q1, Q2)(s_k, a_k)`, with both critic traces.
    fn policy_terms(
        &self,
        sample: &PolicySample<T>,
        states: ArrayView2<T>,
    ) -> Result<PolicyTerms<T>> {
        let input = concat_cols(states, sample.actions.view());
        let t1 = self.q1.forward_trace(input.view())?;
        let t2 = self.q2.forward_trace(input.view())?;
        let alpha = self.alpha();
        let n = states.nrows();
        let mut terms = Vec::with_capacity(n);
        let mut first = Vec::with_capacity(n);
        for k in 0..n {
            let (a, b) = (t1.output()[[k, 0]], t2.output()[[k, 0]]);
            let use_first = a <= b;
            first.push(use_first);
            terms.push(alpha * sample.log_probs[k] - if use_first { a } else { b });
        }
        Ok((terms, first, [t1, t2]))
    }

    /// `(1/n) sum_k w_k (alpha log pi(a_k|s_k) - min Q(s_k, a_k))` and its policy gradient.
    pub fn policy_loss_weighted(
        &self,
        states: ArrayView2<T>,
        weights: &[T],
        noise: ArrayView2<T>,
    ) -> Result<(T, Vec<T>)> {
        let n = states.nrows();
        if weights.len() != n || n == 0 {
            return invalid(format!("{} weights for a batch of {n}", weights.len()));
        }
        let sample = self.sample_actions(states, noise)?;
        let (terms, first, traces) = self.policy_terms(&sample, states)?;
        let mut total = T::zero();
        for k in 0..n {
            total += weights[k] * terms[k];
        }
        let loss = total / T::of(n as f64);
        if !loss.is_finite() {
            return Err(SgfdError::Divergence("policy loss is not finite".into()));
        }

        // dL/da through the selected critic.
        let inv_n = T::one() / T::of(n as f64);
        let mut up1 = Array2::zeros((n, 1));
        let mut up2 = Array2::zeros((n, 1));
        for k in 0..n {
            let g = -weights[k] * inv_n;
            if first[k] {
                up1[[k, 0]] = g;
            } else {
                up2[[k, 0]] = g;
            }
        }
        let g1 = self.q1.input_gradient(&traces[0], up1.view())?;
        let g2 = self.q2.input_gradient(&traces[1], up2.view())?;
        let d = self.state_dim;
        let a_dim = self.action_dim;
        let alpha = self.alpha();
        let two = T::of(2.0);
        let mut upstream = Array2::zeros((n, 2 * a_dim));
        for k in 0..n {
            let scale = weights[k] * inv_n;
            for j in 0..a_dim {
                let a = sample.actions[[k, j]];
                let sd_eps = sample.std[[k, j]] * sample.noise[[k, j]];
                let da_du = T::one() - a * a;
                let dq_da = g1[[k, d + j]] + g2[[k, d + j]];
                // log pi depends on u = mean + std * eps through -log(1 - tanh(u)^2).
                upstream[[k, j]] = scale * alpha * two * a + dq_da * da_du;
                if sample.log_std_free[[k, j]] {
                    upstream[[k, a_dim + j]] =
                        scale * alpha * (-T::one() + two * a * sd_eps) + dq_da * da_du * sd_eps;
                }
            }
        }
        let (grads, _) = self.policy.backward(&sample.trace, upstream.view())?;
        Ok((loss, grads))
    }

    /// The plain expectation `mean_k (alpha log pi - min Q)` under the same noise.
    pub fn policy_loss(&self, states: ArrayView2<T>, noise: ArrayView2<T>) -> Result<T> {
        let sample = self.sample_actions(states, noise)?;
        let (terms, _, _) = self.policy_terms(&sample, states)?;
        let mut total = T::zero();
        for t in &terms {
            total += *t;
        }
        Ok(total / T::of(terms.len() as f64))
    }

    pub fn update_critics(
        &mut self,
        batch: &SampledBatch<T>,
        targets: &[T],
        weights: Option<&[T]>,
    ) -> Result<CriticLoss<T>> {
        let loss = self.q_loss(batch, targets, weights)?;
        self.q1_opt.step(self.q1.params_mut(), &loss.grads1)?;
        self.q2_opt.step(self.q2.params_mut(), &loss.grads2)?;
        Ok(loss)
    }

    pub fn update_actor(
        &mut self,
        states: ArrayView2<T>,
        weights: &[T],
        noise: ArrayView2<T>,
    ) -> Result<T> {
        let (loss, grads) = self.policy_loss_weighted(states, weights, noise)?;
        self.policy_opt.step(self.policy.params_mut(), &grads)?;
        Ok(loss)
    }

    /// `target <- tau main + (1 - tau) target` for both critics.
    pub fn soft_update(&mut self) -> Result<()> {
        let tau = T::of(self.cfg.tau);
        self.q1.blend_into(&mut self.q1_target, tau)?;
        self.q2.blend_into(&mut self.q2_target, tau)
    }

    /// Mean per-dimension policy std over a batch, for logging.
    pub fn mean_std(&self, states: ArrayView2<T>) -> Result<T> {
        let out = self.policy.forward_batch(states)?;
        let stds = out
            .slice(s![.., self.action_dim..])
            .mapv(|ls| ls.max(T::of(LOG_STD_MIN)).min(T::of(LOG_STD_MAX)).exp());
        Ok(stds
            .mean_axis(Axis(0))
            .map_or(T::zero(), |m| m.mean().unwrap_or(T::zero())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_log_correction_matches_naive() {
        for &u in &[-3.0f64, -0.5, 0.0, 0.7, 2.5] {
            let naive = (1.0 - u.tanh().powi(2)).ln();
            assert!((log_one_minus_tanh_sq(u) - naive).abs() < 1e-12);
        }
        assert!(log_one_minus_tanh_sq(40.0f64).is_finite());
        assert!(log_one_minus_tanh_sq(-40.0f64).is_finite());
    }
}
