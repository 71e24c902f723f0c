use ndarray::Array2;
use rand::Rng as _;

use super::{Criterion, CriterionResult};
use crate::agent::{SacAgent, SacConfig, SampledBatch};
use crate::decorrelation::{project_weights, CrossCovEstimator, DecorrProblem, FeatureBatch};
use crate::error::Result;
use crate::nn::Mlp;
use crate::rff::FeatureMaps;
use crate::rng::{self, Rng};
use crate::saliency::EnvClassifier;

pub const CASES: u64 = 100;
pub const TOL: f64 = 1e-4;
pub const POLICY_TOL: f64 = 1e-3;
const STEP: f64 = 1e-6;

/// `||a - b|| / max(||a||, ||b||)`, or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` around `x`.
pub fn central_differences(
    x: &[f64],
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + STEP;
        let plus = f(&probe)?;
        probe[i] = x[i] - STEP;
        let minus = f(&probe)?;
        probe[i] = x[i];
        out.push((plus - minus) / (2.0 * STEP));
    }
    Ok(out)
}

fn with_params(net: &Mlp<f64>, params: &[f64]) -> Mlp<f64> {
    let mut out = net.clone();
    out.params_mut().copy_from_slice(params);
    out
}

fn labeled_batch(n: usize, d: usize, k: usize, r: &mut Rng) -> Result<FeatureBatch<f64>> {
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let mut values = Array2::from_shape_simple_fn((n, d), || rng::normal::<f64>(r));
    for (i, &e) in labels.iter().enumerate() {
        values[[i, 0]] += e as f64;
    }
    FeatureBatch::new(values, labels, k)
}

fn sampled_batch(n: usize, d: usize, a: usize, r: &mut Rng) -> SampledBatch<f64> {
    SampledBatch {
        states: Array2::from_shape_simple_fn((n, d), || rng::normal::<f64>(r)),
        actions: Array2::from_shape_simple_fn((n, a), || r.random_range(-0.95..0.95)),
        rewards: (0..n).map(|_| rng::normal::<f64>(r)).collect(),
        next_states: Array2::from_shape_simple_fn((n, d), || rng::normal::<f64>(r)),
        dones: (0..n).map(|_| r.random_bool(0.3)).collect(),
        env_labels: (0..n).map(|k| k % 2).collect(),
        num_envs: 2,
    }
}

fn random_weights(n: usize, r: &mut Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| r.random_range(0.2..2.0)).collect();
    project_weights(&raw, true).into_vec()
}

/// Relative errors of one seeded case: classifier, critics, objective, policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCase {
    pub classifier: f64,
    pub critics: f64,
    pub objective: f64,
    pub policy: f64,
}

pub fn gradient_case(seed: u64) -> Result<GradientCase> {
    let mut r = rng::stream(seed, "gradients");

    let (d, k) = (r.random_range(2..6), r.random_range(2..5));
    let clf = EnvClassifier::<f64>::new(d, k, r.random_range(4..12), 1e-3, &mut r)?;
    let batch = labeled_batch(24, d, k, &mut r)?;
    let (_, grad) = clf.loss_and_grad(&batch)?;
    let fd = central_differences(clf.net().params(), |p| {
        EnvClassifier::from_net(with_params(clf.net(), p), 1e-3)?.loss(&batch)
    })?;
    let classifier = relative_error(&grad, &fd);

    let (sd, ad) = (r.random_range(1..5), r.random_range(1..3));
    let cfg = SacConfig {
        hidden: vec![r.random_range(4..12)],
        gamma: 0.9,
        ..Default::default()
    };
    let agent = SacAgent::<f64>::new(sd, ad, cfg, &mut r)?;
    let n = 16;
    let sampled = sampled_batch(n, sd, ad, &mut r);
    let next_noise = agent.draw_noise(n, &mut r);
    let targets = agent.critic_targets(&sampled, next_noise.view())?;
    let weights = random_weights(n, &mut r);
    let critic_w = if seed.is_multiple_of(2) {
        None
    } else {
        Some(weights.as_slice())
    };
    let loss = agent.q_loss(&sampled, &targets, critic_w)?;
    let fd1 = central_differences(agent.q1.params(), |p| {
        let mut a = agent.clone();
        a.q1.params_mut().copy_from_slice(p);
        Ok(a.q_loss(&sampled, &targets, critic_w)?.loss1)
    })?;
    let fd2 = central_differences(agent.q2.params(), |p| {
        let mut a = agent.clone();
        a.q2.params_mut().copy_from_slice(p);
        Ok(a.q_loss(&sampled, &targets, critic_w)?.loss2)
    })?;
    let critics = relative_error(&loss.grads1, &fd1).max(relative_error(&loss.grads2, &fd2));

    let d = r.random_range(2..5);
    let values = Array2::from_shape_simple_fn((32, d), || rng::normal::<f64>(&mut r));
    let fbatch = FeatureBatch::unlabeled(values)?;
    let maps = FeatureMaps::sample(d, 5, &mut r)?;
    let p: Vec<f64> = (0..d).map(|_| r.random_range(0.05..1.0)).collect();
    let estimator = if seed.is_multiple_of(2) {
        CrossCovEstimator::WeightedMoments
    } else {
        CrossCovEstimator::ScaledFeatures
    };
    let problem = DecorrProblem::new(&fbatch, &maps, &p, true, estimator)?;
    let w = random_weights(32, &mut r);
    let (_, grad) = problem.value_and_grad(&w)?;
    let fd = central_differences(&w, |x| problem.value(x))?;
    let objective = relative_error(&grad, &fd);

    let states = Array2::from_shape_simple_fn((n, sd), || rng::normal::<f64>(&mut r));
    let noise = agent.draw_noise(n, &mut r);
    let (_, grad) = agent.policy_loss_weighted(states.view(), &weights, noise.view())?;
    let fd = central_differences(agent.policy.params(), |p| {
        let mut a = agent.clone();
        a.policy.params_mut().copy_from_slice(p);
        Ok(
            a.policy_loss_weighted(states.view(), &weights, noise.view())?
                .0,
        )
    })?;
    let policy = relative_error(&grad, &fd);

    Ok(GradientCase {
        classifier,
        critics,
        objective,
        policy,
    })
}

pub fn check() -> Result<CriterionResult> {
    let cases = (0..CASES).map(gradient_case).collect::<Result<Vec<_>>>()?;
    let worst = |f: fn(&GradientCase) -> f64| cases.iter().map(f).fold(0.0, f64::max);
    let (clf, critic, obj, pol) = (
        worst(|c| c.classifier),
        worst(|c| c.critics),
        worst(|c| c.objective),
        worst(|c| c.policy),
    );
    let passed = clf < TOL && critic < TOL && obj < TOL && pol < POLICY_TOL;
    Ok(CriterionResult::new(
        Criterion::Gradients,
        passed,
        format!(
            "worst relative error over {CASES} cases: classifier {clf:.1e}, critics {critic:.1e}, objective {obj:.1e} (limit {TOL:e}); policy {pol:.1e} (limit {POLICY_TOL:e})"
        ),
    ))
}
