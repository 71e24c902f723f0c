use super::{Criterion, CriterionResult};
use crate::decorrelation::{optimize_weights, DecorrConfig, FeatureBatch};
use crate::envs::{make_spurious_bandit, BanditConfig, CHANGED_INDEX};
use crate::error::Result;
use crate::metrics::correlation_matrix;
use crate::rff::FeatureMaps;
use crate::rng;
use crate::saliency::{fit_feature_saliency, SaliencyConfig};

pub const SEEDS: u64 = 20;
/// Size of the pooled training set, as generated for the bandit's correlation check.
pub const SAMPLES: usize = 2000;

/// Mean |rho| between the changed feature and the rest: raw, SGFD-weighted, uniform-p weighted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EfficacyRun {
    pub raw: f64,
    pub sgfd: f64,
    pub uniform: f64,
    pub classifier_passed: bool,
}

/// Pooled training states of the default spurious bandit, `per_env` per environment.
pub fn bandit_training_batch(
    cfg: &BanditConfig,
    per_env: usize,
    seed: u64,
) -> Result<FeatureBatch<f64>> {
    let mut suite = make_spurious_bandit(cfg)?;
    let k = suite.train.len();
    let mut r = rng::stream(seed, "env");
    let mut values = ndarray::Array2::zeros((per_env * k, cfg.state_dim));
    let mut labels = Vec::with_capacity(per_env * k);
    for i in 0..per_env {
        for (e, env) in suite.train.iter_mut().enumerate() {
            let s = env.reset(rng::next_seed(&mut r));
            for (j, v) in s.into_iter().enumerate() {
                values[[i * k + e, j]] = v;
            }
            labels.push(e);
        }
    }
    FeatureBatch::new(values, labels, k)
}

/// Trains a classifier on the batch (gate without warmup) and returns its feature probabilities.
pub fn saliency_probs(
    batch: &FeatureBatch<f64>,
    seed: u64,
    max_calls: u64,
) -> Result<(Vec<f64>, bool)> {
    let fitted = fit_feature_saliency(
        batch,
        &SaliencyConfig::default(),
        max_calls,
        128,
        &mut rng::stream(seed, "init"),
        &mut rng::stream(seed, "buffer-sampling"),
    )?;
    Ok((fitted.saliency.p, fitted.classifier.ever_passed()))
}

pub fn efficacy_run(seed: u64) -> Result<EfficacyRun> {
    efficacy_run_with(&BanditConfig::default(), SAMPLES, seed)
}

pub fn efficacy_run_with(cfg: &BanditConfig, samples: usize, seed: u64) -> Result<EfficacyRun> {
    let batch = bandit_training_batch(cfg, samples / cfg.num_envs, seed)?;
    let (p, classifier_passed) = saliency_probs(&batch, seed, 200)?;
    let decorr = DecorrConfig::default();
    let maps = FeatureMaps::sample(batch.d(), decorr.rff_count, &mut rng::stream(seed, "rff"))?;
    let summary = |w: Option<&crate::decorrelation::WeightVector<f64>>| -> Result<f64> {
        Ok(correlation_matrix(&batch, w, Some(CHANGED_INDEX))?
            .summary
            .unwrap_or(0.0))
    };
    let sgfd = optimize_weights(&batch, &maps, &p, &decorr)?.weights;
    let uniform_p = vec![1.0 / batch.d() as f64; batch.d()];
    let uniform = optimize_weights(&batch, &maps, &uniform_p, &decorr)?.weights;
    Ok(EfficacyRun {
        raw: summary(None)?,
        sgfd: summary(Some(&sgfd))?,
        uniform: summary(Some(&uniform))?,
        classifier_passed,
    })
}

pub fn check() -> Result<CriterionResult> {
    let runs = (0..SEEDS).map(efficacy_run).collect::<Result<Vec<_>>>()?;
    let halved = runs.iter().filter(|r| r.sgfd <= 0.5 * r.raw).count();
    let n = runs.len() as f64;
    let mean_sgfd_ratio = runs.iter().map(|r| r.sgfd / r.raw).sum::<f64>() / n;
    let mean_uniform_ratio = runs.iter().map(|r| r.uniform / r.raw).sum::<f64>() / n;
    let passed = halved as f64 >= 0.8 * n && mean_uniform_ratio > mean_sgfd_ratio;
    Ok(CriterionResult::new(
        Criterion::Efficacy,
        passed,
        format!(
            "SGFD halves the changed-feature correlation in {halved}/{SEEDS} seeds; mean ratio sgfd {mean_sgfd_ratio:.3} vs uniform {mean_uniform_ratio:.3}"
        ),
    ))
}
