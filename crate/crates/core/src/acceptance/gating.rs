use super::{Criterion, CriterionResult};
use crate::decorrelation::FeatureBatch;
use crate::envs::{shifted_feature_batch, ShiftedFeatureConfig};
use crate::error::Result;
use crate::rng;
use crate::saliency::{ClassifierGate, EnvClassifier, SaliencyConfig};

pub const WARMUP: u64 = 50;
pub const STEPS: u64 = 1000;

/// Counts from one gated training run; `violations` counts steps or iterations
/// where parameters moved although the gate said they must not.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GatingTally {
    pub warmup_steps: u64,
    pub passing_iterations: u64,
    pub training_iterations: u64,
    pub violations: u64,
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

pub fn gating_run(max_inner_iters: usize, seed: u64) -> Result<GatingTally> {
    let cfg = SaliencyConfig::default();
    let gate = ClassifierGate {
        warmup_steps: WARMUP,
        max_inner_iters,
        ..cfg.gate()
    };
    let shifted = ShiftedFeatureConfig::default();
    let mut data = rng::stream(seed, "env");
    let mut clf = EnvClassifier::<f64>::new(
        shifted.state_dim,
        shifted.num_envs,
        cfg.hidden,
        cfg.learning_rate,
        &mut rng::stream(seed, "init"),
    )?;
    let mut tally = GatingTally::default();
    for step in 0..STEPS {
        let before = clf.clone();
        let mut seen: Vec<FeatureBatch<f64>> = Vec::new();
        clf.update(&gate, step, || {
            let batch = shifted_feature_batch(&shifted, 64, &mut data)?;
            seen.push(batch.clone());
            Ok(batch)
        })?;
        if step < WARMUP {
            tally.warmup_steps += 1;
            if !seen.is_empty() || !same_bits(before.net().params(), clf.net().params()) {
                tally.violations += 1;
            }
            continue;
        }
        // Replay the iterations to recover the parameters each one was entered with.
        let mut replay = before;
        for batch in &seen {
            if replay.accuracy(batch)? > gate.accuracy_threshold {
                tally.passing_iterations += 1;
                if !same_bits(replay.net().params(), clf.net().params()) {
                    tally.violations += 1;
                }
                break;
            }
            replay.train_step(batch)?;
            tally.training_iterations += 1;
        }
    }
    Ok(tally)
}

pub fn check() -> Result<CriterionResult> {
    let single = gating_run(1, 0)?;
    let inner = gating_run(SaliencyConfig::default().max_inner_iters, 1)?;
    let passed = [single, inner].iter().all(|t| {
        t.violations == 0
            && t.passing_iterations > 0
            && t.training_iterations > 0
            && t.warmup_steps == WARMUP
    });
    Ok(CriterionResult::new(
        Criterion::Gating,
        passed,
        format!(
            "one inner iteration: {} warmup steps, {} passing iterations, {} violations; full inner loop: {} passing, {} training, {} violations",
            single.warmup_steps,
            single.passing_iterations,
            single.violations,
            inner.passing_iterations,
            inner.training_iterations,
            inner.violations
        ),
    ))
}
