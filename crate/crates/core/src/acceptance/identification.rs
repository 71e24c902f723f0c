use super::{Criterion, CriterionResult};
use crate::envs::{shifted_feature_batch, ShiftedFeatureConfig};
use crate::error::Result;
use crate::rng;
use crate::saliency::{argmax, fit_feature_saliency, SaliencyConfig};

pub const SEEDS: u64 = 20;
pub const MAX_CALLS: u64 = 200;
pub const SAMPLES: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentificationRun {
    pub reached_gate: bool,
    pub calls: u64,
    pub selected: usize,
}

pub fn identification_run(cfg: &ShiftedFeatureConfig, seed: u64) -> Result<IdentificationRun> {
    let batch = shifted_feature_batch(cfg, SAMPLES, &mut rng::stream(seed, "env"))?;
    let fitted = fit_feature_saliency(
        &batch,
        &SaliencyConfig::default(),
        MAX_CALLS,
        128,
        &mut rng::stream(seed, "init"),
        &mut rng::stream(seed, "buffer-sampling"),
    )?;
    Ok(IdentificationRun {
        reached_gate: fitted.classifier.ever_passed(),
        calls: fitted.calls,
        selected: argmax(&fitted.saliency.p),
    })
}

pub fn check() -> Result<CriterionResult> {
    let cfg = ShiftedFeatureConfig::default();
    let runs = (0..SEEDS)
        .map(|s| identification_run(&cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let reached = runs.iter().filter(|r| r.reached_gate).count();
    let hits = runs
        .iter()
        .filter(|r| r.selected == cfg.shifted_index)
        .count();
    let max_calls = runs.iter().map(|r| r.calls).max().unwrap_or(0);
    let passed = reached as u64 == SEEDS && hits as f64 >= 0.95 * SEEDS as f64;
    Ok(CriterionResult::new(
        Criterion::Identification,
        passed,
        format!(
            "gate reached in {reached}/{SEEDS} seeds (at most {max_calls} calls); argmax p on the shifted feature in {hits}/{SEEDS}"
        ),
    ))
}
