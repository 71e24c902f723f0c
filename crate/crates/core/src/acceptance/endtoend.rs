use std::path::PathBuf;

use super::{Criterion, CriterionResult};
use crate::agent::Method;
use crate::envs::EvalMode;
use crate::error::Result;
use crate::experiment::{run_experiment, RunConfig};

pub const SEEDS: u64 = 10;
pub const STEPS: u64 = 20_000;

/// Scratch directory for one acceptance run, removed by the caller.
pub fn scratch_dir(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("sgfd-accept-{}-{tag}", std::process::id()))
}

/// Final extrapolation return of one default-config run.
pub fn arm_return(method: Method, seed: u64, total_steps: u64) -> Result<f64> {
    let dir = scratch_dir(&format!("{method}-{seed}"));
    let cfg = RunConfig {
        seed,
        method,
        total_steps,
        output_dir: dir.clone(),
        ..Default::default()
    };
    let result = run_experiment(&cfg);
    let _ = std::fs::remove_dir_all(&dir);
    Ok(result?.final_returns[EvalMode::Extrapolation.name()])
}

pub fn check() -> Result<CriterionResult> {
    let mut returns = [Vec::new(), Vec::new(), Vec::new()];
    for seed in 0..SEEDS {
        for (slot, method) in returns.iter_mut().zip(Method::ALL) {
            slot.push(arm_return(method, seed, STEPS)?);
        }
    }
    let [sgfd, uniform, none] = &returns;
    let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let wins = sgfd.iter().zip(none).filter(|(s, n)| s > n).count();
    let passed = mean(sgfd) > mean(none) && wins >= 8 && mean(sgfd) > mean(uniform);
    Ok(CriterionResult::new(
        Criterion::EndToEnd,
        passed,
        format!(
            "mean extrapolation return sgfd {:.5}, uniform_decorr {:.5}, no_decorr {:.5}; sgfd beats no_decorr in {wins}/{SEEDS} seeds",
            mean(sgfd),
            mean(uniform),
            mean(none)
        ),
    ))
}
