use super::endtoend::scratch_dir;
use super::{Criterion, CriterionResult};
use crate::error::Result;
use crate::experiment::{run_experiment, RunConfig};

pub fn check() -> Result<CriterionResult> {
    let mut hashes = Vec::new();
    for run in 0..2 {
        let dir = scratch_dir(&format!("determinism-{run}"));
        let cfg = RunConfig {
            output_dir: dir.clone(),
            ..Default::default()
        };
        let result = run_experiment(&cfg);
        let _ = std::fs::remove_dir_all(&dir);
        hashes.push(result?.content_hash);
    }
    let passed = hashes[0] == hashes[1];
    Ok(CriterionResult::new(
        Criterion::Determinism,
        passed,
        format!(
            "manifest hashes {} and {}",
            &hashes[0][..16],
            &hashes[1][..16]
        ),
    ))
}
