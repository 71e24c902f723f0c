//! Acceptance suites: one check per criterion, each reporting pass/fail with measured values.

pub mod determinism;
pub mod efficacy;
pub mod endtoend;
pub mod estimator;
pub mod gating;
pub mod gradients;
pub mod identification;
pub mod identities;

use std::fmt;
use std::time::Instant;

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    Identities,
    Gradients,
    Estimator,
    Identification,
    Efficacy,
    EndToEnd,
    Gating,
    Determinism,
}

impl Criterion {
    pub const ALL: [Criterion; 8] = [
        Criterion::Identities,
        Criterion::Gradients,
        Criterion::Estimator,
        Criterion::Identification,
        Criterion::Efficacy,
        Criterion::EndToEnd,
        Criterion::Gating,
        Criterion::Determinism,
    ];

    pub fn number(self) -> usize {
        Criterion::ALL
            .iter()
            .position(|&c| c == self)
            .expect("listed")
            + 1
    }

    pub fn suite_name(self) -> &'static str {
        match self {
            Criterion::Identities => "identities",
            Criterion::Gradients => "gradients",
            Criterion::Estimator => "estimator",
            Criterion::Identification => "identification",
            Criterion::Efficacy => "efficacy",
            Criterion::EndToEnd => "endtoend",
            Criterion::Gating => "gating",
            Criterion::Determinism => "determinism",
        }
    }

    pub fn parse(name: &str) -> Option<Criterion> {
        Criterion::ALL.into_iter().find(|c| c.suite_name() == name)
    }

    pub fn run(self) -> Result<CriterionResult> {
        let start = Instant::now();
        let mut result = match self {
            Criterion::Identities => identities::check()?,
            Criterion::Gradients => gradients::check()?,
            Criterion::Estimator => estimator::check()?,
            Criterion::Identification => identification::check()?,
            Criterion::Efficacy => efficacy::check()?,
            Criterion::EndToEnd => endtoend::check()?,
            Criterion::Gating => gating::check()?,
            Criterion::Determinism => determinism::check()?,
        };
        result.seconds = start.elapsed().as_secs_f64();
        Ok(result)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionResult {
    pub criterion: Criterion,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn new(criterion: Criterion, passed: bool, detail: String) -> Self {
        CriterionResult {
            criterion,
            passed,
            detail,
            seconds: 0.0,
        }
    }
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] criterion {} ({}): {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion.number(),
            self.criterion.suite_name(),
            self.detail,
            self.seconds
        )
    }
}
