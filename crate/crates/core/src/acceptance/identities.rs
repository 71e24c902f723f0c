use ndarray::Array2;
use rand::Rng as _;

use super::{Criterion, CriterionResult};
use crate::agent::{SacAgent, SacConfig};
use crate::decorrelation::{
    cross_cov, weighted_cross_cov, weighted_moment_cross_cov, WeightVector,
};
use crate::error::Result;
use crate::metrics::{pearson, weighted_pearson};
use crate::rng;

pub const CASES: u64 = 100;
pub const PEARSON_TOL: f64 = 1e-12;

fn same_bits(a: &Array2<f64>, b: &Array2<f64>) -> bool {
    a.shape() == b.shape()
        && a.iter()
            .zip(b.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IdentityTally {
    pub cross_cov: u64,
    pub policy_loss: u64,
    pub pearson: u64,
    pub worst_pearson_gap: f64,
}

pub fn identity_case(seed: u64, tally: &mut IdentityTally) -> Result<()> {
    let mut r = rng::stream(seed, "identities");
    let n = r.random_range(2..96);
    let (mu, mv) = (r.random_range(1..7), r.random_range(1..7));
    let u = Array2::from_shape_simple_fn((n, mu), || rng::normal::<f64>(&mut r));
    let v = Array2::from_shape_simple_fn((n, mv), || rng::normal::<f64>(&mut r));
    let ones = vec![1.0; n];
    let plain = cross_cov(u.view(), v.view())?;
    if same_bits(&weighted_cross_cov(u.view(), v.view(), &ones)?, &plain)
        && same_bits(
            &weighted_moment_cross_cov(u.view(), v.view(), &ones)?,
            &plain,
        )
    {
        tally.cross_cov += 1;
    }

    let state_dim = r.random_range(1..6);
    let action_dim = r.random_range(1..3);
    let cfg = SacConfig {
        hidden: vec![r.random_range(4..17)],
        ..Default::default()
    };
    let agent = SacAgent::<f64>::new(state_dim, action_dim, cfg, &mut r)?;
    let states = Array2::from_shape_simple_fn((n, state_dim), || rng::normal::<f64>(&mut r));
    let noise = agent.draw_noise(n, &mut r);
    let (weighted, _) = agent.policy_loss_weighted(states.view(), &ones, noise.view())?;
    if weighted.to_bits() == agent.policy_loss(states.view(), noise.view())?.to_bits() {
        tally.policy_loss += 1;
    }

    let x: Vec<f64> = (0..n).map(|_| rng::normal::<f64>(&mut r)).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&xv| r.random_range(-1.0..1.0) * xv + rng::normal::<f64>(&mut r))
        .collect();
    let gap = (weighted_pearson(&x, &y, &WeightVector::uniform(n))? - pearson(&x, &y)?).abs();
    tally.worst_pearson_gap = tally.worst_pearson_gap.max(gap);
    if gap <= PEARSON_TOL {
        tally.pearson += 1;
    }
    Ok(())
}

pub fn check() -> Result<CriterionResult> {
    let mut tally = IdentityTally::default();
    for seed in 0..CASES {
        identity_case(seed, &mut tally)?;
    }
    let passed = tally.cross_cov == CASES && tally.policy_loss == CASES && tally.pearson == CASES;
    Ok(CriterionResult::new(
        Criterion::Identities,
        passed,
        format!(
            "bitwise cross-cov {}/{CASES}, bitwise policy loss {}/{CASES}, pearson within {PEARSON_TOL:e} {}/{CASES} (worst gap {:.1e})",
            tally.cross_cov, tally.policy_loss, tally.pearson, tally.worst_pearson_gap
        ),
    ))
}
