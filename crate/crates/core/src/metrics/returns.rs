use serde::Serialize;

use crate::agent::SacAgent;
use crate::envs::Env;
use crate::error::{invalid, Result};
use crate::rng::{self};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReturnStats {
    pub returns: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl ReturnStats {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len().max(1) as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let std = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
        ReturnStats { returns, mean, std }
    }
}

/// Cumulative reward of `episodes` rollouts of `policy`; episode `e` resets with a
/// seed drawn from a generator seeded by `seed`.
pub fn evaluate_return<P>(
    env: &mut dyn Env,
    episodes: usize,
    seed: u64,
    mut policy: P,
) -> Result<ReturnStats>
where
    P: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if episodes == 0 {
        return invalid("evaluation needs at least one episode");
    }
    let mut seeds = rng::seeded(seed);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut state = env.reset(rng::next_seed(&mut seeds));
        let mut total = 0.0;
        for _ in 0..env.horizon() {
            let step = env.step(&policy(&state)?)?;
            total += step.reward;
            state = step.state;
            if step.done {
                break;
            }
        }
        returns.push(total);
    }
    Ok(ReturnStats::from_returns(returns))
}

/// Deterministic-policy evaluation of an agent.
pub fn evaluate_agent<T: Scalar>(
    agent: &SacAgent<T>,
    env: &mut dyn Env,
    episodes: usize,
    seed: u64,
) -> Result<ReturnStats> {
    let mut unused = rng::seeded(0);
    evaluate_return(env, episodes, seed, |s| {
        let state: Vec<T> = s.iter().map(|&v| T::of(v)).collect();
        Ok(agent
            .act(&state, true, &mut unused)?
            .into_iter()
            .map(|a| a.as_f64())
            .collect())
    })
}
