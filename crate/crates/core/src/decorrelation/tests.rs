#![allow(clippy::needless_range_loop)]

use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng as _;

use super::*;
use crate::rff::FeatureMaps;
use crate::rng::{self, Rng};

fn random_batch(n: usize, d: usize, rng: &mut Rng) -> FeatureBatch<f64> {
    let values = Array2::from_shape_fn((n, d), |_| rng::normal::<f64>(rng));
    FeatureBatch::unlabeled(values).unwrap()
}

fn uniform_p(d: usize) -> Vec<f64> {
    vec![1.0 / d as f64; d]
}

/// Plain unbiased cross-covariance of the RFF features with a naive loop.
fn naive_pair(x: &[f64], y: &[f64], maps: &FeatureMaps<f64>, i: usize, j: usize) -> f64 {
    let n = x.len();
    let mean = |c: &[f64]| c.iter().sum::<f64>() / n as f64;
    let sd = |c: &[f64], m: f64| (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
    let (mx, my) = (mean(x), mean(y));
    let (sx, sy) = (sd(x, mx).max(1e-8), sd(y, my).max(1e-8));
    let fx: Vec<Vec<f64>> = x
        .iter()
        .map(|v| maps.maps[i].apply((v - mx) / sx).unwrap())
        .collect();
    let fy: Vec<Vec<f64>> = y
        .iter()
        .map(|v| maps.maps[j].apply((v - my) / sy).unwrap())
        .collect();
    let m = fx[0].len();
    let mut total = 0.0;
    for a in 0..m {
        for b in 0..m {
            let ma = fx.iter().map(|r| r[a]).sum::<f64>() / n as f64;
            let mb = fy.iter().map(|r| r[b]).sum::<f64>() / n as f64;
            let c: f64 = (0..n)
                .map(|k| (fx[k][a] - ma) * (fy[k][b] - mb))
                .sum::<f64>()
                / (n - 1) as f64;
            total += c * c;
        }
    }
    total
}

#[test]
fn uniform_objective_is_scaled_pair_sum() {
    let mut r = rng::seeded(11);
    let batch = random_batch(4, 3, &mut r);
    let maps = FeatureMaps::<f64>::with_seed(3, 5, 2).unwrap();
    let w = WeightVector::uniform(4);
    let value = decorrelation_objective(
        &batch,
        &w,
        &maps,
        &uniform_p(3),
        true,
        CrossCovEstimator::WeightedMoments,
    )
    .unwrap();
    let mut oracle = 0.0;
    for i in 0..3 {
        for j in i + 1..3 {
            oracle += naive_pair(&batch.column(i), &batch.column(j), &maps, i, j);
        }
    }
    assert!(
        (value - oracle / 9.0).abs() < 1e-12,
        "{value} vs {}",
        oracle / 9.0
    );
}

#[test]
fn pair_independence_matches_naive() {
    let mut r = rng::seeded(4);
    let batch = random_batch(20, 2, &mut r);
    let maps = FeatureMaps::<f64>::with_seed(2, 5, 9).unwrap();
    for est in [
        CrossCovEstimator::WeightedMoments,
        CrossCovEstimator::ScaledFeatures,
    ] {
        let got =
            pair_independence(&batch, 0, 1, &maps, &WeightVector::uniform(20), true, est).unwrap();
        let oracle = naive_pair(&batch.column(0), &batch.column(1), &maps, 0, 1);
        assert!((got - oracle).abs() < 1e-12);
    }
    assert!(pair_independence(
        &batch,
        1,
        1,
        &maps,
        &WeightVector::uniform(20),
        true,
        CrossCovEstimator::WeightedMoments
    )
    .is_err());
}

#[test]
fn one_hot_probabilities_zero_the_objective() {
    let mut r = rng::seeded(5);
    let batch = random_batch(16, 4, &mut r);
    let maps = FeatureMaps::<f64>::with_seed(4, 5, 1).unwrap();
    let p = [0.0, 1.0, 0.0, 0.0];
    let w = WeightVector::uniform(16);
    let est = CrossCovEstimator::WeightedMoments;
    assert_eq!(
        decorrelation_objective(&batch, &w, &maps, &p, true, est).unwrap(),
        0.0
    );
    assert!(objective_grad_w(&batch, &w, &maps, &p, true, est)
        .unwrap()
        .iter()
        .all(|&g| g == 0.0));
}

#[test]
fn identical_samples_are_flat() {
    let batch = FeatureBatch::unlabeled(Array2::from_elem((8, 3), 0.7)).unwrap();
    let maps = FeatureMaps::<f64>::with_seed(3, 5, 1).unwrap();
    let p = uniform_p(3);
    let est = CrossCovEstimator::WeightedMoments;
    let w = WeightVector::uniform(8);
    // The batch mean of identical floats can round by an ulp.
    assert!(decorrelation_objective(&batch, &w, &maps, &p, true, est).unwrap() < 1e-28);
    assert!(objective_grad_w(&batch, &w, &maps, &p, true, est)
        .unwrap()
        .iter()
        .all(|&g| g.abs() < 1e-14));
    let out = optimize_weights(&batch, &maps, &p, &DecorrConfig::default()).unwrap();
    for &v in out.weights.as_slice() {
        assert!((v - 1.0).abs() < 1e-9);
    }
    assert!(out.trace.iter().all(|t| t.objective < 1e-28));
    assert_eq!(out.trace.len(), 11);
}

#[test]
fn too_few_features_or_samples() {
    let maps = FeatureMaps::<f64>::with_seed(1, 5, 1).unwrap();
    let batch = FeatureBatch::unlabeled(Array2::zeros((5, 1))).unwrap();
    let w = WeightVector::uniform(5);
    let est = CrossCovEstimator::WeightedMoments;
    assert!(decorrelation_objective(&batch, &w, &maps, &[1.0], true, est).is_err());
    let maps2 = FeatureMaps::<f64>::with_seed(2, 5, 1).unwrap();
    let tiny = FeatureBatch::unlabeled(Array2::zeros((1, 2))).unwrap();
    assert!(optimize_weights(&tiny, &maps2, &[0.5, 0.5], &DecorrConfig::default()).is_err());
}

#[test]
fn zero_inner_iters_is_rejected() {
    let mut r = rng::seeded(1);
    let batch = random_batch(8, 2, &mut r);
    let maps = FeatureMaps::<f64>::with_seed(2, 5, 1).unwrap();
    let cfg = DecorrConfig {
        inner_iters: 0,
        ..DecorrConfig::default()
    };
    assert!(optimize_weights(&batch, &maps, &[0.5, 0.5], &cfg).is_err());
    assert_eq!(DecorrConfig::default().inner_iters, 10);
}

fn central_difference(problem: &DecorrProblem<f64>, w: &[f64], k: usize, h: f64) -> f64 {
    let mut plus = w.to_vec();
    let mut minus = w.to_vec();
    plus[k] += h;
    minus[k] -= h;
    (problem.value(&plus).unwrap() - problem.value(&minus).unwrap()) / (2.0 * h)
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..20u64 {
        let mut r = rng::seeded(seed);
        let batch = random_batch(6, 3, &mut r);
        let maps = FeatureMaps::<f64>::with_seed(3, 5, seed + 100).unwrap();
        let raw: Vec<f64> = (0..6).map(|_| r.random_range(0.2..2.0)).collect();
        let w = project_weights(&raw, true);
        let p = [0.5, 0.3, 0.2];
        for est in [
            CrossCovEstimator::WeightedMoments,
            CrossCovEstimator::ScaledFeatures,
        ] {
            let problem = DecorrProblem::new(&batch, &maps, &p, true, est).unwrap();
            let (_, grad) = problem.value_and_grad(w.as_slice()).unwrap();
            let scale = grad.iter().fold(0.0f64, |a, g| a.max(g.abs())).max(1e-12);
            for k in 0..6 {
                let fd = central_difference(&problem, w.as_slice(), k, 1e-5);
                let err = (grad[k] - fd).abs() / scale;
                assert!(err < 1e-4, "seed {seed} {est:?} k {k}: {} vs {fd}", grad[k]);
            }
        }
    }
}

#[test]
fn scaling_features_to_zero_gives_zero_gradient() {
    let mut r = rng::seeded(2);
    let batch = random_batch(6, 3, &mut r);
    let maps = FeatureMaps {
        maps: (0..3)
            .map(|_| {
                crate::rff::RffMap::from_parts(vec![0.0; 5], vec![std::f64::consts::FRAC_PI_2; 5])
                    .unwrap()
            })
            .collect(),
    };
    let w = WeightVector::uniform(6);
    let g = objective_grad_w(
        &batch,
        &w,
        &maps,
        &uniform_p(3),
        true,
        CrossCovEstimator::WeightedMoments,
    )
    .unwrap();
    assert!(g.iter().all(|v| v.abs() < 1e-15));
}

/// Every point of the simplex grid with step 1/steps, scaled to sum n.
fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(left: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(left - k, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(steps, n, &mut Vec::new(), &mut out);
    out.into_iter()
        .map(|c| {
            c.into_iter()
                .map(|k| k as f64 * n as f64 / steps as f64)
                .collect()
        })
        .collect()
}

#[test]
fn correlated_pair_approaches_grid_minimum() {
    let values =
        Array2::from_shape_vec((4, 2), vec![-1.2, -1.2, 0.1, 0.1, 0.4, 0.4, 1.5, 1.5]).unwrap();
    let batch = FeatureBatch::unlabeled(values).unwrap();
    let maps = FeatureMaps::<f64>::with_seed(2, 5, 3).unwrap();
    let p = uniform_p(2);
    let problem =
        DecorrProblem::new(&batch, &maps, &p, true, CrossCovEstimator::WeightedMoments).unwrap();
    let grid_min = simplex_grid(4, 20)
        .iter()
        .map(|w| problem.value(w).unwrap())
        .fold(f64::INFINITY, f64::min);
    let out = optimize_weights(&batch, &maps, &p, &DecorrConfig::default()).unwrap();
    let gap = out.final_objective - grid_min;
    let reach = out.initial_objective - grid_min;
    assert!(
        gap <= 0.1 * reach,
        "final {} initial {} grid min {grid_min}",
        out.final_objective,
        out.initial_objective
    );
}

#[test]
fn objective_rarely_increases() {
    let mut successes = 0;
    for seed in 0..50u64 {
        let mut r = rng::seeded(seed);
        let mut values = Array2::from_shape_fn((64, 6), |_| rng::normal::<f64>(&mut r));
        for k in 0..64 {
            values[[k, 1]] = 0.8 * values[[k, 0]] + 0.6 * values[[k, 1]];
        }
        let batch = FeatureBatch::unlabeled(values).unwrap();
        let maps = FeatureMaps::<f64>::with_seed(6, 5, seed + 1000).unwrap();
        let out = optimize_weights(&batch, &maps, &uniform_p(6), &DecorrConfig::default()).unwrap();
        if out.final_objective <= out.initial_objective {
            successes += 1;
        }
    }
    assert!(successes >= 48, "{successes}/50");
}

#[test]
fn row_permutation_is_equivariant() {
    let mut r = rng::seeded(8);
    let batch = random_batch(32, 4, &mut r);
    let maps = FeatureMaps::<f64>::with_seed(4, 5, 8).unwrap();
    let p = [0.4, 0.3, 0.2, 0.1];
    let cfg = DecorrConfig::default();
    let base = optimize_weights(&batch, &maps, &p, &cfg).unwrap();
    let order: Vec<usize> = (0..32).rev().collect();
    let permuted = optimize_weights(&batch.select_rows(&order), &maps, &p, &cfg).unwrap();
    for (a, b) in base
        .weights
        .permuted(&order)
        .as_slice()
        .iter()
        .zip(permuted.weights.as_slice())
    {
        assert!((a - b).abs() < 1e-9);
    }
    for (a, b) in base.trace.iter().zip(&permuted.trace) {
        assert!((a.objective - b.objective).abs() <= 1e-9 * a.objective.abs().max(1e-12));
    }
}

#[test]
fn duplicated_column_exceeds_null() {
    let mut r = rng::seeded(21);
    let x: Vec<f64> = (0..256).map(|_| rng::normal::<f64>(&mut r)).collect();
    let maps = FeatureMaps::<f64>::with_seed(2, 5, 21).unwrap();
    let test = permutation_test(
        &x,
        &x,
        &maps.maps[0],
        &maps.maps[1],
        1000,
        true,
        CrossCovEstimator::WeightedMoments,
        &mut r,
    )
    .unwrap();
    assert!(test.statistic > test.percentile(0.99));
}

#[test]
fn independent_pair_stays_under_null() {
    let mut below = 0;
    for seed in 0..50u64 {
        let mut r = rng::seeded(seed);
        let x: Vec<f64> = (0..512).map(|_| rng::normal::<f64>(&mut r)).collect();
        let y: Vec<f64> = (0..512).map(|_| rng::normal::<f64>(&mut r)).collect();
        let maps = FeatureMaps::<f64>::with_seed(2, 5, seed + 77).unwrap();
        let test = permutation_test(
            &x,
            &y,
            &maps.maps[0],
            &maps.maps[1],
            200,
            true,
            CrossCovEstimator::WeightedMoments,
            &mut r,
        )
        .unwrap();
        if test.statistic < test.percentile(0.95) {
            below += 1;
        }
    }
    assert!(below >= 45, "{below}/50");
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = DecorrConfig {
        learning_rate: 0.5,
        estimator: CrossCovEstimator::ScaledFeatures,
        ..Default::default()
    };
    let text = toml::to_string(&cfg).unwrap();
    let back: DecorrConfig = toml::from_str(&text).unwrap();
    assert_eq!(cfg, back);
    let partial: DecorrConfig = toml::from_str("inner_iters = 3").unwrap();
    assert_eq!(partial.inner_iters, 3);
    assert_eq!(partial.rff_count, 5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn returned_weights_are_feasible(seed in any::<u64>(), n in 4usize..40) {
        let mut r = rng::seeded(seed);
        let batch = random_batch(n, 3, &mut r);
        let maps = FeatureMaps::<f64>::with_seed(3, 5, seed).unwrap();
        let out = optimize_weights(&batch, &maps, &[0.6, 0.3, 0.1], &DecorrConfig::default()).unwrap();
        let sum: f64 = out.weights.as_slice().iter().sum();
        prop_assert!((sum - n as f64).abs() < 1e-9);
        prop_assert!(out.weights.min() >= 0.0);
        prop_assert!(out.trace.iter().all(|t| t.objective >= 0.0));
    }

    #[test]
    fn objective_is_nonnegative(seed in any::<u64>(), raw in proptest::collection::vec(0.0f64..3.0, 10)) {
        let mut r = rng::seeded(seed);
        let batch = random_batch(10, 4, &mut r);
        let maps = FeatureMaps::<f64>::with_seed(4, 5, seed).unwrap();
        let w = project_weights(&raw, true);
        for est in [CrossCovEstimator::WeightedMoments, CrossCovEstimator::ScaledFeatures] {
            let v = decorrelation_objective(&batch, &w, &maps, &[0.1, 0.2, 0.3, 0.4], true, est).unwrap();
            prop_assert!(v >= 0.0);
        }
    }
}
