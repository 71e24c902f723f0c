use ndarray::Array2;
use proptest::prelude::*;

use super::*;
use crate::decorrelation::{project_weights, FeatureBatch, WeightVector};
use crate::envs::{BanditConfig, Env, SpuriousBandit};
use crate::rng;

#[test]
fn pearson_examples() {
    assert!((pearson(&[1.0f64, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!((pearson(&[1.0f64, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
    assert!((pearson(&[1.0f64, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
    assert!(matches!(
        pearson(&[1.0f64, 1.0], &[2.0, 2.0]),
        Err(crate::SgfdError::UndefinedCorrelation(_))
    ));
    assert_eq!(pearson(&[1.0f64, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    assert!(pearson(&[1.0f64], &[1.0]).is_err());
}

#[test]
fn zero_weight_drops_a_sample() {
    let x = [0.3f64, 1.2, -0.7, 2.2, 0.9];
    let y = [1.0, 0.4, -1.1, 1.7, 3.0];
    let w = WeightVector::new(vec![1.25, 1.25, 0.0, 1.25, 1.25]).unwrap();
    let got = weighted_pearson(&x, &y, &w).unwrap();
    let oracle = pearson(&[0.3, 1.2, 2.2, 0.9], &[1.0, 0.4, 1.7, 3.0]).unwrap();
    assert!((got - oracle).abs() < 1e-12);
}

#[test]
fn weighted_pearson_rejects_degenerate_weights() {
    let w = WeightVector::<f64>::one_hot(3, 1).unwrap();
    assert!(matches!(
        weighted_pearson(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0], &w),
        Err(crate::SgfdError::UndefinedCorrelation(_))
    ));
}

fn normal_batch(n: usize, d: usize, seed: u64) -> FeatureBatch<f64> {
    let mut r = rng::seeded(seed);
    FeatureBatch::unlabeled(Array2::from_shape_simple_fn((n, d), || {
        rng::normal::<f64>(&mut r)
    }))
    .unwrap()
}

#[test]
fn independent_columns_have_small_correlations() {
    let report = correlation_matrix(&normal_batch(2000, 5, 1), None, Some(0)).unwrap();
    for i in 0..5 {
        assert_eq!(report.matrix[i][i], 1.0);
        for j in 0..5 {
            assert_eq!(report.matrix[i][j], report.matrix[j][i]);
            if i != j {
                assert!(report.matrix[i][j].abs() < 0.1);
            }
        }
    }
    assert!(report.summary.unwrap() < 0.1);
}

#[test]
fn duplicate_and_constant_columns() {
    let mut values = normal_batch(50, 4, 2).values().to_owned();
    for k in 0..50 {
        values[[k, 3]] = values[[k, 1]];
        values[[k, 2]] = 7.0;
    }
    let batch = FeatureBatch::unlabeled(values).unwrap();
    let report = correlation_matrix(&batch, None, None).unwrap();
    assert!((report.matrix[1][3] - 1.0).abs() < 1e-12);
    assert!(report.undefined[2][2]);
    assert_eq!(report.matrix[2][2], 0.0);
    assert!(!report.undefined[2][0]);
    let weighted = correlation_matrix(&batch, Some(&WeightVector::uniform(50)), None).unwrap();
    assert!(weighted.undefined[2][0]);

    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# format_version=1");
    assert_eq!(lines[1], "feature,z0,z1,z2,z3,undefined");
    assert!(lines[4].ends_with(",z2"));
    assert_eq!(report.summary_json()["undefined_entries"], 1);
}

#[test]
fn resampling_variant_tracks_weighted_moments() {
    let batch = normal_batch(400, 3, 3);
    let raw: Vec<f64> = batch.column(0).iter().map(|v| (1.0 + v).max(0.0)).collect();
    let w = project_weights(&raw, true);
    let direct = correlation_matrix(&batch, Some(&w), Some(0)).unwrap();
    let resampled =
        resampled_correlation_matrix(&batch, &w, Some(0), 20_000, &mut rng::seeded(4)).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!((direct.matrix[i][j] - resampled.matrix[i][j]).abs() < 0.05);
        }
    }
}

#[test]
fn optimal_bandit_policy_scores_zero() {
    let cfg = BanditConfig::default();
    let mut env = SpuriousBandit::new(cfg.clone(), 3.0, false).unwrap();
    let oracle = SpuriousBandit::new(cfg, 3.0, false).unwrap();
    let stats = evaluate_return(&mut env, 10, 7, |s| Ok(vec![oracle.optimal_action(s)])).unwrap();
    assert_eq!(stats.returns.len(), 10);
    assert!(stats.mean.abs() < 1e-12);
    assert!(stats.std.abs() < 1e-12);
}

#[test]
fn evaluation_is_reproducible() {
    let cfg = BanditConfig::default();
    let mut r = rng::seeded(1);
    let agent = crate::agent::SacAgent::<f64>::new(6, 1, Default::default(), &mut r).unwrap();
    let run = || {
        let mut env = SpuriousBandit::new(cfg.clone(), 6.0, false).unwrap();
        evaluate_agent(&agent, &mut env, 10, 3).unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(a.returns.len(), 10);
    let mut env = SpuriousBandit::new(cfg, 6.0, false).unwrap();
    assert!(evaluate_return(&mut env, 0, 1, |_| Ok(vec![0.0])).is_err());
    let _ = env.horizon();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uniform_weights_match_pearson(seed in any::<u64>(), n in 3usize..60) {
        let b = normal_batch(n, 2, seed);
        let (x, y) = (b.column(0), b.column(1));
        let plain = pearson(&x, &y).unwrap();
        let weighted = weighted_pearson(&x, &y, &WeightVector::uniform(n)).unwrap();
        prop_assert!((plain - weighted).abs() < 1e-12);
    }

    #[test]
    fn weighted_correlation_is_bounded(seed in any::<u64>(), raw in proptest::collection::vec(0.01f64..5.0, 12)) {
        let b = normal_batch(12, 2, seed);
        let w = project_weights(&raw, true);
        let r = weighted_pearson(&b.column(0), &b.column(1), &w).unwrap();
        prop_assert!(r.abs() <= 1.0);
    }
}
