use super::*;
use crate::rng;

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn pooled_states(envs: &mut [Box<dyn Env>], per_env: usize, seed: u64) -> Vec<(usize, Vec<f64>)> {
    let mut r = rng::seeded(seed);
    let mut out = Vec::new();
    for _ in 0..per_env {
        for (k, env) in envs.iter_mut().enumerate() {
            out.push((k, env.reset(rng::next_seed(&mut r))));
        }
    }
    out
}

#[test]
fn optimal_action_earns_zero() {
    let cfg = BanditConfig::default();
    let mut env = SpuriousBandit::new(cfg, 2.0, true).unwrap();
    let s = env.reset(4);
    let a = env.optimal_action(&s);
    assert_eq!(env.step(&[a]).unwrap().reward, 0.0);
}

#[test]
fn training_correlation_hits_target() {
    let mut suite = make_spurious_bandit(&BanditConfig::default()).unwrap();
    let data = pooled_states(&mut suite.train, 500, 1);
    assert_eq!(data.len(), 2000);
    let changed: Vec<f64> = data.iter().map(|(_, s)| s[CHANGED_INDEX]).collect();
    let nuisance: Vec<f64> = data.iter().map(|(_, s)| s[NUISANCE_INDEX]).collect();
    let rho = pearson(&changed, &nuisance);
    assert!((rho - 0.8).abs() < 0.1, "rho {rho}");

    let test = pooled_states(&mut suite.eval_set(EvalMode::Extrapolation).envs, 700, 2);
    let changed: Vec<f64> = test.iter().map(|(_, s)| s[CHANGED_INDEX]).collect();
    let nuisance: Vec<f64> = test.iter().map(|(_, s)| s[NUISANCE_INDEX]).collect();
    assert!(pearson(&changed, &nuisance).abs() < 0.1);
}

#[test]
fn extrapolation_values_leave_the_training_range() {
    let mut suite = make_spurious_bandit(&BanditConfig::default()).unwrap();
    let extra = &suite.eval_set(EvalMode::Extrapolation).suite;
    assert_eq!(extra.train_range, (1.0, 5.0));
    assert_eq!(extra.test_values, vec![0.0, 6.0, 7.0]);
    let inter = &suite.eval_set(EvalMode::Interpolation).suite;
    assert!(inter.test_values.iter().all(|&v| v > 1.0 && v < 5.0));
    let bad = BanditConfig {
        interpolation_values: Some(vec![6.0]),
        ..Default::default()
    };
    assert!(make_spurious_bandit(&bad).is_err());
    assert!(EvalSuite::new(EvalMode::Extrapolation, (1.0, 5.0), vec![3.0]).is_err());
    assert!(EvalSuite::new(EvalMode::Interpolation, (1.0, 5.0), vec![5.0]).is_err());
}

#[test]
fn invalid_bandit_settings() {
    let bad_rho = BanditConfig {
        nuisance_correlation: 1.0,
        ..Default::default()
    };
    assert!(matches!(
        make_spurious_bandit(&bad_rho),
        Err(crate::SgfdError::InvalidArgument(_))
    ));
    assert!(make_spurious_bandit(&BanditConfig {
        num_envs: 1,
        ..Default::default()
    })
    .is_err());
    assert!(make_spurious_bandit(&BanditConfig {
        state_dim: 2,
        ..Default::default()
    })
    .is_err());
}

#[test]
fn changed_feature_shift_is_detectable() {
    for mut suite in [
        make_spurious_bandit(&BanditConfig::default()).unwrap(),
        make_pointmass(&PointmassConfig::default()).unwrap(),
    ] {
        let idx = suite.train[0].changed_feature_index();
        let k = suite.train.len();
        let data = pooled_states(&mut suite.train, 400, 3);
        let mut by_env = vec![Vec::new(); k];
        for (e, s) in &data {
            by_env[*e].push(s[idx]);
        }
        let means: Vec<f64> = by_env
            .iter()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect();
        let pooled_var = by_env
            .iter()
            .zip(&means)
            .map(|(v, m)| v.iter().map(|x| (x - m).powi(2)).sum::<f64>())
            .sum::<f64>()
            / (data.len() - k) as f64;
        let sd = pooled_var.sqrt();
        for a in 0..k {
            for b in a + 1..k {
                assert!((means[a] - means[b]).abs() >= 2.0 * sd);
            }
        }
    }
}

#[test]
fn resets_are_reproducible_and_actions_clip() {
    let mut env = SpuriousBandit::new(BanditConfig::default(), 3.0, true).unwrap();
    assert_eq!(env.reset(9), env.reset(9));
    env.reset(9);
    let clipped = env.step(&[5.0]).unwrap();
    env.reset(9);
    let edge = env.step(&[1.0]).unwrap();
    assert_eq!(clipped, edge);
    assert!(clipped.done);
    assert!(env.step(&[0.0, 1.0]).is_err());
}

#[test]
fn free_point_mass_moves_linearly() {
    let mut env = PointMass::new(PointmassConfig::default(), 2.0, true).unwrap();
    env.reset(1);
    env.set_state(0.0, 0.5);
    for t in 1..=10 {
        env.step(&[0.0]).unwrap();
        assert_eq!(env.velocity(), 0.5);
        assert!((env.position() - 0.05 * t as f64).abs() < 1e-12);
    }
}

#[test]
fn heavier_mass_halves_velocity_changes() {
    let actions = [0.3, -1.0, 0.7, 0.25, 1.0];
    let deltas = |mass: f64| {
        let mut env = PointMass::new(PointmassConfig::default(), mass, true).unwrap();
        env.reset(5);
        env.set_state(0.0, 0.0);
        let mut out = Vec::new();
        for &a in &actions {
            let v0 = env.velocity();
            env.step(&[a]).unwrap();
            out.push(env.velocity() - v0);
        }
        out
    };
    let (light, heavy) = (deltas(1.0), deltas(2.0));
    for (l, h) in light.iter().zip(&heavy) {
        assert_eq!(*h, l / 2.0);
    }
}

#[test]
fn point_mass_episodes_end_at_the_horizon() {
    let cfg = PointmassConfig {
        horizon: 5,
        ..Default::default()
    };
    let mut env = PointMass::new(cfg, 1.0, true).unwrap();
    let a = env.reset(3);
    assert_eq!(a, env.reset(3));
    for t in 1..=5 {
        let step = env.step(&[0.2]).unwrap();
        assert!(step.reward.is_finite());
        assert_eq!(step.done, t == 5);
    }
    assert!(PointMass::new(PointmassConfig::default(), 0.0, true).is_err());
    assert!(make_pointmass(&PointmassConfig {
        mass_low: -1.0,
        ..Default::default()
    })
    .is_err());
}

#[test]
fn shifted_batches_are_balanced_and_shifted() {
    let cfg = ShiftedFeatureConfig::default();
    let batch = shifted_feature_batch(&cfg, 4000, &mut rng::seeded(1)).unwrap();
    let col = batch.column(cfg.shifted_index);
    for k in 0..4 {
        let vals: Vec<f64> = col
            .iter()
            .zip(batch.env_labels())
            .filter(|(_, &e)| e == k)
            .map(|(v, _)| *v)
            .collect();
        assert_eq!(vals.len(), 1000);
        let mean = vals.iter().sum::<f64>() / 1000.0;
        assert!((mean - 4.0 * k as f64).abs() < 0.15);
    }
    assert!(shifted_feature_batch(
        &ShiftedFeatureConfig { shift: 1.0, ..cfg },
        10,
        &mut rng::seeded(1)
    )
    .is_err());
}

#[test]
fn dataset_csv_has_header_and_rows() {
    let mut suite = make_spurious_bandit(&BanditConfig::default()).unwrap();
    let rows = collect_dataset(&mut suite.train, 3, &mut rng::seeded(2)).unwrap();
    assert_eq!(rows.len(), 12);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    write_dataset_csv(&path, &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "# format_version=1");
    assert_eq!(lines.next().unwrap(), "z0,z1,z2,z3,z4,z5,a0,reward,env");
    assert_eq!(lines.count(), 12);
    assert_eq!(read_dataset_csv(&path).unwrap(), rows);
    let batch = dataset_features(&rows).unwrap();
    assert_eq!((batch.n(), batch.d(), batch.num_envs()), (12, 6, 4));
    assert_eq!(batch.env_labels()[..4], [0, 1, 2, 3]);
}

#[test]
fn dataset_reader_rejects_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    for text in [
        "z0,reward,env\n1,2,0\n",
        "# format_version=2\nz0,reward,env\n",
        "# format_version=1\nz0,reward,env\n1,2\n",
        "# format_version=1\nz0,reward,env\n1,x,0\n",
        "# format_version=1\nz0,env,reward\n",
    ] {
        std::fs::write(&path, text).unwrap();
        assert!(read_dataset_csv(&path).is_err(), "{text}");
    }
}
