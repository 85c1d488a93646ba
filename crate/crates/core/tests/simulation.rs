use posefuse::fusion::{fuse, FusionNoise};
use posefuse::odometry::accumulate;
use posefuse::sim::{generate, raw_measurement_rmse, SimConfig};
use posefuse::{DiagonalNoise, SolverSettings};
use posefuse_testkit::{max_pose_distance, pose_distance};

fn sample_std(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[test]
fn measurement_noise_statistics() {
    let cfg = SimConfig {
        seed: 5,
        n_frames: 10_000,
        outlier_rate: 0.0,
        ..Default::default()
    };
    let out = generate(&cfg).unwrap();
    let dx: Vec<f64> = out
        .measurements
        .entries()
        .iter()
        .zip(out.ground_truth.entries())
        .map(|((_, m), (_, t))| m.x() - t.x())
        .collect();
    let sx = sample_std(&dx);
    assert!((sx / 15.621 - 1.0).abs() <= 0.03, "sigma_x {sx}");

    let (rmse, _) = raw_measurement_rmse(&out);
    let expected = 15.621f64.hypot(10.359);
    assert!((rmse / expected - 1.0).abs() <= 0.05, "rmse {rmse} vs {expected}");
}

#[test]
fn zero_noise_limit() {
    let cfg = SimConfig {
        seed: 12,
        n_frames: 300,
        ..Default::default()
    }
    .noiseless();
    let out = generate(&cfg).unwrap();
    let truth: Vec<_> = out.ground_truth.poses().copied().collect();
    let meas: Vec<_> = out.measurements.poses().copied().collect();
    assert!(max_pose_distance(&meas, &truth) <= 1e-9);

    let mut pose = truth[0];
    let frames = out.ground_truth.entries();
    for w in frames.windows(2) {
        let edge = accumulate(&out.odometry, w[0].0, w[1].0, cfg.odometry_step_noise).unwrap();
        pose = pose.compose(&edge.relative);
        assert!(pose_distance(&pose, &w[1].1) <= 1e-6);
    }

    let tight = DiagonalNoise::isotropic(1e-3).unwrap();
    let noise = FusionNoise {
        prior: tight,
        odometry: tight,
        measurement: tight,
    };
    let fused = fuse(&out.odometry, &out.measurements, Some(out.prior), noise, SolverSettings::default()).unwrap();
    let est: Vec<_> = fused.estimate.poses().copied().collect();
    assert!(max_pose_distance(&est, &truth) <= 1e-6);
}

#[test]
fn ground_truth_stays_inside_the_extent() {
    for seed in 0..5 {
        let cfg = SimConfig {
            seed,
            n_frames: 2000,
            ..Default::default()
        };
        let out = generate(&cfg).unwrap();
        let (w, h) = cfg.extent;
        for p in out.ground_truth.poses() {
            assert!(p.x().abs() <= w / 2.0 && p.y().abs() <= h / 2.0, "seed {seed}: {p:?}");
        }
    }
}
