//! Deterministic synthetic sessions: a smooth ground-truth path, noisy
//! high-rate odometry and noisy absolute pose measurements.
//!
//! # Random numbers
//!
//! All randomness comes from xoshiro256++ seeded through SplitMix64
//! (`Xoshiro256PlusPlus::seed_from_u64`). Three independent streams are
//! derived with the generator's `jump()` function, in this order:
//! trajectory waypoints, odometry noise, measurement noise. Uniform doubles
//! are `(next_u64 >> 11) * 2^-53`. Each standard normal consumes two uniforms
//! `u1, u2` and is `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)` (Box-Muller, cosine
//! branch only).

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::eval::{compute_errors, EvalOptions};
use crate::noise::{DiagonalNoise, MEASUREMENT_DEFAULT, ODOMETRY_DEFAULT};
use crate::odometry::OdometrySample;
use crate::se2::{normalize_angle, Pose2, Twist2};
use crate::trajectory::TrajectoryRecord;

/// Camera frame period in seconds (10 Hz).
pub const FRAME_PERIOD: f64 = 0.1;

/// Upper bound on path curvature, 1/m.
const MAX_CURVATURE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_frames: usize,
    /// Odometry samples per camera frame.
    pub odom_rate_multiplier: usize,
    /// Width and height of the area, in meters, centered on the origin.
    pub extent: (f64, f64),
    /// Distance travelled per camera frame, in meters.
    pub mean_speed: f64,
    pub measurement_noise: DiagonalNoise,
    /// Noise of one accumulated frame-to-frame odometry edge.
    pub odometry_step_noise: DiagonalNoise,
    pub outlier_rate: f64,
    pub outlier_sigma_scale: f64,
    pub bad_prior_offset: Option<Pose2>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            n_frames: 1000,
            odom_rate_multiplier: 10,
            extent: (300.0, 150.0),
            mean_speed: 3.0,
            measurement_noise: MEASUREMENT_DEFAULT,
            odometry_step_noise: ODOMETRY_DEFAULT,
            outlier_rate: 0.05,
            outlier_sigma_scale: 4.0,
            bad_prior_offset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Invalid(String),
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Invalid(m.to_string()));
        if self.n_frames < 2 {
            return bad("n_frames must be at least 2");
        }
        if self.odom_rate_multiplier < 1 {
            return bad("odom_rate_multiplier must be at least 1");
        }
        let (w, h) = self.extent;
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return bad("extent must be positive and finite");
        }
        if !(self.mean_speed.is_finite() && self.mean_speed > 0.0) {
            return bad("mean_speed must be positive and finite");
        }
        if !(0.0..1.0).contains(&self.outlier_rate) {
            return bad("outlier_rate must lie in [0, 1)");
        }
        if !(self.outlier_sigma_scale.is_finite() && self.outlier_sigma_scale > 1.0) {
            return bad("outlier_sigma_scale must be greater than 1");
        }
        Ok(())
    }

    /// Same session with every noise source effectively switched off.
    pub fn noiseless(&self) -> SimConfig {
        let tiny = DiagonalNoise::isotropic(1e-12).expect("positive sigma");
        SimConfig {
            measurement_noise: tiny,
            odometry_step_noise: tiny,
            outlier_rate: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub ground_truth: TrajectoryRecord,
    pub odometry: Vec<OdometrySample>,
    pub measurements: TrajectoryRecord,
    pub prior: Pose2,
}

struct Gaussian {
    rng: Xoshiro256PlusPlus,
}

impl Gaussian {
    fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    fn standard(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (TAU * u2).cos()
    }
}

fn streams(seed: u64) -> [Gaussian; 3] {
    let mut base = Xoshiro256PlusPlus::seed_from_u64(seed);
    let traj = base.clone();
    base.jump();
    let odom = base.clone();
    base.jump();
    [
        Gaussian { rng: traj },
        Gaussian { rng: odom },
        Gaussian { rng: base },
    ]
}

/// Waypoint-following path sampled at the odometry rate.
fn ground_truth_path(cfg: &SimConfig, rng: &mut Gaussian) -> Vec<Pose2> {
    let m = cfg.odom_rate_multiplier;
    let steps = (cfg.n_frames - 1) * m;
    let ds = cfg.mean_speed / m as f64;
    let (w, h) = cfg.extent;
    let radius = (1.0 / MAX_CURVATURE).min(w.min(h) / 8.0);
    let capture = radius / 2.0;
    // A turn toward a new waypoint stays within 2R of where it starts, which
    // is within R/2 of the previous waypoint.
    let margin = 3.0 * radius;
    let (hx, hy) = (w / 2.0 - margin, h / 2.0 - margin);
    let max_turn = ds / radius;

    let mut draw_waypoint = |from: (f64, f64)| {
        let mut wp = (0.0, 0.0);
        for _ in 0..100 {
            wp = (
                (2.0 * rng.uniform() - 1.0) * hx,
                (2.0 * rng.uniform() - 1.0) * hy,
            );
            if (wp.0 - from.0).hypot(wp.1 - from.1) >= 3.0 * radius {
                break;
            }
        }
        wp
    };

    let mut pose = Pose2::IDENTITY;
    let mut waypoint = draw_waypoint((0.0, 0.0));
    let mut path = Vec::with_capacity(steps + 1);
    path.push(pose);
    for _ in 0..steps {
        let (dx, dy) = (waypoint.0 - pose.x(), waypoint.1 - pose.y());
        if dx.hypot(dy) < capture {
            waypoint = draw_waypoint((pose.x(), pose.y()));
        }
        let (dx, dy) = (waypoint.0 - pose.x(), waypoint.1 - pose.y());
        let heading_error = normalize_angle(dy.atan2(dx) - pose.theta());
        let turn = heading_error.clamp(-max_turn, max_turn);
        pose = pose.retract(&Twist2::new(ds, 0.0, turn));
        path.push(pose);
    }
    path
}

/// Generates a full synthetic session from `cfg`.
pub fn generate(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let [mut traj_rng, mut odom_rng, mut meas_rng] = streams(cfg.seed);
    let m = cfg.odom_rate_multiplier;
    let dt = FRAME_PERIOD / m as f64;
    let path = ground_truth_path(cfg, &mut traj_rng);

    let step_sigmas = cfg.odometry_step_noise.sigmas().map(|s| s / (m as f64).sqrt());
    let odometry = path
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let d = w[0].between(&w[1]);
            let noisy = Pose2::new(
                d.x() + step_sigmas[0] * odom_rng.standard(),
                d.y() + step_sigmas[1] * odom_rng.standard(),
                d.theta() + step_sigmas[2] * odom_rng.standard(),
            );
            OdometrySample::new((i + 1) as f64 * dt, noisy)
        })
        .collect();

    let mut ground_truth = Vec::with_capacity(cfg.n_frames);
    let mut measurements = Vec::with_capacity(cfg.n_frames);
    let sigmas = cfg.measurement_noise.sigmas();
    for k in 0..cfg.n_frames {
        let t = (k * m) as f64 * dt;
        let truth = path[k * m];
        let scale = if meas_rng.uniform() < cfg.outlier_rate {
            cfg.outlier_sigma_scale
        } else {
            1.0
        };
        let measured = Pose2::new(
            truth.x() + scale * sigmas[0] * meas_rng.standard(),
            truth.y() + scale * sigmas[1] * meas_rng.standard(),
            truth.theta() + scale * sigmas[2] * meas_rng.standard(),
        );
        ground_truth.push((t, truth));
        measurements.push((t, measured));
    }

    let start = path[0];
    let prior = cfg
        .bad_prior_offset
        .map_or(start, |offset| start.compose(&offset));
    Ok(SimOutput {
        ground_truth: TrajectoryRecord::from_entries(ground_truth).expect("increasing frame times"),
        odometry,
        measurements: TrajectoryRecord::from_entries(measurements).expect("increasing frame times"),
        prior,
    })
}

/// Translation (m) and rotation (deg) RMSE of the raw measurements.
pub fn raw_measurement_rmse(out: &SimOutput) -> (f64, f64) {
    let report = compute_errors(&out.measurements, &out.ground_truth, &EvalOptions::default())
        .expect("measurements share ground-truth timestamps");
    (report.rmse_translation, report.rmse_rotation)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SimConfig {
        SimConfig {
            seed,
            n_frames: 50,
            ..Default::default()
        }
    }

    #[test]
    fn counts() {
        let cfg = small(3);
        let out = generate(&cfg).unwrap();
        assert_eq!(out.ground_truth.len(), 50);
        assert_eq!(out.measurements.len(), 50);
        assert_eq!(out.odometry.len(), 49 * cfg.odom_rate_multiplier);
        assert_eq!(out.prior, Pose2::IDENTITY);
    }

    #[test]
    fn frame_and_odometry_times_line_up() {
        let out = generate(&small(1)).unwrap();
        let m = 10;
        for (k, (t, _)) in out.ground_truth.entries().iter().enumerate().skip(1) {
            assert_eq!(out.odometry[k * m - 1].timestamp, *t);
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&small(11)).unwrap(), generate(&small(11)).unwrap());
        assert_ne!(
            generate(&small(11)).unwrap().measurements,
            generate(&small(12)).unwrap().measurements
        );
    }

    #[test]
    fn bad_prior_offset_applies_to_start() {
        let cfg = SimConfig {
            bad_prior_offset: Some(Pose2::new(20.0, 20.0, 0.5)),
            ..small(2)
        };
        let out = generate(&cfg).unwrap();
        assert_eq!(out.prior, Pose2::new(20.0, 20.0, 0.5));
        assert_eq!(out.ground_truth.entries()[0].1, Pose2::IDENTITY);
    }

    #[test]
    fn noise_settings_do_not_change_the_path() {
        let a = generate(&small(5)).unwrap();
        let b = generate(&small(5).noiseless()).unwrap();
        assert_eq!(a.ground_truth, b.ground_truth);
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            SimConfig { n_frames: 1, ..Default::default() },
            SimConfig { odom_rate_multiplier: 0, ..Default::default() },
            SimConfig { extent: (0.0, 10.0), ..Default::default() },
            SimConfig { mean_speed: -1.0, ..Default::default() },
            SimConfig { outlier_rate: 1.0, ..Default::default() },
            SimConfig { outlier_sigma_scale: 1.0, ..Default::default() },
        ] {
            assert!(generate(&cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn box_muller_moments() {
        let [mut g, _, _] = streams(99);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| g.standard()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }
}
