//! Online fusion of absolute pose measurements with odometry.
//!
//! Each measurement frame adds one pose variable, a measurement factor and
//! (after the first frame) one between factor built from the odometry
//! accumulated since the previous frame. The first frame also receives the
//! prior factor when a prior is known.

use serde::{Deserialize, Serialize};

use crate::factors::{Factor, VariableKey};
use crate::noise::{DiagonalNoise, MEASUREMENT_DEFAULT, ODOMETRY_DEFAULT, PRIOR_DEFAULT};
use crate::odometry::{accumulate, OdometryError, OdometrySample};
use crate::se2::Pose2;
use crate::smoother::{SmootherError, SolveReport, Smoother, SolverSettings};
use crate::trajectory::TrajectoryRecord;

/// Noise models used for the three factor kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionNoise {
    pub prior: DiagonalNoise,
    pub odometry: DiagonalNoise,
    pub measurement: DiagonalNoise,
}

impl Default for FusionNoise {
    fn default() -> Self {
        FusionNoise {
            prior: PRIOR_DEFAULT,
            odometry: ODOMETRY_DEFAULT,
            measurement: MEASUREMENT_DEFAULT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error("measurement time {next} does not increase past {prev}")]
    MeasurementOrder { prev: f64, next: f64 },
    #[error("odometry time {next} precedes {prev}")]
    OdometryOrder { prev: f64, next: f64 },
    #[error("prior must be set before the first measurement")]
    LatePrior,
    #[error("non-finite timestamp")]
    NonFiniteTime,
    #[error(transparent)]
    Odometry(#[from] OdometryError),
    #[error(transparent)]
    Smoother(#[from] SmootherError),
}

/// Result of one measurement frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameUpdate {
    pub timestamp: f64,
    pub key: VariableKey,
    pub pose: Pose2,
    pub report: SolveReport,
}

#[derive(Debug, Clone)]
pub struct FusionSession {
    noise: FusionNoise,
    prior: Option<Pose2>,
    smoother: Smoother,
    pending: Vec<OdometrySample>,
    frame_times: Vec<f64>,
}

impl FusionSession {
    pub fn new(noise: FusionNoise, settings: SolverSettings) -> Self {
        FusionSession {
            noise,
            prior: None,
            smoother: Smoother::new(settings),
            pending: Vec::new(),
            frame_times: Vec::new(),
        }
    }

    pub fn noise(&self) -> &FusionNoise {
        &self.noise
    }

    pub fn smoother(&self) -> &Smoother {
        &self.smoother
    }

    pub fn frames(&self) -> usize {
        self.frame_times.len()
    }

    /// Sets the anchoring prior; only allowed before the first measurement.
    pub fn set_prior(&mut self, prior: Pose2) -> Result<(), FusionError> {
        if !self.frame_times.is_empty() {
            return Err(FusionError::LatePrior);
        }
        self.prior = Some(prior);
        Ok(())
    }

    pub fn push_odometry(&mut self, sample: OdometrySample) -> Result<(), FusionError> {
        if !sample.timestamp.is_finite() {
            return Err(FusionError::NonFiniteTime);
        }
        if let Some(last) = self.pending.last() {
            if sample.timestamp < last.timestamp {
                return Err(FusionError::OdometryOrder {
                    prev: last.timestamp,
                    next: sample.timestamp,
                });
            }
        }
        self.pending.push(sample);
        Ok(())
    }

    /// Adds a measurement frame and re-optimizes.
    pub fn push_measurement(&mut self, timestamp: f64, measured: Pose2) -> Result<FrameUpdate, FusionError> {
        if !timestamp.is_finite() {
            return Err(FusionError::NonFiniteTime);
        }
        let noise = self.noise;
        let key = match self.frame_times.last().copied() {
            None => {
                let key = self.smoother.add_variable(Some(self.prior.unwrap_or(measured)));
                if let Some(prior) = self.prior {
                    self.smoother.add_factor(Factor::prior(key, prior, noise.prior))?;
                }
                key
            }
            Some(prev) => {
                if !(timestamp > prev) {
                    return Err(FusionError::MeasurementOrder { prev, next: timestamp });
                }
                let edge = accumulate(&self.pending, prev, timestamp, noise.odometry)?;
                let from = VariableKey(self.frame_times.len() - 1);
                let key = self.smoother.add_variable(None);
                self.smoother
                    .add_factor(Factor::between(from, key, edge.relative, edge.noise))?;
                key
            }
        };
        self.pending.retain(|s| s.timestamp > timestamp);
        self.smoother
            .add_factor(Factor::measurement(key, measured, noise.measurement))?;
        self.frame_times.push(timestamp);
        let report = self.smoother.update()?;
        Ok(FrameUpdate {
            timestamp,
            key,
            pose: self.smoother.pose(key)?,
            report,
        })
    }

    /// Current smoothed estimate of every frame.
    pub fn trajectory(&self) -> TrajectoryRecord {
        let Ok(values) = self.smoother.estimate() else {
            return TrajectoryRecord::new();
        };
        let entries = self
            .frame_times
            .iter()
            .copied()
            .zip(values.into_poses())
            .collect();
        TrajectoryRecord::from_entries(entries).expect("frame times increase")
    }
}

#[derive(Debug, Clone)]
pub struct FusionResult {
    pub estimate: TrajectoryRecord,
    pub updates: Vec<FrameUpdate>,
}

/// Runs a whole session frame by frame.
///
/// Odometry samples up to and including each measurement time are fed before
/// that measurement; samples before the first measurement are ignored.
pub fn fuse(
    odometry: &[OdometrySample],
    measurements: &TrajectoryRecord,
    prior: Option<Pose2>,
    noise: FusionNoise,
    settings: SolverSettings,
) -> Result<FusionResult, FusionError> {
    let mut session = FusionSession::new(noise, settings);
    if let Some(p) = prior {
        session.set_prior(p)?;
    }
    let mut updates = Vec::with_capacity(measurements.len());
    let mut next = 0;
    for &(t, z) in measurements.entries() {
        while next < odometry.len() && odometry[next].timestamp <= t {
            session.push_odometry(odometry[next])?;
            next += 1;
        }
        updates.push(session.push_measurement(t, z)?);
    }
    Ok(FusionResult {
        estimate: session.trajectory(),
        updates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit() -> FusionNoise {
        let n = DiagonalNoise::isotropic(1.0).unwrap();
        FusionNoise {
            prior: n,
            odometry: n,
            measurement: n,
        }
    }

    #[test]
    fn single_frame_symmetric_fusion() {
        let mut m = TrajectoryRecord::new();
        m.push(0.0, Pose2::new(2.0, 0.0, 0.0)).unwrap();
        let res = fuse(&[], &m, Some(Pose2::IDENTITY), unit(), SolverSettings::default()).unwrap();
        let p = res.estimate.entries()[0].1;
        assert_abs_diff_eq!(p.x(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y(), 0.0, epsilon = 1e-9);
        assert_eq!(res.updates.len(), 1);
    }

    #[test]
    fn without_prior_the_first_measurement_anchors() {
        let mut s = FusionSession::new(unit(), SolverSettings::default());
        let u = s.push_measurement(1.0, Pose2::new(3.0, 4.0, 0.5)).unwrap();
        assert_eq!(u.pose, Pose2::new(3.0, 4.0, 0.5));
        assert_eq!(s.set_prior(Pose2::IDENTITY), Err(FusionError::LatePrior));
    }

    #[test]
    fn odometry_between_frames_is_used() {
        let mut s = FusionSession::new(FusionNoise::default(), SolverSettings::default());
        s.set_prior(Pose2::IDENTITY).unwrap();
        s.push_odometry(OdometrySample::new(-1.0, Pose2::new(50.0, 0.0, 0.0))).unwrap();
        s.push_measurement(0.0, Pose2::IDENTITY).unwrap();
        s.push_odometry(OdometrySample::new(0.05, Pose2::new(1.0, 0.0, 0.0))).unwrap();
        s.push_odometry(OdometrySample::new(0.1, Pose2::new(1.0, 0.0, 0.0))).unwrap();
        s.push_odometry(OdometrySample::new(0.15, Pose2::new(7.0, 0.0, 0.0))).unwrap();
        let u = s.push_measurement(0.1, Pose2::new(2.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(u.pose.x(), 2.0, epsilon = 1e-9);
        // The sample after the frame stays pending for the next edge.
        let u = s.push_measurement(0.2, Pose2::new(9.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(u.pose.x(), 9.0, epsilon = 1e-6);
    }

    #[test]
    fn ordering_errors() {
        let mut s = FusionSession::new(unit(), SolverSettings::default());
        s.push_measurement(1.0, Pose2::IDENTITY).unwrap();
        assert!(matches!(
            s.push_measurement(1.0, Pose2::IDENTITY),
            Err(FusionError::MeasurementOrder { .. })
        ));
        s.push_odometry(OdometrySample::new(2.0, Pose2::IDENTITY)).unwrap();
        assert!(matches!(
            s.push_odometry(OdometrySample::new(1.5, Pose2::IDENTITY)),
            Err(FusionError::OdometryOrder { .. })
        ));
        assert_eq!(s.frames(), 1);
    }
}
