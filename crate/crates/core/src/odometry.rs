//! Compression of high-rate odometry into one relative-pose edge per
//! camera-frame interval.

use serde::{Deserialize, Serialize};

use crate::noise::DiagonalNoise;
use crate::se2::Pose2;

/// Body-frame pose increment since the previous sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometrySample {
    pub timestamp: f64,
    pub delta: Pose2,
}

impl OdometrySample {
    pub fn new(timestamp: f64, delta: Pose2) -> Self {
        OdometrySample { timestamp, delta }
    }
}

/// Relative motion over the window `(t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccumulatedEdge {
    pub t_start: f64,
    pub t_end: f64,
    pub relative: Pose2,
    pub noise: DiagonalNoise,
    /// Number of samples folded into `relative`.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OdometryError {
    #[error("odometry timestamps decrease at sample {index} ({prev} > {next})")]
    Unsorted { index: usize, prev: f64, next: f64 },
    #[error("empty or inverted window ({t_start}, {t_end}]")]
    BadWindow { t_start: f64, t_end: f64 },
    #[error("non-finite odometry timestamp at sample {0}")]
    NonFinite(usize),
}

/// Checks timestamps are finite and non-decreasing.
pub fn validate_stream(samples: &[OdometrySample]) -> Result<(), OdometryError> {
    for (i, s) in samples.iter().enumerate() {
        if !s.timestamp.is_finite() {
            return Err(OdometryError::NonFinite(i));
        }
        if i > 0 && samples[i - 1].timestamp > s.timestamp {
            return Err(OdometryError::Unsorted {
                index: i,
                prev: samples[i - 1].timestamp,
                next: s.timestamp,
            });
        }
    }
    Ok(())
}

/// Samples of a sorted stream with `t_start < timestamp <= t_end`.
pub fn window(samples: &[OdometrySample], t_start: f64, t_end: f64) -> &[OdometrySample] {
    let lo = samples.partition_point(|s| s.timestamp <= t_start);
    let hi = samples.partition_point(|s| s.timestamp <= t_end);
    &samples[lo..hi.max(lo)]
}

/// Composes every increment in `(t_start, t_end]`; an empty window gives the
/// identity.
pub fn accumulate(
    samples: &[OdometrySample],
    t_start: f64,
    t_end: f64,
    edge_noise: DiagonalNoise,
) -> Result<AccumulatedEdge, OdometryError> {
    if !(t_start < t_end) {
        return Err(OdometryError::BadWindow { t_start, t_end });
    }
    validate_stream(samples)?;
    let inside = window(samples, t_start, t_end);
    let relative = inside
        .iter()
        .fold(Pose2::IDENTITY, |acc, s| acc.compose(&s.delta));
    Ok(AccumulatedEdge {
        t_start,
        t_end,
        relative,
        noise: edge_noise,
        samples: inside.len(),
    })
}

/// Converts absolute odometry poses into body-frame increments.
///
/// The first pose only sets the reference, so the output is one shorter.
pub fn increments_from_absolute(poses: &[(f64, Pose2)]) -> Vec<OdometrySample> {
    poses
        .windows(2)
        .map(|w| OdometrySample::new(w[1].0, w[0].1.between(&w[1].1)))
        .collect()
}
