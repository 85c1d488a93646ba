//! Timestamp association and trajectory RMSE.
//!
//! Errors are per pose, with no trajectory alignment: translation error is
//! the Euclidean distance between positions and rotation error the absolute
//! wrapped heading difference. Both trajectories are assumed to share the
//! world frame.

use std::io::{self, Write};

use serde::Serialize;

use crate::se2::normalize_angle;
use crate::trajectory::TrajectoryRecord;

/// Default association tolerance in seconds.
pub const DEFAULT_MAX_DT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no poses could be associated within {max_dt} s (after skipping {skipped})")]
    NoPairs { max_dt: f64, skipped: usize },
}

/// Greedy nearest-timestamp matching.
///
/// Candidate pairs within `max_dt` are taken in order of increasing
/// `|dt|` (ties broken by index), each index at most once. The result is
/// sorted by the index into `a`.
pub fn associate(a: &TrajectoryRecord, b: &TrajectoryRecord, max_dt: f64) -> Vec<(usize, usize)> {
    let ta: Vec<f64> = a.timestamps().collect();
    let tb: Vec<f64> = b.timestamps().collect();
    let mut candidates = Vec::new();
    let mut lo = 0;
    for (i, &t) in ta.iter().enumerate() {
        while lo < tb.len() && tb[lo] < t - max_dt {
            lo += 1;
        }
        for (j, &u) in tb.iter().enumerate().skip(lo) {
            if u > t + max_dt {
                break;
            }
            let dt = (u - t).abs();
            if dt <= max_dt {
                candidates.push((dt, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; ta.len()];
    let mut used_b = vec![false; tb.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub max_dt: f64,
    /// Associated pairs dropped from the start of the estimate before scoring.
    pub skip_first: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            max_dt: DEFAULT_MAX_DT,
            skip_first: 0,
        }
    }
}

/// RMSE summary plus the per-pose error series it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    #[serde(rename = "rmse_translation_m")]
    pub rmse_translation: f64,
    #[serde(rename = "rmse_rotation_deg")]
    pub rmse_rotation: f64,
    pub n_poses: usize,
    #[serde(skip)]
    pub timestamps: Vec<f64>,
    #[serde(skip)]
    pub translation_errors: Vec<f64>,
    #[serde(skip)]
    pub rotation_errors_deg: Vec<f64>,
}

impl ErrorReport {
    /// Builds a report from per-pose errors; rotation errors in degrees.
    pub fn from_series(timestamps: Vec<f64>, translation: Vec<f64>, rotation_deg: Vec<f64>) -> Self {
        let rms = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt()
            }
        };
        ErrorReport {
            rmse_translation: rms(&translation),
            rmse_rotation: rms(&rotation_deg),
            n_poses: translation.len(),
            timestamps,
            translation_errors: translation,
            rotation_errors_deg: rotation_deg,
        }
    }

    /// Per-pose errors as CSV: `timestamp,translation_m,rotation_deg`.
    pub fn write_per_pose<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "timestamp,translation_m,rotation_deg")?;
        for ((t, e), r) in self
            .timestamps
            .iter()
            .zip(&self.translation_errors)
            .zip(&self.rotation_errors_deg)
        {
            writeln!(out, "{t:?},{e:?},{r:?}")?;
        }
        out.flush()
    }
}

/// Per-pose translation and rotation errors of `estimate` against `truth`.
pub fn compute_errors(
    estimate: &TrajectoryRecord,
    truth: &TrajectoryRecord,
    options: &EvalOptions,
) -> Result<ErrorReport, EvalError> {
    let pairs = associate(estimate, truth, options.max_dt);
    let kept = pairs.get(options.skip_first..).unwrap_or(&[]);
    if kept.is_empty() {
        return Err(EvalError::NoPairs {
            max_dt: options.max_dt,
            skipped: options.skip_first.min(pairs.len()),
        });
    }
    let mut ts = Vec::with_capacity(kept.len());
    let mut trans = Vec::with_capacity(kept.len());
    let mut rot = Vec::with_capacity(kept.len());
    for &(i, j) in kept {
        let (t, e) = estimate.entries()[i];
        let g = truth.entries()[j].1;
        ts.push(t);
        trans.push((e.x() - g.x()).hypot(e.y() - g.y()));
        rot.push(normalize_angle(e.theta() - g.theta()).abs().to_degrees());
    }
    Ok(ErrorReport::from_series(ts, trans, rot))
}
