//! Subcommand implementations. Each returns its JSON summary so callers can
//! print it or inspect it in tests.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use posefuse::eval::{compute_errors, ErrorReport, EvalOptions};
use posefuse::fusion::{fuse, FusionNoise, FusionResult};
use posefuse::odometry::OdometrySample;
use posefuse::sim::{generate, SimConfig, SimOutput};
use posefuse::trajectory::{
    read_odometry_csv, read_trajectory_csv, write_odometry_csv, write_trajectory_csv, TrajectoryRecord,
};
use posefuse::{Pose2, SolverSettings};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::PipelineConfig;
use crate::error::CliError;

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const ODOMETRY_FILE: &str = "odometry.csv";
pub const MEASUREMENTS_FILE: &str = "measurements.csv";
pub const PRIOR_FILE: &str = "prior.json";
pub const ESTIMATE_FILE: &str = "estimate.csv";
pub const FUSE_REPORT_FILE: &str = "fuse_report.json";
pub const LATENCY_FILE: &str = "latency.json";
pub const ERRORS_FILE: &str = "errors.json";
pub const PER_POSE_FILE: &str = "per_pose_errors.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Raw RMSE below which improvement ratios are reported as `null`.
pub const RATIO_FLOOR: f64 = 1e-9;

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::io(path, e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn write_prior(path: &Path, prior: &Pose2) -> Result<(), CliError> {
    write_json(path, prior)
}

pub fn read_prior(path: &Path) -> Result<Pose2, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_prior(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Parses a prior file: `{"x": .., "y": .., "theta": ..}`.
pub fn parse_prior(text: &str) -> Result<Pose2, serde_json::Error> {
    serde_json::from_str(text)
}

/// Writes the four simulation files into `out_dir`.
pub fn cmd_simulate(sim: &SimConfig, out_dir: &Path) -> Result<SimOutput, CliError> {
    let out = generate(sim)?;
    ensure_dir(out_dir)?;
    let p = out_dir.join(GROUND_TRUTH_FILE);
    write_trajectory_csv(&out.ground_truth, &p).map_err(|e| CliError::io(&p, e))?;
    let p = out_dir.join(ODOMETRY_FILE);
    write_odometry_csv(&out.odometry, &p).map_err(|e| CliError::io(&p, e))?;
    let p = out_dir.join(MEASUREMENTS_FILE);
    write_trajectory_csv(&out.measurements, &p).map_err(|e| CliError::io(&p, e))?;
    write_prior(&out_dir.join(PRIOR_FILE), &out.prior)?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
struct UpdateRow {
    key: usize,
    timestamp: f64,
    iterations: usize,
    initial_error: f64,
    final_error: f64,
    converged: bool,
}

/// Deterministic per-update solver statistics.
pub fn fuse_report(result: &FusionResult) -> Value {
    let rows: Vec<UpdateRow> = result
        .updates
        .iter()
        .map(|u| UpdateRow {
            key: u.key.index(),
            timestamp: u.timestamp,
            iterations: u.report.iterations,
            initial_error: u.report.initial_error,
            final_error: u.report.final_error,
            converged: u.report.converged,
        })
        .collect();
    json!({
        "frames": rows.len(),
        "total_iterations": rows.iter().map(|r| r.iterations).sum::<usize>(),
        "max_iterations": rows.iter().map(|r| r.iterations).max().unwrap_or(0),
        "all_converged": rows.iter().all(|r| r.converged),
        "final_error": rows.last().map(|r| r.final_error),
        "updates": rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub max_ms: f64,
}

pub fn latency_stats(result: &FusionResult) -> LatencyStats {
    let lat: Vec<f64> = result.updates.iter().map(|u| u.report.duration_ms).collect();
    if lat.is_empty() {
        return LatencyStats { mean_ms: 0.0, max_ms: 0.0 };
    }
    LatencyStats {
        mean_ms: lat.iter().sum::<f64>() / lat.len() as f64,
        max_ms: lat.iter().copied().fold(0.0, f64::max),
    }
}

/// Wall-clock timings; kept apart from the deterministic outputs.
pub fn latency_report(result: &FusionResult) -> Value {
    let stats = latency_stats(result);
    json!({
        "mean_update_ms": stats.mean_ms,
        "max_update_ms": stats.max_ms,
        "update_ms": result.updates.iter().map(|u| u.report.duration_ms).collect::<Vec<_>>(),
    })
}

/// Fuses in-memory inputs and writes `estimate.csv`, `fuse_report.json`
/// and `latency.json`.
pub fn fuse_to_dir(
    odometry: &[OdometrySample],
    measurements: &TrajectoryRecord,
    prior: Option<Pose2>,
    noise: FusionNoise,
    out_dir: &Path,
) -> Result<FusionResult, CliError> {
    let result = fuse(odometry, measurements, prior, noise, SolverSettings::default())?;
    ensure_dir(out_dir)?;
    let p = out_dir.join(ESTIMATE_FILE);
    write_trajectory_csv(&result.estimate, &p).map_err(|e| CliError::io(&p, e))?;
    write_json(&out_dir.join(FUSE_REPORT_FILE), &fuse_report(&result))?;
    write_json(&out_dir.join(LATENCY_FILE), &latency_report(&result))?;
    Ok(result)
}

pub fn cmd_fuse(
    odometry_path: &Path,
    measurements_path: &Path,
    prior_path: Option<&Path>,
    noise: FusionNoise,
    out_dir: &Path,
) -> Result<Value, CliError> {
    let odometry = read_odometry_csv(odometry_path).map_err(|e| CliError::data(odometry_path, e))?;
    let measurements =
        read_trajectory_csv(measurements_path).map_err(|e| CliError::data(measurements_path, e))?;
    let prior = prior_path.map(read_prior).transpose()?;
    let result = fuse_to_dir(&odometry, &measurements, prior, noise, out_dir)?;
    let mut report = fuse_report(&result);
    report
        .as_object_mut()
        .expect("report is an object")
        .remove("updates");
    report["estimate"] = json!(out_dir.join(ESTIMATE_FILE));
    Ok(report)
}

/// `fused / baseline`, or `None` when the baseline is essentially zero.
pub fn improvement_ratio(fused: f64, baseline: f64) -> Option<f64> {
    (baseline >= RATIO_FLOOR).then(|| fused / baseline)
}

fn format_ratio(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".to_string(), |r| format!("{r:.3}"))
}

/// One-line human comparison of a fused result against a baseline.
pub fn format_comparison(baseline: &ErrorReport, fused: &ErrorReport) -> String {
    format!(
        "translation {:.3} m -> {:.3} m (ratio {}), rotation {:.3} deg -> {:.3} deg (ratio {})",
        baseline.rmse_translation,
        fused.rmse_translation,
        format_ratio(improvement_ratio(fused.rmse_translation, baseline.rmse_translation)),
        baseline.rmse_rotation,
        fused.rmse_rotation,
        format_ratio(improvement_ratio(fused.rmse_rotation, baseline.rmse_rotation)),
    )
}

pub fn evaluation_json(report: &ErrorReport, baseline: Option<&ErrorReport>) -> Value {
    let mut v = serde_json::to_value(report).expect("report serializes");
    if let Some(b) = baseline {
        v["baseline_rmse_translation_m"] = json!(b.rmse_translation);
        v["baseline_rmse_rotation_deg"] = json!(b.rmse_rotation);
        v["ratio_translation"] = json!(improvement_ratio(report.rmse_translation, b.rmse_translation));
        v["ratio_rotation"] = json!(improvement_ratio(report.rmse_rotation, b.rmse_rotation));
    }
    v
}

pub struct EvaluateArgs<'a> {
    pub estimate: &'a Path,
    pub truth: &'a Path,
    pub baseline: Option<&'a Path>,
    pub per_pose: Option<&'a Path>,
    pub options: EvalOptions,
}

/// Returns the report JSON and, with a baseline, the human comparison line.
pub fn cmd_evaluate(args: &EvaluateArgs<'_>) -> Result<(Value, Option<String>), CliError> {
    let estimate = read_trajectory_csv(args.estimate).map_err(|e| CliError::data(args.estimate, e))?;
    let truth = read_trajectory_csv(args.truth).map_err(|e| CliError::data(args.truth, e))?;
    let report = compute_errors(&estimate, &truth, &args.options)?;
    let baseline = match args.baseline {
        Some(path) => {
            let b = read_trajectory_csv(path).map_err(|e| CliError::data(path, e))?;
            Some(compute_errors(&b, &truth, &args.options)?)
        }
        None => None,
    };
    if let Some(path) = args.per_pose {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        report
            .write_per_pose(BufWriter::new(file))
            .map_err(|e| CliError::io(path, e))?;
    }
    let line = baseline.as_ref().map(|b| format_comparison(b, &report));
    Ok((evaluation_json(&report, baseline.as_ref()), line))
}

/// Outcome of one simulate -> fuse -> evaluate run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub raw: ErrorReport,
    pub fused: ErrorReport,
    pub latency: LatencyStats,
    pub fusion: FusionResult,
}

impl PipelineRun {
    /// Deterministic summary fields (no timings).
    pub fn summary(&self) -> Value {
        json!({
            "seed": self.seed,
            "n_poses": self.fused.n_poses,
            "raw_rmse_translation_m": self.raw.rmse_translation,
            "raw_rmse_rotation_deg": self.raw.rmse_rotation,
            "fused_rmse_translation_m": self.fused.rmse_translation,
            "fused_rmse_rotation_deg": self.fused.rmse_rotation,
            "ratio_translation": improvement_ratio(self.fused.rmse_translation, self.raw.rmse_translation),
            "ratio_rotation": improvement_ratio(self.fused.rmse_rotation, self.raw.rmse_rotation),
        })
    }

    /// Summary plus mean/max per-update latency.
    pub fn summary_with_latency(&self) -> Value {
        let mut v = self.summary();
        v["mean_update_latency_ms"] = json!(self.latency.mean_ms);
        v["max_update_latency_ms"] = json!(self.latency.max_ms);
        v
    }
}

/// Runs the whole chain for `cfg` into `cfg.out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun, CliError> {
    cfg.validate()?;
    let dir = cfg.out_dir.clone();
    let sim = cmd_simulate(&cfg.simulation, &dir)?;
    let fusion = fuse_to_dir(&sim.odometry, &sim.measurements, Some(sim.prior), cfg.noise, &dir)?;
    let options = EvalOptions {
        max_dt: cfg.max_dt,
        skip_first: cfg.skip_first,
    };
    let raw = compute_errors(&sim.measurements, &sim.ground_truth, &options)?;
    let fused = compute_errors(&fusion.estimate, &sim.ground_truth, &options)?;
    write_json(&dir.join(ERRORS_FILE), &evaluation_json(&fused, Some(&raw)))?;
    let p = dir.join(PER_POSE_FILE);
    let file = File::create(&p).map_err(|e| CliError::io(&p, e))?;
    fused
        .write_per_pose(BufWriter::new(file))
        .map_err(|e| CliError::io(&p, e))?;
    let run = PipelineRun {
        seed: cfg.simulation.seed,
        out_dir: dir.clone(),
        latency: latency_stats(&fusion),
        raw,
        fused,
        fusion,
    };
    write_json(&dir.join(SUMMARY_FILE), &run.summary())?;
    Ok(run)
}

/// Runs `seeds` consecutive seeds starting at `cfg.simulation.seed`.
///
/// With more than one seed each run writes into `<out_dir>/seed_<n>` and a
/// `summary.csv` with one row per seed is written to `out_dir`.
pub fn cmd_pipeline(cfg: &PipelineConfig, seeds: usize) -> Result<Vec<PipelineRun>, CliError> {
    if seeds == 0 {
        return Err(CliError::Validation("--seeds must be at least 1".into()));
    }
    if seeds == 1 {
        return Ok(vec![run_pipeline(cfg)?]);
    }
    let base = cfg.simulation.seed;
    let mut runs = Vec::with_capacity(seeds);
    for i in 0..seeds as u64 {
        let seed = base.checked_add(i).ok_or_else(|| CliError::Validation("seed overflow".into()))?;
        let mut c = cfg.clone();
        c.simulation.seed = seed;
        c.out_dir = cfg.out_dir.join(format!("seed_{seed}"));
        runs.push(run_pipeline(&c)?);
    }
    let path = cfg.out_dir.join("summary.csv");
    let mut text = String::from(
        "seed,raw_rmse_translation_m,raw_rmse_rotation_deg,fused_rmse_translation_m,fused_rmse_rotation_deg,ratio_translation\n",
    );
    for r in &runs {
        let ratio = improvement_ratio(r.fused.rmse_translation, r.raw.rmse_translation)
            .map_or_else(String::new, |v| format!("{v:?}"));
        text.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{}\n",
            r.seed, r.raw.rmse_translation, r.raw.rmse_rotation, r.fused.rmse_translation, r.fused.rmse_rotation, ratio
        ));
    }
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(runs)
}
