use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use posefuse::eval::{EvalOptions, DEFAULT_MAX_DT};
use posefuse::fusion::FusionNoise;
use posefuse::{DiagonalNoise, Pose2, SolverSettings};
use posefuse_cli::commands::{self, EvaluateArgs};
use posefuse_cli::config::{parse_noise, parse_pose};
use posefuse_cli::stream::run_stream;
use posefuse_cli::{CliError, PipelineConfig};
use serde_json::Value;

/// Fuse noisy absolute poses with odometry on a 2D pose graph.
#[derive(Debug, Parser)]
#[command(name = "posefuse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic run: ground truth, odometry, measurements, prior.
    Simulate(RunArgs),
    /// Fuse odometry and measurement files into an estimated trajectory.
    Fuse(FuseArgs),
    /// Compare a trajectory against ground truth.
    Evaluate(EvalArgs),
    /// Online fusion over stdin/stdout.
    Stream(StreamArgs),
    /// Simulate, fuse and evaluate in one go.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct NoiseArgs {
    /// Prior sigmas as x,y,theta.
    #[arg(long, value_parser = parse_noise)]
    prior_sigma: Option<DiagonalNoise>,
    /// Per-frame odometry sigmas as x,y,theta.
    #[arg(long, value_parser = parse_noise)]
    odometry_sigma: Option<DiagonalNoise>,
    /// Measurement sigmas as x,y,theta.
    #[arg(long, value_parser = parse_noise)]
    measurement_sigma: Option<DiagonalNoise>,
}

impl NoiseArgs {
    fn apply(&self, mut noise: FusionNoise) -> FusionNoise {
        noise.prior = self.prior_sigma.unwrap_or(noise.prior);
        noise.odometry = self.odometry_sigma.unwrap_or(noise.odometry);
        noise.measurement = self.measurement_sigma.unwrap_or(noise.measurement);
        noise
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Number of camera frames to simulate.
    #[arg(long)]
    frames: Option<usize>,
    /// Offset applied to the initial prior, as x,y,theta.
    #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
    bad_prior_offset: Option<Pose2>,
}

impl RunArgs {
    fn load(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = PipelineConfig::load_or_default(self.config.as_deref())?;
        if let Some(s) = self.seed {
            cfg.simulation.seed = s;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(n) = self.frames {
            cfg.simulation.n_frames = n;
        }
        if self.bad_prior_offset.is_some() {
            cfg.simulation.bad_prior_offset = self.bad_prior_offset;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct FuseArgs {
    #[arg(long)]
    odometry: PathBuf,
    #[arg(long)]
    measurements: PathBuf,
    /// JSON file with the first-pose prior.
    #[arg(long)]
    prior: Option<PathBuf>,
    /// JSON configuration file; only its `noise` section is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[command(flatten)]
    noise: NoiseArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Second trajectory (typically the raw measurements) to compare against.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    skip_first: usize,
    /// Maximum timestamp difference for associating poses, seconds.
    #[arg(long, default_value_t = DEFAULT_MAX_DT)]
    max_dt: f64,
    /// Write per-pose errors to this CSV file.
    #[arg(long)]
    per_pose: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StreamArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    noise: NoiseArgs,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Poses excluded from the start of the error statistics.
    #[arg(long)]
    skip_first: Option<usize>,
    /// Run this many consecutive seeds.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[command(flatten)]
    noise: NoiseArgs,
}

fn print_json(v: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).expect("json value serializes");
    writeln!(io::stdout(), "{text}").map_err(|e| CliError::Io {
        context: "stdout".into(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.load()?;
            let out = commands::cmd_simulate(&cfg.simulation, &cfg.out_dir)?;
            let (rmse_t, rmse_r) = posefuse::sim::raw_measurement_rmse(&out);
            print_json(&serde_json::json!({
                "seed": cfg.simulation.seed,
                "frames": out.measurements.len(),
                "odometry_samples": out.odometry.len(),
                "raw_rmse_translation_m": rmse_t,
                "raw_rmse_rotation_deg": rmse_r,
                "out_dir": cfg.out_dir,
            }))
        }
        Command::Fuse(args) => {
            let cfg = PipelineConfig::load_or_default(args.config.as_deref())?;
            let noise = args.noise.apply(cfg.noise);
            let report = commands::cmd_fuse(
                &args.odometry,
                &args.measurements,
                args.prior.as_deref(),
                noise,
                &args.out_dir,
            )?;
            print_json(&report)
        }
        Command::Evaluate(args) => {
            if !(args.max_dt.is_finite() && args.max_dt >= 0.0) {
                return Err(CliError::Validation("--max-dt must be finite and non-negative".into()));
            }
            let (report, line) = commands::cmd_evaluate(&EvaluateArgs {
                estimate: &args.estimate,
                truth: &args.truth,
                baseline: args.baseline.as_deref(),
                per_pose: args.per_pose.as_deref(),
                options: EvalOptions {
                    max_dt: args.max_dt,
                    skip_first: args.skip_first,
                },
            })?;
            print_json(&report)?;
            if let Some(line) = line {
                eprintln!("{line}");
            }
            Ok(())
        }
        Command::Stream(args) => {
            let cfg = PipelineConfig::load_or_default(args.config.as_deref())?;
            let noise = args.noise.apply(cfg.noise);
            let stdin = io::stdin().lock();
            let stdout = io::stdout().lock();
            let stats = run_stream(stdin, stdout, noise, SolverSettings::default()).map_err(|e| CliError::Io {
                context: "stream".into(),
                source: e,
            })?;
            eprintln!("{} lines, {} frames, {} errors", stats.lines, stats.frames, stats.errors);
            Ok(())
        }
        Command::Pipeline(args) => {
            let mut cfg = args.run.load()?;
            if let Some(k) = args.skip_first {
                cfg.skip_first = k;
            }
            cfg.noise = args.noise.apply(cfg.noise);
            let runs = commands::cmd_pipeline(&cfg, args.seeds)?;
            let summaries: Vec<Value> = runs.iter().map(|r| r.summary_with_latency()).collect();
            if let [one] = summaries.as_slice() {
                print_json(one)
            } else {
                print_json(&Value::Array(summaries))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
