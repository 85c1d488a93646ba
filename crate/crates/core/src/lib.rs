//! Incremental SE(2) pose-graph fusion of absolute pose measurements with
//! odometry.
//!
//! The building blocks, bottom-up:
//!
//! - [`se2`]: planar rigid transforms and their exp/log maps
//! - [`noise`]: diagonal Gaussian noise models and the shipped defaults
//! - [`factors`]: prior, between and measurement factors with Jacobians
//! - [`sparse`]: sparse LDL^T factorization for the normal equations
//! - [`smoother`]: damped Gauss-Newton and the incremental smoother
//! - [`odometry`]: per-frame accumulation of high-rate odometry
//! - [`fusion`]: the frame-by-frame fusion loop shared by batch and streaming use
//! - [`sim`]: deterministic synthetic sessions
//! - [`trajectory`] and [`eval`]: CSV files, association and RMSE

pub mod eval;
pub mod factors;
pub mod fusion;
pub mod noise;
pub mod odometry;
pub mod se2;
pub mod sim;
pub mod smoother;
pub mod sparse;
pub mod trajectory;

pub use factors::{Factor, FactorGraph, GraphError, Values, VariableKey};
pub use noise::{DiagonalNoise, MEASUREMENT_DEFAULT, ODOMETRY_DEFAULT, PRIOR_DEFAULT};
pub use se2::{normalize_angle, Pose2, Twist2};
pub use smoother::{SmootherError, SolveReport, Smoother, SolverSettings};
pub use trajectory::TrajectoryRecord;
