//! Incremental smoothing over a growing pose graph.
//!
//! [`Smoother`] exposes an add-variables / add-factors / update cycle. Each
//! update re-solves the whole accumulated graph with damped Gauss-Newton,
//! warm-started from the previous estimate, so every snapshot equals a
//! from-scratch batch solve of the graph so far.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::factors::{Factor, FactorGraph, GraphError, Values, VariableKey};
use crate::se2::{Pose2, Twist2};
use crate::sparse::{FactorError, LdlFactor, TripletBuilder};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SmootherError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("normal equations are singular: {0}")]
    Singular(#[from] FactorError),
    #[error("no estimate available before the first update")]
    NotUpdated,
}

/// Gauss-Newton stopping rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the error by less than this fraction
    /// and moves no component by more than `step_tolerance`.
    pub relative_tolerance: f64,
    pub step_tolerance: f64,
    /// Stop once the total error falls below this value.
    pub absolute_tolerance: f64,
    /// Step-halving attempts before a step is rejected.
    pub max_step_halvings: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iterations: 100,
            relative_tolerance: 1e-9,
            step_tolerance: 1e-10,
            absolute_tolerance: 1e-12,
            max_step_halvings: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_error: f64,
    pub final_error: f64,
    pub converged: bool,
    /// Wall-clock time of the solve in milliseconds.
    pub duration_ms: f64,
}

/// Whitened normal equations `H delta = -g` at a linearization point.
pub struct NormalEquations {
    pub hessian: crate::sparse::UpperCsc,
    pub gradient: Vec<f64>,
}

/// Builds `J^T W J` and `J^T W r` for the whole graph.
pub fn normal_equations(graph: &FactorGraph, values: &Values) -> Result<NormalEquations, GraphError> {
    let n = 3 * graph.num_variables();
    let mut h = TripletBuilder::with_capacity(n, graph.len() * 21);
    let mut g = vec![0.0; n];
    for factor in graph.factors() {
        let (r, jac) = factor.linearize(values)?;
        let w = factor.noise().sqrt_information();
        let rw = [r.vx * w[0], r.vy * w[1], r.omega * w[2]];
        // Whitened blocks: row i of J scaled by w[i].
        let mut blocks = [(0usize, [[0.0; 3]; 3]); 2];
        let mut count = 0;
        for (k, m) in jac.blocks() {
            let (off, b) = &mut blocks[count];
            *off = k.index() * 3;
            for i in 0..3 {
                for j in 0..3 {
                    b[i][j] = m[(i, j)] * w[i];
                }
            }
            count += 1;
        }
        let blocks = &blocks[..count];
        for (a_idx, (a_off, ja)) in blocks.iter().enumerate() {
            for c in 0..3 {
                g[a_off + c] += ja[0][c] * rw[0] + ja[1][c] * rw[1] + ja[2][c] * rw[2];
            }
            for (b_off, jb) in &blocks[a_idx..] {
                let diagonal = a_off == b_off;
                for c in 0..3 {
                    for d in (if diagonal { c } else { 0 })..3 {
                        let v = ja[0][c] * jb[0][d] + ja[1][c] * jb[1][d] + ja[2][c] * jb[2][d];
                        h.push(a_off + c, b_off + d, v);
                    }
                }
            }
        }
    }
    Ok(NormalEquations {
        hessian: h.build(),
        gradient: g,
    })
}

fn retract_all(values: &Values, delta: &[f64], alpha: f64) -> Values {
    Values::from_poses(
        values
            .poses()
            .iter()
            .zip(delta.chunks_exact(3))
            .map(|(p, d)| p.retract(&Twist2::new(alpha * d[0], alpha * d[1], alpha * d[2])))
            .collect(),
    )
}

/// Relative error increase treated as rounding noise by the step search.
const ROUNDING_SLACK: f64 = 1e-12;

/// Relative predicted decrease below which further steps only chase the
/// rounding noise of an ill-conditioned solve.
const MODEL_NOISE_FLOOR: f64 = 1e-14;

/// Damped Gauss-Newton on the manifold, starting from `values`.
///
/// Each step solves the whitened normal equations and is halved until the
/// total error does not increase. `values` holds the final estimate even when
/// the iteration limit is hit.
pub fn gauss_newton(
    graph: &FactorGraph,
    values: &mut Values,
    settings: &SolverSettings,
) -> Result<SolveReport, SmootherError> {
    let start = Instant::now();
    if values.len() != graph.num_variables() {
        return Err(GraphError::MissingKey(VariableKey(values.len().min(graph.num_variables()))).into());
    }
    graph.check_gauge()?;
    let initial_error = graph.total_error(values)?;
    let mut error = initial_error;
    let mut iterations = 0;
    let mut converged = error < settings.absolute_tolerance;

    while !converged && iterations < settings.max_iterations {
        let NormalEquations { hessian, gradient } = normal_equations(graph, values)?;
        let factor = LdlFactor::factor(&hessian)?;
        let mut delta: Vec<f64> = gradient.iter().map(|g| -g).collect();
        factor.solve_in_place(&mut delta)?;
        iterations += 1;
        // Decrease predicted by the linear model, free of the cancellation
        // that limits the measured decrease.
        let predicted = 0.5 * gradient.iter().zip(&delta).map(|(g, d)| -g * d).sum::<f64>();
        let prev_error = error;

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.max_step_halvings {
            let candidate = retract_all(values, &delta, alpha);
            let candidate_error = graph.total_error(&candidate)?;
            // Near the optimum a step changes the error by less than the
            // rounding of the sum itself; such steps are still accepted.
            if candidate_error <= error + ROUNDING_SLACK * error {
                accepted = Some((candidate, candidate_error));
                break;
            }
            alpha *= 0.5;
        }
        let Some((candidate, new_error)) = accepted else {
            // No descent along the Gauss-Newton direction at working precision.
            converged = true;
            break;
        };
        let decrease = error - new_error;
        let step = alpha * delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        *values = candidate;
        error = new_error;
        // Far from a zero-residual optimum Gauss-Newton converges only
        // linearly, so a small decrease alone can stop well short of the
        // minimum along weakly constrained directions.
        let small_decrease = decrease <= settings.relative_tolerance * (error + decrease);
        if error < settings.absolute_tolerance
            || predicted <= MODEL_NOISE_FLOOR * prev_error
            || (small_decrease && step <= settings.step_tolerance)
        {
            converged = true;
        }
    }

    Ok(SolveReport {
        iterations,
        initial_error,
        final_error: error,
        converged,
        duration_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Posterior standard deviations of every variable, in tangent coordinates.
pub fn marginal_sigmas(graph: &FactorGraph, values: &Values) -> Result<Vec<[f64; 3]>, SmootherError> {
    graph.check_gauge()?;
    let NormalEquations { hessian, .. } = normal_equations(graph, values)?;
    let factor = LdlFactor::factor(&hessian)?;
    let n = hessian.dim();
    let mut out = Vec::with_capacity(n / 3);
    let mut e = vec![0.0; n];
    for k in 0..n / 3 {
        let mut s = [0.0; 3];
        for (i, si) in s.iter_mut().enumerate() {
            e.fill(0.0);
            e[3 * k + i] = 1.0;
            factor.solve_in_place(&mut e)?;
            *si = e[3 * k + i].sqrt();
        }
        out.push(s);
    }
    Ok(out)
}

/// Incremental pose-graph smoother.
///
/// Mutating calls must be serialized by the caller; [`Smoother::estimate`]
/// hands out owned snapshots.
#[derive(Debug, Clone, Default)]
pub struct Smoother {
    graph: FactorGraph,
    estimate: Values,
    guesses: Vec<Option<Pose2>>,
    /// Index of the first factor added since the last update.
    pending_factors: usize,
    settings: SolverSettings,
    updated: bool,
}

impl Smoother {
    pub fn new(settings: SolverSettings) -> Self {
        Smoother {
            settings,
            ..Default::default()
        }
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn num_variables(&self) -> usize {
        self.graph.num_variables()
    }

    /// Registers a new pose variable.
    ///
    /// Without a guess, the variable is initialized at the next update by
    /// composing the previous estimate with a pending odometry edge into it,
    /// or with the previous estimate (identity for the first variable).
    pub fn add_variable(&mut self, initial_guess: Option<Pose2>) -> VariableKey {
        self.guesses.push(initial_guess);
        self.graph.add_variable()
    }

    pub fn add_factor(&mut self, factor: Factor) -> Result<(), SmootherError> {
        self.graph.add(factor)?;
        Ok(())
    }

    fn initial_value(&self, key: usize) -> Pose2 {
        if let Some(guess) = self.guesses[key] {
            return guess;
        }
        if key == 0 {
            return Pose2::IDENTITY;
        }
        let prev = self.estimate.poses()[key - 1];
        self.graph.factors()[self.pending_factors..]
            .iter()
            .find_map(|f| match f {
                Factor::Between(b) if b.key_from.0 == key - 1 && b.key_to.0 == key => {
                    Some(prev.compose(&b.relative))
                }
                Factor::Between(b) if b.key_to.0 == key - 1 && b.key_from.0 == key => {
                    Some(prev.compose(&b.relative.inverse()))
                }
                _ => None,
            })
            .unwrap_or(prev)
    }

    /// Initializes new variables and re-optimizes the full graph.
    pub fn update(&mut self) -> Result<SolveReport, SmootherError> {
        while self.estimate.len() < self.graph.num_variables() {
            let value = self.initial_value(self.estimate.len());
            self.estimate.push(value);
        }
        self.pending_factors = self.graph.len();
        let mut values = self.estimate.clone();
        let report = gauss_newton(&self.graph, &mut values, &self.settings)?;
        self.estimate = values;
        self.updated = true;
        Ok(report)
    }

    pub fn estimate(&self) -> Result<Values, SmootherError> {
        if self.updated {
            Ok(self.estimate.clone())
        } else {
            Err(SmootherError::NotUpdated)
        }
    }

    /// Latest estimate of a single variable.
    pub fn pose(&self, key: VariableKey) -> Result<Pose2, SmootherError> {
        if !self.updated {
            return Err(SmootherError::NotUpdated);
        }
        Ok(*self.estimate.get(key)?)
    }

    /// Marginal standard deviations `(x, y, theta)` of one variable.
    pub fn marginal_sigma(&self, key: VariableKey) -> Result<[f64; 3], SmootherError> {
        if !self.updated {
            return Err(SmootherError::NotUpdated);
        }
        if key.0 >= self.estimate.len() {
            return Err(GraphError::MissingKey(key).into());
        }
        let sigmas = marginal_sigmas(&self.graph, &self.estimate)?;
        Ok(sigmas[key.0])
    }
}
