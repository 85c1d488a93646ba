//! Reference implementations the test suites compare the library against.
//!
//! Everything here is deliberately naive: homogeneous 3x3 matrices instead of
//! the closed-form group operations, finite differences instead of analytic
//! Jacobians, dense linear algebra instead of the sparse solver.

use nalgebra::{DMatrix, DVector, Matrix3};
use posefuse::{
    normalize_angle, DiagonalNoise, Factor, FactorGraph, Pose2, Smoother, SolverSettings, Twist2, Values,
    VariableKey,
};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type TestRng = Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> TestRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn random_pose(rng: &mut TestRng, extent: f64, max_theta: f64) -> Pose2 {
    Pose2::new(
        rng.random_range(-extent..extent),
        rng.random_range(-extent..extent),
        rng.random_range(-max_theta..max_theta),
    )
}

pub fn random_twist(rng: &mut TestRng, extent: f64, max_omega: f64) -> Twist2 {
    Twist2::new(
        rng.random_range(-extent..extent),
        rng.random_range(-extent..extent),
        rng.random_range(-max_omega..max_omega),
    )
}

/// Standard normal draw via Box-Muller.
pub fn normal(rng: &mut TestRng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn perturb(rng: &mut TestRng, pose: &Pose2, noise: &DiagonalNoise) -> Pose2 {
    let s = noise.sigmas();
    pose.retract(&Twist2::new(s[0] * normal(rng), s[1] * normal(rng), s[2] * normal(rng)))
}

/// Largest absolute component difference, with the angle compared on the circle.
pub fn pose_distance(a: &Pose2, b: &Pose2) -> f64 {
    (a.x() - b.x())
        .abs()
        .max((a.y() - b.y()).abs())
        .max(normalize_angle(a.theta() - b.theta()).abs())
}

pub fn max_pose_distance(a: &[Pose2], b: &[Pose2]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(p, q)| pose_distance(p, q)).fold(0.0, f64::max)
}

// ---- homogeneous-matrix group oracle ----

pub fn matrix(x: f64, y: f64, theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, x, s, c, y, 0.0, 0.0, 1.0)
}

pub fn pose_matrix(p: &Pose2) -> Matrix3<f64> {
    matrix(p.x(), p.y(), p.theta())
}

pub fn matrix_pose(m: &Matrix3<f64>) -> Pose2 {
    Pose2::new(m[(0, 2)], m[(1, 2)], m[(1, 0)].atan2(m[(0, 0)]))
}

pub fn matrix_compose(a: &Pose2, b: &Pose2) -> Pose2 {
    matrix_pose(&(pose_matrix(a) * pose_matrix(b)))
}

pub fn matrix_inverse(a: &Pose2) -> Pose2 {
    matrix_pose(&pose_matrix(a).try_inverse().expect("rigid transforms are invertible"))
}

pub fn matrix_between(a: &Pose2, b: &Pose2) -> Pose2 {
    matrix_pose(&(pose_matrix(a).try_inverse().expect("invertible") * pose_matrix(b)))
}

fn hat(v: &Twist2) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.omega, v.vx, v.omega, 0.0, v.vy, 0.0, 0.0, 0.0)
}

/// Integrates `dT/dt = T * hat(v)` over unit time with classic RK4.
pub fn integrate_twist(v: &Twist2, steps: usize) -> Pose2 {
    let xi = hat(v);
    let h = 1.0 / steps as f64;
    let mut t = Matrix3::identity();
    for _ in 0..steps {
        let k1 = t * xi;
        let k2 = (t + k1 * (h / 2.0)) * xi;
        let k3 = (t + k2 * (h / 2.0)) * xi;
        let k4 = (t + k3 * h) * xi;
        t += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    matrix_pose(&t)
}

// ---- finite-difference Jacobians ----

pub const FD_STEP: f64 = 1e-6;

fn twist_diff(a: &Twist2, b: &Twist2) -> [f64; 3] {
    [a.vx - b.vx, a.vy - b.vy, normalize_angle(a.omega - b.omega)]
}

/// Central differences of the unwhitened residual with respect to a right
/// perturbation of `key`.
pub fn numerical_jacobian(factor: &Factor, values: &Values, key: VariableKey, h: f64) -> Matrix3<f64> {
    let base = *values.get(key).expect("key present");
    let mut out = Matrix3::zeros();
    for j in 0..3 {
        let mut d = [0.0; 3];
        d[j] = h;
        let plus = Twist2::new(d[0], d[1], d[2]);
        let mut vp = values.clone();
        vp.set(key, base.retract(&plus));
        let mut vm = values.clone();
        vm.set(key, base.retract(&plus.scale(-1.0)));
        let rp = factor.residual(&vp).expect("keys present");
        let rm = factor.residual(&vm).expect("keys present");
        let diff = twist_diff(&rp, &rm);
        for i in 0..3 {
            out[(i, j)] = diff[i] / (2.0 * h);
        }
    }
    out
}

/// Entry-wise relative error `|a - n| / max(1, |n|)`, maximized over entries.
pub fn max_relative_error(analytic: &Matrix3<f64>, numeric: &Matrix3<f64>) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / n.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Worst relative error between analytic and numerical Jacobians of one factor.
pub fn jacobian_error(factor: &Factor, values: &Values) -> f64 {
    let analytic = factor.jacobians(values).expect("keys present");
    factor
        .keys()
        .map(|k| {
            let a = analytic.get(k).expect("block for every key");
            max_relative_error(a, &numerical_jacobian(factor, values, k, FD_STEP))
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Prior,
    Between,
    Measurement,
}

pub fn random_noise(rng: &mut TestRng) -> DiagonalNoise {
    DiagonalNoise::new(
        rng.random_range(0.01..20.0),
        rng.random_range(0.01..20.0),
        rng.random_range(0.01..1.0),
    )
    .expect("positive sigmas")
}

/// A random factor of `kind` over fresh variables, together with a random
/// linearization point (|theta| <= 3). The residual rotation stays below 2.5
/// rad so central differences never straddle the +-pi cut.
pub fn random_factor(rng: &mut TestRng, kind: FactorKind) -> (Factor, Values) {
    let noise = random_noise(rng);
    let x0 = random_pose(rng, 50.0, 3.0);
    let r = random_twist(rng, 5.0, 2.5);
    match kind {
        FactorKind::Prior | FactorKind::Measurement => {
            let z = x0.compose(&r.exp().inverse());
            let values = Values::from_poses(vec![x0]);
            let f = if kind == FactorKind::Prior {
                Factor::prior(VariableKey(0), z, noise)
            } else {
                Factor::measurement(VariableKey(0), z, noise)
            };
            (f, values)
        }
        FactorKind::Between => {
            let x1 = random_pose(rng, 50.0, 3.0);
            let predicted = x0.between(&x1);
            let z = predicted.compose(&r.exp().inverse());
            let values = Values::from_poses(vec![x0, x1]);
            (Factor::between(VariableKey(0), VariableKey(1), z, noise), values)
        }
    }
}

// ---- dense batch solver ----

/// Dense normal matrix `J^T J` and gradient `J^T r` of the whitened system,
/// with every Jacobian block taken by finite differences.
pub fn dense_normal_equations(graph: &FactorGraph, values: &Values) -> (DMatrix<f64>, DVector<f64>) {
    let n = values.len() * 3;
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    for f in graph.factors() {
        let w = f.noise().sqrt_information();
        let r = f.residual(values).expect("keys present");
        let wr = nalgebra::Vector3::new(w[0] * r.vx, w[1] * r.vy, w[2] * r.omega);
        let blocks: Vec<(usize, Matrix3<f64>)> = f
            .keys()
            .map(|k| {
                let mut b = numerical_jacobian(f, values, k, FD_STEP);
                for i in 0..3 {
                    for j in 0..3 {
                        b[(i, j)] *= w[i];
                    }
                }
                (3 * k.index(), b)
            })
            .collect();
        for (oi, bi) in &blocks {
            let gi = bi.transpose() * wr;
            for a in 0..3 {
                g[oi + a] += gi[a];
            }
            for (oj, bj) in &blocks {
                let hij = bi.transpose() * bj;
                for a in 0..3 {
                    for b in 0..3 {
                        h[(oi + a, oj + b)] += hij[(a, b)];
                    }
                }
            }
        }
    }
    (h, g)
}

fn half_sq(v: &DVector<f64>) -> f64 {
    0.5 * v.norm_squared()
}

fn graph_error(graph: &FactorGraph, values: &Values) -> f64 {
    graph
        .factors()
        .iter()
        .map(|f| {
            let r = f.residual(values).expect("keys present");
            let w = f.noise().sqrt_information();
            0.5 * ((w[0] * r.vx).powi(2) + (w[1] * r.vy).powi(2) + (w[2] * r.omega).powi(2))
        })
        .sum()
}

/// Sum of factor errors computed from scratch.
pub fn naive_total_error(graph: &FactorGraph, values: &Values) -> f64 {
    graph_error(graph, values)
}

fn retract_all(values: &Values, delta: &DVector<f64>, scale: f64) -> Values {
    Values::from_poses(
        values
            .poses()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                p.retract(&Twist2::new(
                    scale * delta[3 * i],
                    scale * delta[3 * i + 1],
                    scale * delta[3 * i + 2],
                ))
            })
            .collect(),
    )
}

/// Gauss-Newton with numerical Jacobians and a dense LU solve. Runs until the
/// step is negligible.
pub fn dense_gauss_newton(graph: &FactorGraph, initial: &Values) -> Values {
    let mut values = initial.clone();
    let mut error = graph_error(graph, &values);
    for _ in 0..200 {
        let (h, g) = dense_normal_equations(graph, &values);
        let delta = -h.cholesky().expect("positive definite normal matrix").solve(&g);
        let mut scale = 1.0;
        let mut candidate = retract_all(&values, &delta, scale);
        let mut new_error = graph_error(graph, &candidate);
        while new_error > error && scale > 1e-3 {
            scale *= 0.5;
            candidate = retract_all(&values, &delta, scale);
            new_error = graph_error(graph, &candidate);
        }
        let step = delta.amax() * scale;
        if new_error > error {
            break;
        }
        values = candidate;
        error = new_error;
        if step < 1e-11 || half_sq(&g) < 1e-30 {
            break;
        }
    }
    values
}

/// Dead-reckoned initial values: the first variable from its first unary
/// factor, every later one by composing the first between factor that links
/// it to an already initialized variable.
pub fn chain_initialization(graph: &FactorGraph) -> Values {
    let n = graph.num_variables();
    let mut init: Vec<Option<Pose2>> = vec![None; n];
    loop {
        let mut progress = false;
        for f in graph.factors() {
            match f {
                Factor::Prior(p) if init[p.key.index()].is_none() => {
                    init[p.key.index()] = Some(p.prior);
                    progress = true;
                }
                Factor::Measurement(m) if init[m.key.index()].is_none() => {
                    init[m.key.index()] = Some(m.measured);
                    progress = true;
                }
                Factor::Between(b) => {
                    if let (Some(from), None) = (init[b.key_from.index()], init[b.key_to.index()]) {
                        init[b.key_to.index()] = Some(from.compose(&b.relative));
                        progress = true;
                    }
                }
                _ => {}
            }
        }
        if !progress {
            break;
        }
    }
    Values::from_poses(init.into_iter().map(|p| p.unwrap_or(Pose2::IDENTITY)).collect())
}

/// Marginal sigmas from the inverse of the dense numerical normal matrix.
pub fn dense_marginal_sigmas(graph: &FactorGraph, values: &Values) -> Vec<[f64; 3]> {
    let (h, _) = dense_normal_equations(graph, values);
    let cov = h.try_inverse().expect("nonsingular");
    (0..values.len())
        .map(|k| [0, 1, 2].map(|i| cov[(3 * k + i, 3 * k + i)].sqrt()))
        .collect()
}

// ---- random incremental problems ----

/// One step of an incremental session.
#[derive(Debug, Clone)]
pub enum Op {
    AddVariable,
    AddFactor(Factor),
    Update,
}

pub struct RandomProblem {
    pub truth: Vec<Pose2>,
    pub ops: Vec<Op>,
}

/// A noisy random-walk pose graph of `n` variables: a prior on the first pose,
/// odometry between consecutive poses, absolute measurements on about half of
/// them and occasional loop closures. Updates follow every one to three new
/// variables.
pub fn random_problem(rng: &mut TestRng, n: usize) -> RandomProblem {
    let odo = DiagonalNoise::new(0.05, 0.05, 0.02).unwrap();
    let meas = DiagonalNoise::new(1.0, 1.0, 0.1).unwrap();
    let prior = DiagonalNoise::new(0.1, 0.1, 0.05).unwrap();
    let mut truth = vec![random_pose(rng, 10.0, 3.0)];
    let mut ops = vec![
        Op::AddVariable,
        Op::AddFactor(Factor::prior(VariableKey(0), perturb(rng, &truth[0], &prior), prior)),
    ];
    let mut since_update = 0;
    let mut batch = rng.random_range(1..=3);
    for k in 1..n {
        let step = Twist2::new(rng.random_range(0.5..2.0), rng.random_range(-0.2..0.2), rng.random_range(-0.5..0.5));
        truth.push(truth[k - 1].retract(&step));
        ops.push(Op::AddVariable);
        let rel = truth[k - 1].between(&truth[k]);
        ops.push(Op::AddFactor(Factor::between(
            VariableKey(k - 1),
            VariableKey(k),
            perturb(rng, &rel, &odo),
            odo,
        )));
        if rng.random_bool(0.5) {
            ops.push(Op::AddFactor(Factor::measurement(VariableKey(k), perturb(rng, &truth[k], &meas), meas)));
        }
        if k > 5 && rng.random_bool(0.1) {
            let j = rng.random_range(0..k - 2);
            let rel = truth[j].between(&truth[k]);
            ops.push(Op::AddFactor(Factor::between(
                VariableKey(j),
                VariableKey(k),
                perturb(rng, &rel, &odo),
                odo,
            )));
        }
        since_update += 1;
        if since_update >= batch || k == n - 1 {
            ops.push(Op::Update);
            since_update = 0;
            batch = rng.random_range(1..=3);
        }
    }
    if !matches!(ops.last(), Some(Op::Update)) {
        ops.push(Op::Update);
    }
    RandomProblem { truth, ops }
}

/// Dense oracle started from dead reckoning.
pub fn dense_batch(graph: &FactorGraph) -> Values {
    dense_gauss_newton(graph, &chain_initialization(graph))
}

/// Replays `problem` through a smoother and compares every update with
/// `batch` run on the graph accumulated so far. Returns the worst
/// per-component discrepancy seen.
pub fn incremental_vs_batch(problem: &RandomProblem, batch: impl Fn(&FactorGraph) -> Values) -> f64 {
    let mut smoother = Smoother::new(SolverSettings::default());
    let mut graph = FactorGraph::new();
    let mut worst: f64 = 0.0;
    for op in &problem.ops {
        match op {
            Op::AddVariable => {
                smoother.add_variable(None);
                graph.add_variable();
            }
            Op::AddFactor(f) => {
                smoother.add_factor(*f).expect("valid factor");
                graph.add(*f).expect("valid factor");
            }
            Op::Update => {
                smoother.update().expect("solvable");
                let incremental = smoother.estimate().expect("updated");
                worst = worst.max(max_pose_distance(incremental.poses(), batch(&graph).poses()));
            }
        }
    }
    worst
}

/// Final estimate of a replayed session, with the graph it was solved on.
pub fn replay(problem: &RandomProblem) -> (FactorGraph, Values) {
    let mut smoother = Smoother::new(SolverSettings::default());
    for op in &problem.ops {
        match op {
            Op::AddVariable => {
                smoother.add_variable(None);
            }
            Op::AddFactor(f) => smoother.add_factor(*f).expect("valid factor"),
            Op::Update => {
                smoother.update().expect("solvable");
            }
        }
    }
    (smoother.graph().clone(), smoother.estimate().expect("updated"))
}

// ---- association ----

/// Optimal order-preserving matching by dynamic programming: the most pairs
/// with `|dt| <= max_dt`, ties broken by the smallest total `|dt|`.
/// Returns `(pairs, total |dt|)`.
pub fn optimal_association(a: &[f64], b: &[f64], max_dt: f64) -> (usize, f64) {
    let (n, m) = (a.len(), b.len());
    let mut best = vec![vec![(0usize, 0.0f64); m + 1]; n + 1];
    let better = |x: (usize, f64), y: (usize, f64)| {
        if x.0 != y.0 {
            x.0 > y.0
        } else {
            x.1 < y.1
        }
    };
    for i in 1..=n {
        for j in 1..=m {
            let mut cand = best[i - 1][j];
            if better(best[i][j - 1], cand) {
                cand = best[i][j - 1];
            }
            let dt = (a[i - 1] - b[j - 1]).abs();
            if dt <= max_dt {
                let (c, s) = best[i - 1][j - 1];
                let take = (c + 1, s + dt);
                if better(take, cand) {
                    cand = take;
                }
            }
            best[i][j] = cand;
        }
    }
    best[n][m]
}
