//! Factor graph of SE(2) poses: prior, odometry-between and absolute
//! measurement factors, with tangent-space residuals and analytic Jacobians.
//!
//! All residuals share one convention, `r = log(z^-1 * h(X))`, where `z` is
//! the factor's measured value and `h(X)` the prediction from the current
//! estimate. Jacobians are taken with respect to right perturbations
//! `X <- X * exp(delta)`.

use std::fmt;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::noise::DiagonalNoise;
use crate::se2::{Pose2, Twist2};

/// Dense index of a pose variable, assigned in insertion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VariableKey(pub usize);

impl VariableKey {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VariableKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("no value for variable {0}")]
    MissingKey(VariableKey),
    #[error("factor references unknown variable {0}")]
    UnknownKey(VariableKey),
    #[error("between factor connects {0} to itself")]
    SelfLoop(VariableKey),
    #[error("variable {0} is not anchored by any prior or measurement factor")]
    GaugeDeficient(VariableKey),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorFactor {
    pub key: VariableKey,
    pub prior: Pose2,
    pub noise: DiagonalNoise,
}

/// Relative-pose constraint, usually one accumulated odometry edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetweenFactor {
    pub key_from: VariableKey,
    pub key_to: VariableKey,
    pub relative: Pose2,
    pub noise: DiagonalNoise,
}

/// Unary absolute-pose measurement in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementFactor {
    pub key: VariableKey,
    pub measured: Pose2,
    pub noise: DiagonalNoise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factor {
    Prior(PriorFactor),
    Between(BetweenFactor),
    Measurement(MeasurementFactor),
}

/// Ordered pose values indexed by [`VariableKey`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Values {
    poses: Vec<Pose2>,
}

impl Values {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_poses(poses: Vec<Pose2>) -> Self {
        Values { poses }
    }

    pub fn get(&self, key: VariableKey) -> Result<&Pose2, GraphError> {
        self.poses.get(key.0).ok_or(GraphError::MissingKey(key))
    }

    pub fn push(&mut self, pose: Pose2) -> VariableKey {
        self.poses.push(pose);
        VariableKey(self.poses.len() - 1)
    }

    /// Replaces an existing value. Panics if `key` is out of range.
    pub fn set(&mut self, key: VariableKey, pose: Pose2) {
        self.poses[key.0] = pose;
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn poses(&self) -> &[Pose2] {
        &self.poses
    }

    pub fn into_poses(self) -> Vec<Pose2> {
        self.poses
    }

    pub fn iter(&self) -> impl Iterator<Item = (VariableKey, &Pose2)> {
        self.poses.iter().enumerate().map(|(i, p)| (VariableKey(i), p))
    }
}

/// Jacobians of an unwhitened residual with respect to each involved variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Jacobians {
    Unary {
        key: VariableKey,
        d_key: Matrix3<f64>,
    },
    Binary {
        from: VariableKey,
        d_from: Matrix3<f64>,
        to: VariableKey,
        d_to: Matrix3<f64>,
    },
}

impl Jacobians {
    pub fn blocks(&self) -> impl Iterator<Item = (VariableKey, &Matrix3<f64>)> {
        let (first, second) = match self {
            Jacobians::Unary { key, d_key } => ((*key, d_key), None),
            Jacobians::Binary {
                from,
                d_from,
                to,
                d_to,
            } => ((*from, d_from), Some((*to, d_to))),
        };
        std::iter::once(first).chain(second)
    }

    pub fn get(&self, key: VariableKey) -> Option<&Matrix3<f64>> {
        self.blocks().find(|(k, _)| *k == key).map(|(_, m)| m)
    }
}

impl Factor {
    pub fn prior(key: VariableKey, prior: Pose2, noise: DiagonalNoise) -> Self {
        Factor::Prior(PriorFactor { key, prior, noise })
    }

    pub fn between(
        key_from: VariableKey,
        key_to: VariableKey,
        relative: Pose2,
        noise: DiagonalNoise,
    ) -> Self {
        Factor::Between(BetweenFactor {
            key_from,
            key_to,
            relative,
            noise,
        })
    }

    pub fn measurement(key: VariableKey, measured: Pose2, noise: DiagonalNoise) -> Self {
        Factor::Measurement(MeasurementFactor {
            key,
            measured,
            noise,
        })
    }

    pub fn noise(&self) -> &DiagonalNoise {
        match self {
            Factor::Prior(f) => &f.noise,
            Factor::Between(f) => &f.noise,
            Factor::Measurement(f) => &f.noise,
        }
    }

    /// Keys touched by this factor, in `(from, to)` order for between factors.
    pub fn keys(&self) -> impl Iterator<Item = VariableKey> {
        let (a, b) = match self {
            Factor::Prior(f) => (f.key, None),
            Factor::Measurement(f) => (f.key, None),
            Factor::Between(f) => (f.key_from, Some(f.key_to)),
        };
        std::iter::once(a).chain(b)
    }

    /// True for factors that tie a variable to the world frame.
    pub fn is_unary(&self) -> bool {
        !matches!(self, Factor::Between(_))
    }

    pub fn residual(&self, values: &Values) -> Result<Twist2, GraphError> {
        Ok(match self {
            Factor::Prior(f) => f.prior.between(values.get(f.key)?).log(),
            Factor::Measurement(f) => f.measured.between(values.get(f.key)?).log(),
            Factor::Between(f) => {
                let predicted = values.get(f.key_from)?.between(values.get(f.key_to)?);
                f.relative.between(&predicted).log()
            }
        })
    }

    /// Residual together with its Jacobians at `values`.
    pub fn linearize(&self, values: &Values) -> Result<(Twist2, Jacobians), GraphError> {
        match self {
            Factor::Prior(PriorFactor { key, prior: z, .. })
            | Factor::Measurement(MeasurementFactor {
                key, measured: z, ..
            }) => {
                let r = z.between(values.get(*key)?).log();
                let d_key = r.right_jacobian_inverse();
                Ok((r, Jacobians::Unary { key: *key, d_key }))
            }
            Factor::Between(f) => {
                let xi = values.get(f.key_from)?;
                let xj = values.get(f.key_to)?;
                let predicted = xi.between(xj);
                let r = f.relative.between(&predicted).log();
                let d_to = r.right_jacobian_inverse();
                // X_i * exp(d) enters as exp(-d) on the left of predicted,
                // which moves to the right through Ad(predicted^-1).
                let d_from = -d_to * predicted.inverse().adjoint();
                Ok((
                    r,
                    Jacobians::Binary {
                        from: f.key_from,
                        d_from,
                        to: f.key_to,
                        d_to,
                    },
                ))
            }
        }
    }

    pub fn jacobians(&self, values: &Values) -> Result<Jacobians, GraphError> {
        self.linearize(values).map(|(_, j)| j)
    }

    /// `0.5 * |whiten(r)|^2` for this factor.
    pub fn error(&self, values: &Values) -> Result<f64, GraphError> {
        Ok(0.5 * self.noise().mahalanobis_sq(&self.residual(values)?))
    }
}

/// Ordered list of factors over a dense set of pose variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactorGraph {
    factors: Vec<Factor>,
    num_variables: usize,
}

impl FactorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_variables(num_variables: usize) -> Self {
        FactorGraph {
            factors: Vec::new(),
            num_variables,
        }
    }

    pub fn add_variable(&mut self) -> VariableKey {
        self.num_variables += 1;
        VariableKey(self.num_variables - 1)
    }

    pub fn num_variables(&self) -> usize {
        self.num_variables
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Checks that `factor` only references existing variables.
    pub fn validate(&self, factor: &Factor) -> Result<(), GraphError> {
        if let Factor::Between(b) = factor {
            if b.key_from == b.key_to {
                return Err(GraphError::SelfLoop(b.key_from));
            }
        }
        match factor.keys().find(|k| k.0 >= self.num_variables) {
            Some(k) => Err(GraphError::UnknownKey(k)),
            None => Ok(()),
        }
    }

    pub fn add(&mut self, factor: Factor) -> Result<(), GraphError> {
        self.validate(&factor)?;
        self.factors.push(factor);
        Ok(())
    }

    /// `0.5 * sum of squared whitened residuals`.
    pub fn total_error(&self, values: &Values) -> Result<f64, GraphError> {
        self.factors
            .iter()
            .try_fold(0.0, |acc, f| Ok(acc + f.error(values)?))
    }

    /// Every connected component must contain at least one unary factor,
    /// otherwise the least-squares problem has a free global transform.
    pub fn check_gauge(&self) -> Result<(), GraphError> {
        let n = self.num_variables;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for f in &self.factors {
            if let Factor::Between(b) = f {
                let a = find(&mut parent, b.key_from.0);
                let c = find(&mut parent, b.key_to.0);
                if a != c {
                    parent[a.max(c)] = a.min(c);
                }
            }
        }
        let mut anchored = vec![false; n];
        for f in self.factors.iter().filter(|f| f.is_unary()) {
            let k = f.keys().next().expect("unary factor has a key");
            let root = find(&mut parent, k.0);
            anchored[root] = true;
        }
        for i in 0..n {
            if !anchored[find(&mut parent, i)] {
                return Err(GraphError::GaugeDeficient(VariableKey(i)));
            }
        }
        Ok(())
    }
}
