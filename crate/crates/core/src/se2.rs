//! Planar rigid-body transforms (SE(2)) and their tangent space.
//!
//! Headings are measured counter-clockwise from the world +x axis and are
//! always stored in the half-open interval `(-pi, pi]`.

use std::f64::consts::{PI, TAU};
use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Below this rotation magnitude the exp/log V-matrix coefficients switch to
/// their Taylor expansions.
pub const SMALL_ANGLE_THRESHOLD: f64 = 1e-6;

/// Wraps an angle into `(-pi, pi]`.
///
/// The input must be finite.
pub fn normalize_angle(t: f64) -> f64 {
    debug_assert!(t.is_finite(), "normalize_angle on non-finite input {t}");
    if t > -PI && t <= PI {
        return t;
    }
    let r = t.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// An element of SE(2): a position and a heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPose2", into = "RawPose2")]
pub struct Pose2 {
    x: f64,
    y: f64,
    theta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPose2 {
    x: f64,
    y: f64,
    theta: f64,
}

impl TryFrom<RawPose2> for Pose2 {
    type Error = NonFiniteError;

    fn try_from(raw: RawPose2) -> Result<Self, Self::Error> {
        Pose2::try_new(raw.x, raw.y, raw.theta)
    }
}

impl From<Pose2> for RawPose2 {
    fn from(p: Pose2) -> Self {
        RawPose2 {
            x: p.x,
            y: p.y,
            theta: p.theta,
        }
    }
}

/// A pose or twist component was NaN or infinite.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("non-finite component in ({0}, {1}, {2})")]
pub struct NonFiniteError(pub f64, pub f64, pub f64);

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    /// Builds a pose, normalizing the heading.
    ///
    /// Panics if any component is not finite; use [`Pose2::try_new`] for
    /// values that come from outside the process.
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        match Self::try_new(x, y, theta) {
            Ok(p) => p,
            Err(e) => panic!("invalid Pose2: {e}"),
        }
    }

    pub fn try_new(x: f64, y: f64, theta: f64) -> Result<Self, NonFiniteError> {
        if !(x.is_finite() && y.is_finite() && theta.is_finite()) {
            return Err(NonFiniteError(x, y, theta));
        }
        Ok(Pose2 {
            x,
            y,
            theta: normalize_angle(theta),
        })
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }

    #[inline]
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn translation(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    /// Group product `self * other`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            -c * self.x - s * self.y,
            s * self.x - c * self.y,
            -self.theta,
        )
    }

    /// Pose of `other` expressed in the frame of `self`: `self^-1 * other`.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        Pose2::new(c * dx + s * dy, -s * dx + c * dy, other.theta - self.theta)
    }

    /// Applies the transform to a point.
    pub fn transform_point(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (self.x + c * px - s * py, self.y + s * px + c * py)
    }

    /// 3x3 homogeneous matrix.
    pub fn to_matrix(&self) -> Matrix3<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix3::new(c, -s, self.x, s, c, self.y, 0.0, 0.0, 1.0)
    }

    /// Adjoint acting on tangent vectors ordered `(vx, vy, omega)`.
    pub fn adjoint(&self) -> Matrix3<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix3::new(c, -s, self.y, s, c, -self.x, 0.0, 0.0, 1.0)
    }

    /// Right retraction `self * exp(delta)`.
    pub fn retract(&self, delta: &Twist2) -> Pose2 {
        self.compose(&delta.exp())
    }

    pub fn exp(v: &Twist2) -> Pose2 {
        v.exp()
    }

    /// Tangent coordinates of this pose; `omega` equals the stored heading.
    pub fn log(&self) -> Twist2 {
        let theta = self.theta;
        let (a, b) = v_coefficients(theta);
        let det = a * a + b * b;
        // V^-1 = [[a, b], [-b, a]] / (a^2 + b^2)
        Twist2::new(
            (a * self.x + b * self.y) / det,
            (-b * self.x + a * self.y) / det,
            theta,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

impl Default for Pose2 {
    fn default() -> Self {
        Pose2::IDENTITY
    }
}

impl fmt::Display for Pose2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.theta)
    }
}

impl std::ops::Mul for Pose2 {
    type Output = Pose2;

    fn mul(self, rhs: Pose2) -> Pose2 {
        self.compose(&rhs)
    }
}

/// Coefficients `(sin t / t, (1 - cos t) / t)` of the SE(2) V-matrix.
fn v_coefficients(theta: f64) -> (f64, f64) {
    if theta.abs() < SMALL_ANGLE_THRESHOLD {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, theta / 2.0 - theta * t2 / 24.0)
    } else {
        let (s, c) = theta.sin_cos();
        (s / theta, (1.0 - c) / theta)
    }
}

/// Tangent vector of SE(2), ordered `(vx, vy, omega)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist2 {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Twist2 {
    pub const ZERO: Twist2 = Twist2 {
        vx: 0.0,
        vy: 0.0,
        omega: 0.0,
    };

    pub const fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Twist2 { vx, vy, omega }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Twist2::new(v[0], v[1], v[2])
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.vx, self.vy, self.omega)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.vx, self.vy, self.omega]
    }

    pub fn norm_squared(&self) -> f64 {
        self.vx * self.vx + self.vy * self.vy + self.omega * self.omega
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }

    pub fn scale(&self, k: f64) -> Twist2 {
        Twist2::new(self.vx * k, self.vy * k, self.omega * k)
    }

    /// Closed-form SE(2) exponential.
    pub fn exp(&self) -> Pose2 {
        let (a, b) = v_coefficients(self.omega);
        Pose2::new(
            a * self.vx - b * self.vy,
            b * self.vx + a * self.vy,
            self.omega,
        )
    }

    /// Right Jacobian of the exponential map at this tangent vector.
    pub fn right_jacobian(&self) -> Matrix3<f64> {
        let (vx, vy, t) = (self.vx, self.vy, self.omega);
        let (a, b) = v_coefficients(t);
        let (c13, c23) = if t.abs() < SMALL_ANGLE_THRESHOLD {
            (-vy / 2.0 + vx * t / 6.0, vx / 2.0 + vy * t / 6.0)
        } else {
            let (s, c) = t.sin_cos();
            let t2 = t * t;
            (
                (t * vx - vy + vy * c - vx * s) / t2,
                (vx + t * vy - vx * c - vy * s) / t2,
            )
        };
        Matrix3::new(a, b, c13, -b, a, c23, 0.0, 0.0, 1.0)
    }

    /// Inverse of [`Twist2::right_jacobian`].
    pub fn right_jacobian_inverse(&self) -> Matrix3<f64> {
        // Block-triangular: [[A, c], [0, 1]] with A = [[a, b], [-b, a]].
        let jr = self.right_jacobian();
        let (a, b) = (jr[(0, 0)], jr[(0, 1)]);
        let det = a * a + b * b;
        let ia = a / det;
        let ib = -b / det;
        // A^-1 = [[ia, ib], [-ib, ia]]
        let c1 = jr[(0, 2)];
        let c2 = jr[(1, 2)];
        Matrix3::new(
            ia,
            ib,
            -(ia * c1 + ib * c2),
            -ib,
            ia,
            -(-ib * c1 + ia * c2),
            0.0,
            0.0,
            1.0,
        )
    }
}

impl std::ops::Sub for Twist2 {
    type Output = Twist2;

    fn sub(self, rhs: Twist2) -> Twist2 {
        Twist2::new(self.vx - rhs.vx, self.vy - rhs.vy, self.omega - rhs.omega)
    }
}

impl std::ops::Add for Twist2 {
    type Output = Twist2;

    fn add(self, rhs: Twist2) -> Twist2 {
        Twist2::new(self.vx + rhs.vx, self.vy + rhs.vy, self.omega + rhs.omega)
    }
}
