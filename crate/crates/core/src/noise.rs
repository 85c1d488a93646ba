//! Diagonal Gaussian noise models.

use serde::{Deserialize, Serialize};

use crate::se2::Twist2;

/// Per-axis standard deviations `(x, y, theta)` of a Gaussian factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct DiagonalNoise {
    sigmas: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("noise sigmas must be finite and strictly positive, got {0:?}")]
pub struct InvalidNoise(pub [f64; 3]);

/// Odometry edge model, one accumulated edge per camera frame.
pub const ODOMETRY_DEFAULT: DiagonalNoise = DiagonalNoise {
    sigmas: [0.024, 0.021, 0.056],
};

/// Absolute pose measurement model.
pub const MEASUREMENT_DEFAULT: DiagonalNoise = DiagonalNoise {
    sigmas: [15.621, 10.359, 0.086],
};

/// Prior on the first pose. Loose enough that a wrong prior is overruled by
/// the measurements within a few tens of frames.
pub const PRIOR_DEFAULT: DiagonalNoise = DiagonalNoise {
    sigmas: [10.0, 10.0, 0.5],
};

impl DiagonalNoise {
    pub fn new(sigma_x: f64, sigma_y: f64, sigma_theta: f64) -> Result<Self, InvalidNoise> {
        let sigmas = [sigma_x, sigma_y, sigma_theta];
        if sigmas.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(DiagonalNoise { sigmas })
        } else {
            Err(InvalidNoise(sigmas))
        }
    }

    pub fn isotropic(sigma: f64) -> Result<Self, InvalidNoise> {
        Self::new(sigma, sigma, sigma)
    }

    pub fn sigmas(&self) -> [f64; 3] {
        self.sigmas
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigmas[0]
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigmas[1]
    }

    pub fn sigma_theta(&self) -> f64 {
        self.sigmas[2]
    }

    /// Multiplies every sigma by `k` (`k > 0`).
    pub fn scaled(&self, k: f64) -> Result<Self, InvalidNoise> {
        Self::new(self.sigmas[0] * k, self.sigmas[1] * k, self.sigmas[2] * k)
    }

    /// Divides each residual component by its sigma.
    pub fn whiten(&self, r: &Twist2) -> Twist2 {
        Twist2::new(
            r.vx / self.sigmas[0],
            r.vy / self.sigmas[1],
            r.omega / self.sigmas[2],
        )
    }

    pub fn mahalanobis_sq(&self, r: &Twist2) -> f64 {
        self.whiten(r).norm_squared()
    }

    /// Inverse sigmas, the diagonal of the square-root information matrix.
    pub fn sqrt_information(&self) -> [f64; 3] {
        [
            1.0 / self.sigmas[0],
            1.0 / self.sigmas[1],
            1.0 / self.sigmas[2],
        ]
    }
}

impl TryFrom<[f64; 3]> for DiagonalNoise {
    type Error = InvalidNoise;

    fn try_from(s: [f64; 3]) -> Result<Self, Self::Error> {
        DiagonalNoise::new(s[0], s[1], s[2])
    }
}

impl From<DiagonalNoise> for [f64; 3] {
    fn from(n: DiagonalNoise) -> Self {
        n.sigmas
    }
}
