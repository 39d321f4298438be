//! Incident plane-wave configuration.
//!
//! Measurements use the same direction set for incidence and observation:
//! the backscatter matrix entry `(i, j)` observes along `-theta_i` while
//! illuminating along `theta_j`. A well-spread direction set keeps the probe
//! Gram matrices used during inversion away from rank deficiency, so the
//! default generator places directions on a Fibonacci spiral over the sphere.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScatError};
use crate::geom::Vec3;

/// Default number of incidence directions.
///
/// Two directions already make the inversion formally solvable for small
/// contrast; six keeps the pseudo-inverse comfortably over-determined without
/// assuming that regime.
pub const DEFAULT_DIRECTION_COUNT: usize = 6;

/// Wavenumber and incidence-direction set shared by a whole experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveConfig {
    kappa: f64,
    directions: Vec<Vec3>,
}

impl WaveConfig {
    /// Validate a direction set: at least two distinct unit vectors.
    pub fn new(kappa: f64, directions: Vec<Vec3>) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(ScatError::InvalidConfig(format!(
                "wavenumber must be positive and finite, got {kappa}"
            )));
        }
        if directions.len() < 2 {
            return Err(ScatError::InvalidConfig(format!(
                "need at least 2 incidence directions, got {}",
                directions.len()
            )));
        }
        for (idx, d) in directions.iter().enumerate() {
            if (d.norm() - 1.0).abs() > 1e-12 {
                return Err(ScatError::InvalidConfig(format!(
                    "direction {idx} is not a unit vector (|θ| = {})",
                    d.norm()
                )));
            }
        }
        for i in 0..directions.len() {
            for j in (i + 1)..directions.len() {
                if directions[i].dist(directions[j]) < 1e-12 {
                    return Err(ScatError::InvalidConfig(format!(
                        "directions {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(WaveConfig { kappa, directions })
    }

    /// `count` directions spread over the unit sphere on a Fibonacci spiral.
    pub fn fibonacci(kappa: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(ScatError::InvalidConfig(format!(
                "need at least 2 incidence directions, got {count}"
            )));
        }
        let golden = 0.5 * (1.0 + 5.0_f64.sqrt());
        let mut directions = Vec::with_capacity(count);
        for k in 0..count {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = 2.0 * std::f64::consts::PI * (k as f64) / golden;
            directions.push(Vec3::new(rho * phi.cos(), rho * phi.sin(), z));
        }
        WaveConfig::new(kappa, directions)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
