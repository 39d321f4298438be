//! Partial-wave (Mie-type) series for the constant-index ball.
//!
//! For a ball of refractive index `n0` the scattering problem separates in
//! spherical harmonics, giving closed-form interior/scattered coefficients
//! per angular order. These series are computed from scratch — no volume
//! discretisation — so they serve as an independent oracle for the volume
//! solver: agreement of two methods with disjoint failure modes validates
//! both.
//!
//! Conventions match the rest of the crate: incident field
//! `exp(i kappa theta . x)`, scattered field `exp(i kappa r)/(4 pi r) * F` at
//! large `r`, so the far-field pattern carries the `4 pi` of the free-space
//! kernel.

use num_complex::Complex64;

use crate::error::{Result, ScatError};
use crate::farfield::{FarFieldMatrix, MatrixKind};
use crate::geom::Vec3;
use crate::special::{
    bessel_derivative_complex, bessel_derivative_real, legendre_array, spherical_hn_array,
    spherical_jn_array,
};
use crate::waves::WaveConfig;

/// Relative tail size at which the partial-wave series is truncated.
const TAIL_TOLERANCE: f64 = 1e-12;
/// Consecutive below-tolerance orders required before truncating.
const TAIL_RUN: usize = 3;

fn i_pow(l: usize) -> Complex64 {
    match l % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Plane-wave scattering by a homogeneous ball, solved per angular order.
///
/// Interior total field: `sum (2l+1) i^l alpha_l j_l(kappa1 r) P_l(cos g)`;
/// exterior scattered field: `sum (2l+1) i^l beta_l h_l(kappa r) P_l(cos g)`
/// with `kappa1 = kappa n0` and `cos g = rhat . theta` (ball-centred frame).
#[derive(Debug, Clone)]
pub struct MieBall {
    n0: f64,
    radius: f64,
    center: Vec3,
    kappa: f64,
    alpha: Vec<Complex64>,
    beta: Vec<Complex64>,
}

impl MieBall {
    pub fn new(n0: f64, radius: f64, center: Vec3, kappa: f64) -> Result<Self> {
        if !(n0 > 0.0 && radius > 0.0 && kappa > 0.0) {
            return Err(ScatError::InvalidConfig(format!(
                "ball series needs n0, radius, kappa all positive, \
                 got ({n0}, {radius}, {kappa})"
            )));
        }
        let kappa1 = kappa * n0;
        let x_out = kappa * radius;
        let x_in = kappa1 * radius;
        let l_cap = (1.5 * x_in.max(x_out)).ceil() as usize + 48;

        let j_out = spherical_jn_array(l_cap, x_out);
        let dj_out = bessel_derivative_real(&j_out, x_out);
        let j_in = spherical_jn_array(l_cap, x_in);
        let dj_in = bessel_derivative_real(&j_in, x_in);
        let h_out = spherical_hn_array(l_cap, x_out);
        let dh_out = bessel_derivative_complex(&h_out, x_out);

        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        let mut quiet_run = 0;
        for l in 0..=l_cap {
            // Continuity of the field and its radial flux at r = radius:
            //   alpha j_l(x_in) − beta h_l(x_out) = j_l(x_out)
            //   alpha kappa1 j_l'(x_in) − beta kappa h_l'(x_out) = kappa j_l'(x_out)
            let a11 = Complex64::new(j_in[l], 0.0);
            let a12 = -h_out[l];
            let a21 = Complex64::new(kappa1 * dj_in[l], 0.0);
            let a22 = -dh_out[l] * kappa;
            let b1 = Complex64::new(j_out[l], 0.0);
            let b2 = Complex64::new(kappa * dj_out[l], 0.0);
            let det = a11 * a22 - a12 * a21;
            let al = (b1 * a22 - a12 * b2) / det;
            let bl = (a11 * b2 - b1 * a21) / det;
            alpha.push(al);
            beta.push(bl);

            let weight = (2 * l + 1) as f64;
            let tail = weight
                * (bl.norm() * (1.0 + h_out[l].norm()) + al.norm() * j_in[l].abs());
            if tail < TAIL_TOLERANCE {
                quiet_run += 1;
                if quiet_run >= TAIL_RUN {
                    alpha.truncate(l + 1);
                    beta.truncate(l + 1);
                    return Ok(MieBall { n0, radius, center, kappa, alpha, beta });
                }
            } else {
                quiet_run = 0;
            }
        }
        Err(ScatError::SeriesTruncation {
            size_parameter: x_in.max(x_out),
            max_order: l_cap,
            tolerance: TAIL_TOLERANCE,
        })
    }

    /// Highest angular order retained.
    pub fn l_max(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn interior_coefficients(&self) -> &[Complex64] {
        &self.alpha
    }

    pub fn scattered_coefficients(&self) -> &[Complex64] {
        &self.beta
    }

    /// Total field at `x` for incidence direction `theta`.
    pub fn total_field(&self, theta: Vec3, x: Vec3) -> Complex64 {
        let kappa = self.kappa;
        // Translation rule: the ball-centred solution picks up the incident
        // phase at the center.
        let phase = (Complex64::i() * kappa * theta.dot(self.center)).exp();
        let rel = x - self.center;
        let r = rel.norm();
        let l_max = self.l_max();
        if r < self.radius {
            let kappa1 = kappa * self.n0;
            if r < 1e-14 {
                // Only the monopole term survives at the center.
                return phase * self.alpha[0];
            }
            let cos_g = rel.dot(theta) / r;
            let j = spherical_jn_array(l_max, kappa1 * r);
            let p = legendre_array(l_max, cos_g.clamp(-1.0, 1.0));
            let mut sum = Complex64::new(0.0, 0.0);
            for l in 0..=l_max {
                sum += (2 * l + 1) as f64 * i_pow(l) * self.alpha[l] * j[l] * p[l];
            }
            phase * sum
        } else {
            let cos_g = rel.dot(theta) / r;
            let h = spherical_hn_array(l_max, kappa * r);
            let p = legendre_array(l_max, cos_g.clamp(-1.0, 1.0));
            let mut scattered = Complex64::new(0.0, 0.0);
            for l in 0..=l_max {
                scattered += (2 * l + 1) as f64 * i_pow(l) * self.beta[l] * h[l] * p[l];
            }
            let incident = (Complex64::i() * kappa * theta.dot(x)).exp();
            incident + phase * scattered
        }
    }

    /// Far-field pattern at observation `xhat` for incidence `theta`.
    pub fn far_field(&self, xhat: Vec3, theta: Vec3) -> Complex64 {
        let kappa = self.kappa;
        let cos_g = xhat.dot(theta).clamp(-1.0, 1.0);
        let p = legendre_array(self.l_max(), cos_g);
        let mut sum = Complex64::new(0.0, 0.0);
        for l in 0..=self.l_max() {
            sum += (2 * l + 1) as f64 * self.beta[l] * p[l];
        }
        // h_l(kr) ~ (-i)^{l+1} e^{ikr}/(kr) cancels the i^l of the expansion.
        let amplitude = sum * 4.0 * std::f64::consts::PI / (Complex64::i() * kappa);
        let shift = (Complex64::i() * kappa * (theta - xhat).dot(self.center)).exp();
        amplitude * shift
    }

    /// Backscatter matrix over a direction set: entry `(i, j)` is the
    /// pattern at `−θ_i` under incidence `θ_j`.
    pub fn far_field_matrix(&self, waves: &WaveConfig) -> FarFieldMatrix {
        let dirs = waves.directions();
        let n = dirs.len();
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(self.far_field(-dirs[i], dirs[j]));
            }
        }
        FarFieldMatrix {
            kind: MatrixKind::Background,
            kappa: waves.kappa(),
            directions: dirs.to_vec(),
            values,
        }
    }

    /// Total scattering cross-section from the coefficient series.
    pub fn scattering_cross_section(&self) -> f64 {
        let s: f64 = self
            .beta
            .iter()
            .enumerate()
            .map(|(l, b)| (2 * l + 1) as f64 * b.norm_sqr())
            .sum();
        4.0 * std::f64::consts::PI / (self.kappa * self.kappa) * s
    }
}

/// Point source at the center of a homogeneous ball.
///
/// The radiating solution `exp(i kappa1 r)/(4 pi r)` plus a regular monopole
/// correction inside, matched to an outgoing monopole outside. Because only
/// the `l = 0` mode is excited, this gives a closed-form Green function for
/// source points at the ball center — an independent oracle for point-source
/// solves.
#[derive(Debug, Clone)]
pub struct CenterMonopole {
    n0: f64,
    radius: f64,
    center: Vec3,
    kappa: f64,
    /// Regular interior correction coefficient.
    alpha: Complex64,
    /// Outgoing exterior amplitude.
    gamma: Complex64,
}

impl CenterMonopole {
    pub fn new(n0: f64, radius: f64, center: Vec3, kappa: f64) -> Result<Self> {
        if !(n0 > 0.0 && radius > 0.0 && kappa > 0.0) {
            return Err(ScatError::InvalidConfig(format!(
                "center-source series needs n0, radius, kappa all positive, \
                 got ({n0}, {radius}, {kappa})"
            )));
        }
        let pi4 = 4.0 * std::f64::consts::PI;
        let kappa1 = kappa * n0;
        let r = radius;
        let i = Complex64::i();
        // Unknowns (alpha, gamma):
        //   e^{i kappa1 R}/(4 pi R) + alpha j_0(kappa1 R) = gamma e^{i kappa R}/(4 pi R)
        //   d/dr of the same matching at R.
        let exp_in = (i * kappa1 * r).exp();
        let exp_out = (i * kappa * r).exp();
        let j0 = (kappa1 * r).sin() / (kappa1 * r);
        let dj0 = kappa1 * ((kappa1 * r).cos() / (kappa1 * r) - (kappa1 * r).sin() / (kappa1 * r).powi(2));
        let source_val = exp_in / (pi4 * r);
        let source_der = exp_in * (i * kappa1 * r - 1.0) / (pi4 * r * r);
        let out_val = exp_out / (pi4 * r);
        let out_der = exp_out * (i * kappa * r - 1.0) / (pi4 * r * r);
        // [ j0   -out_val ] [alpha]   [ -source_val ]
        // [ dj0  -out_der ] [gamma] = [ -source_der ]
        let det = Complex64::new(j0, 0.0) * (-out_der) - (-out_val) * Complex64::new(dj0, 0.0);
        let alpha = ((-source_val) * (-out_der) - (-out_val) * (-source_der)) / det;
        let gamma = (Complex64::new(j0, 0.0) * (-source_der) - (-source_val) * Complex64::new(dj0, 0.0))
            / det;
        Ok(CenterMonopole { n0, radius, center, kappa, alpha, gamma })
    }

    pub fn exterior_amplitude(&self) -> Complex64 {
        self.gamma
    }

    pub fn interior_coefficient(&self) -> Complex64 {
        self.alpha
    }

    /// Green function value at `x` for the source at the ball center.
    pub fn field(&self, x: Vec3) -> Complex64 {
        let pi4 = 4.0 * std::f64::consts::PI;
        let i = Complex64::i();
        let r = x.dist(self.center);
        assert!(r > 0.0, "field requested at the source point");
        if r < self.radius {
            let kappa1 = self.kappa * self.n0;
            let j0 = (kappa1 * r).sin() / (kappa1 * r);
            (i * kappa1 * r).exp() / (pi4 * r) + self.alpha * j0
        } else {
            self.gamma * (i * self.kappa * r).exp() / (pi4 * r)
        }
    }

    /// Far-field pattern of the Green function, observation `xhat`.
    pub fn far_field(&self, xhat: Vec3) -> Complex64 {
        self.gamma * (-Complex64::i() * self.kappa * xhat.dot(self.center)).exp()
    }
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
