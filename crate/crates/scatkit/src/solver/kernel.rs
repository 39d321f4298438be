//! Cell-averaged free-space kernel.
//!
//! The volume discretisation collocates the Lippmann–Schwinger integral at
//! cell centers. Integrating the free-space kernel `Φ(x, y) = e^{iκ|x−y|} /
//! (4π|x−y|)` over the *source* cell — approximated by the ball of equal
//! volume, for which the integral has a closed form — removes the 1/|x−y|
//! singularity of the self cell and keeps the interaction matrix symmetric,
//! which the reciprocity identities of the far field rely on.
//!
//! With `r` the equal-volume ball radius,
//!
//! * `F(ρ) = (sin κr − κr cos κr)/κ³ · e^{iκρ}/ρ` for `ρ ≥ r`,
//! * `F(ρ) = (1/κ²) [ (1 − iκr) e^{iκr} j₀(κρ) − 1 ]` for `ρ < r`,
//! * `F(0) = (1/κ²) [ (1 − iκr) e^{iκr} − 1 ]`,
//!
//! each implemented in a cancellation-free form so the `κ → 0` static limit
//! stays accurate.

use num_complex::Complex64;

/// `(sin x − x cos x) / x³`, the normalised ball moment.
fn ball_moment(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // sum_{k>=1} (-1)^{k+1} 2k x^{2k-2} / (2k+1)!
        let x_sq = x * x;
        let mut term = 1.0 / 3.0;
        let mut sum = term;
        for k in 1..30 {
            let k = k as f64;
            // ratio between consecutive series terms
            term *= -x_sq / ((2.0 * k) * (2.0 * k + 3.0));
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (x.sin() - x * x.cos()) / (x * x * x)
    }
}

/// `((1 − ix) e^{ix} − 1) / x²`, the self-cell factor.
fn self_factor(x: f64) -> Complex64 {
    if x.abs() < 0.5 {
        // sum_{m>=2} (1−m) (ix)^m / m! / x², summed without cancellation
        let ix = Complex64::new(0.0, x);
        let mut power = ix * ix; // (ix)^m starting at m = 2
        let mut factorial = 2.0; // m!
        let mut sum = Complex64::new(0.0, 0.0);
        for m in 2..40 {
            let term = power * ((1.0 - m as f64) / factorial);
            sum += term;
            if term.norm() < 1e-18 * sum.norm().max(1e-300) {
                break;
            }
            power *= ix;
            factorial *= (m + 1) as f64;
        }
        sum / (x * x)
    } else {
        let e = Complex64::new(0.0, x).exp();
        ((Complex64::new(1.0, -x)) * e - 1.0) / (x * x)
    }
}

/// `(sin x / x − 1) / x²`, used for the interior branch.
fn sinc_minus_one(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // -1/6 + x²/120 − x⁴/5040 + …
        let x_sq = x * x;
        let mut term = -1.0 / 6.0;
        let mut sum = term;
        for k in 1..30 {
            let k = k as f64;
            term *= -x_sq / ((2.0 * k + 2.0) * (2.0 * k + 3.0));
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (x.sin() / x - 1.0) / (x * x)
    }
}

/// The kernel `F(ρ) = ∫_{B_r} Φ(ρ, y) dy` for a fixed mollification radius.
#[derive(Debug, Clone, Copy)]
pub struct MollifiedKernel {
    kappa: f64,
    /// Equal-volume ball radius of the grid cell.
    r_eq: f64,
}

impl MollifiedKernel {
    /// Kernel for cubic cells of side `cell`: `r_eq = (3/4π)^{1/3} · cell`.
    pub fn for_cell(kappa: f64, cell: f64) -> Self {
        assert!(kappa > 0.0 && cell > 0.0);
        let r_eq = (3.0 / (4.0 * std::f64::consts::PI)).cbrt() * cell;
        MollifiedKernel { kappa, r_eq }
    }

    pub fn radius(&self) -> f64 {
        self.r_eq
    }

    /// Evaluate `F` at center distance `rho ≥ 0`.
    pub fn eval(&self, rho: f64) -> Complex64 {
        let k = self.kappa;
        let r = self.r_eq;
        if rho == 0.0 {
            return self_factor(k * r) * (r * r);
        }
        if rho < r {
            let x = k * rho;
            let j0 = if x < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
            return self_factor(k * r) * (r * r) * j0 + sinc_minus_one(x) * (rho * rho);
        }
        let radial = Complex64::new(0.0, k * rho).exp() / rho;
        radial * (r * r * r * ball_moment(k * r))
    }

    /// Evaluate at the separation of two points.
    pub fn eval_points(&self, x: crate::geom::Vec3, y: crate::geom::Vec3) -> Complex64 {
        self.eval(x.dist(y))
    }
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values: adaptive quadrature of the ball integral in
    // scripts/reference_values.py (kappa = 1.3, cell such that r_eq = 0.2).
    fn reference_kernel() -> MollifiedKernel {
        MollifiedKernel { kappa: 1.3, r_eq: 0.2 }
    }

    fn assert_close(actual: Complex64, re: f64, im: f64, tol: f64, what: &str) {
        let expect = Complex64::new(re, im);
        let err = (actual - expect).norm() / expect.norm();
        assert!(err < tol, "{what}: got {actual}, want {expect} (rel {err:.2e})");
    }

    #[test]
    fn test_kernel_matches_quadrature_reference() {
        let k = reference_kernel();
        assert_close(
            k.eval(0.0),
            0.019663267234599675,
            0.0034432885072080794,
            1e-10,
            "self cell",
        );
        assert_close(
            k.eval(0.05),
            0.019232845287287272,
            0.003440864370373168,
            1e-10,
            "deep interior",
        );
        assert_close(
            k.eval(0.15),
            0.015796011226191835,
            0.003421508117526362,
            1e-10,
            "shallow interior",
        );
        assert_close(
            k.eval(0.2),
            0.012798305789198612,
            0.003404625037526803,
            1e-10,
            "boundary",
        );
        assert_close(
            k.eval(0.5),
            0.004217147991259259,
            0.0032058944547530355,
            1e-10,
            "near exterior",
        );
        assert_close(
            k.eval(3.0),
            -0.0006409216307854935,
            -0.000607224951683288,
            1e-10,
            "far exterior",
        );
    }

    #[test]
    fn test_interior_and_exterior_branches_agree_at_radius() {
        let k = reference_kernel();
        // Evaluate the interior branch formula just inside the radius and the
        // exterior branch at the radius; they must agree to round-off scale.
        let inner = k.eval(0.2 - 1e-12);
        let outer = k.eval(0.2);
        assert!(
            (inner - outer).norm() < 1e-10 * outer.norm(),
            "branch mismatch at rho = r: {inner} vs {outer}"
        );
    }

    #[test]
    fn test_static_limit_reproduces_newtonian_potential() {
        // kappa -> 0: F(0) -> r²/2, F(rho<r) -> r²/2 − rho²/6,
        // F(rho>r) -> r³/(3 rho), all classical results for the uniform ball.
        let k = MollifiedKernel { kappa: 1e-9, r_eq: 0.3 };
        let r: f64 = 0.3;
        assert!((k.eval(0.0).re - r * r / 2.0).abs() < 1e-12);
        assert!((k.eval(0.1).re - (r * r / 2.0 - 0.1f64 * 0.1 / 6.0)).abs() < 1e-12);
        assert!((k.eval(0.9).re - r * r * r / (3.0 * 0.9)).abs() < 1e-12);
        // Imaginary part ~ kappa * r³/3 for every branch.
        for rho in [0.0, 0.1, 0.9] {
            assert!(
                (k.eval(rho).im - 1e-9 * r * r * r / 3.0).abs() < 1e-20,
                "static imaginary part should be kappa r³/3 at rho = {rho}"
            );
        }
    }

    #[test]
    fn test_kernel_sum_approximates_ball_volume_potential() {
        // Tiling a ball with small cells and summing F reproduces the
        // analytic potential of the whole ball at an exterior point.
        let kappa = 0.9;
        let cell = 0.04;
        let kernel = MollifiedKernel::for_cell(kappa, cell);
        let big_radius: f64 = 0.5;
        let obs = crate::geom::Vec3::new(1.2, 0.0, 0.0);
        let mut sum = Complex64::new(0.0, 0.0);
        let half = (big_radius / cell).ceil() as i64 + 1;
        for ix in -half..=half {
            for iy in -half..=half {
                for iz in -half..=half {
                    let c = crate::geom::Vec3::new(
                        (ix as f64 + 0.5) * cell,
                        (iy as f64 + 0.5) * cell,
                        (iz as f64 + 0.5) * cell,
                    );
                    if c.norm() <= big_radius {
                        sum += kernel.eval(obs.dist(c));
                    }
                }
            }
        }
        // Analytic: ball of radius R at distance rho, same closed form.
        let exact = Complex64::new(0.0, kappa * obs.norm()).exp() / obs.norm()
            * (big_radius.powi(3) * ball_moment(kappa * big_radius));
        let rel = (sum - exact).norm() / exact.norm();
        assert!(
            rel < 0.04,
            "tiled ball potential should approach the closed form, rel gap {rel:.3e}"
        );
    }
}
