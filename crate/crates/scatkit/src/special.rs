//! Spherical Bessel functions and Legendre polynomials.
//!
//! These feed the partial-wave series in [`crate::mie`]. The regular family
//! `j_l` is computed by downward (Miller) recurrence — upward recurrence is
//! violently unstable for `l ≳ x` — with a direct power series below `x = 2`
//! where the downward start order would have to grow like `1/x`. The
//! irregular family `y_l` grows with `l`, so plain upward recurrence is
//! stable for it.

use num_complex::Complex64;

/// Regular spherical Bessel functions `j_0..=j_max` at `x ≥ 0`.
pub fn spherical_jn_array(l_max: usize, x: f64) -> Vec<f64> {
    assert!(x >= 0.0, "spherical_jn_array requires x >= 0, got {x}");
    if x < 2.0 {
        return (0..=l_max).map(|l| jn_series(l, x)).collect();
    }
    // Miller downward recurrence from a start order comfortably above both
    // l_max and the turning point x, normalised against the closed forms of
    // j_0 and j_1 (whichever carries the larger trial value, to dodge zeros).
    let start = l_max + 469_f64.min(1.5 * x).ceil() as usize + 32;
    let mut f_up = 0.0_f64; // f_{l+1}
    let mut f = 1e-30_f64; // f_l
    let mut out = vec![0.0; l_max + 1];
    for l in (0..start).rev() {
        let f_down = (2 * l + 3) as f64 / x * f - f_up;
        f_up = f;
        f = f_down;
        if l <= l_max {
            out[l] = f;
        }
        // Rescale to avoid overflow; relative values are all that matter.
        if f.abs() > 1e250 {
            let s = 1e-250;
            f *= s;
            f_up *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    let j0 = x.sin() / x;
    let j1 = x.sin() / (x * x) - x.cos() / x;
    let trial1 = if l_max >= 1 { out[1] } else { f_up };
    let scale = if out[0].abs() >= trial1.abs() { j0 / out[0] } else { j1 / trial1 };
    for v in out.iter_mut() {
        *v *= scale;
    }
    out
}

/// Power series for `j_l` — accurate for small arguments, used below `x = 2`.
fn jn_series(l: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if l == 0 { 1.0 } else { 0.0 };
    }
    // Leading factor x^l / (2l+1)!!.
    let mut lead = 1.0_f64;
    for k in 0..l {
        lead *= x / (2 * k + 3) as f64;
    }
    if l == 0 {
        return x.sin() / x;
    }
    let half_x_sq = 0.5 * x * x;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    for k in 1..200 {
        term *= -half_x_sq / (k * (2 * l + 2 * k + 1)) as f64;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    lead * sum
}

/// Irregular spherical Bessel functions `y_0..=y_max` at `x > 0`.
pub fn spherical_yn_array(l_max: usize, x: f64) -> Vec<f64> {
    assert!(x > 0.0, "spherical_yn_array requires x > 0, got {x}");
    let y0 = -x.cos() / x;
    if l_max == 0 {
        return vec![y0];
    }
    let y1 = -x.cos() / (x * x) - x.sin() / x;
    let mut out = Vec::with_capacity(l_max + 1);
    out.push(y0);
    out.push(y1);
    for l in 1..l_max {
        let next = (2 * l + 1) as f64 / x * out[l] - out[l - 1];
        out.push(next);
    }
    out
}

/// Single value `j_l(x)`.
pub fn spherical_jn(l: usize, x: f64) -> f64 {
    spherical_jn_array(l, x)[l]
}

/// Single value `y_l(x)`.
pub fn spherical_yn(l: usize, x: f64) -> f64 {
    spherical_yn_array(l, x)[l]
}

/// Outgoing spherical Hankel functions `h_l = j_l + i·y_l` for `l ≤ l_max`.
pub fn spherical_hn_array(l_max: usize, x: f64) -> Vec<Complex64> {
    let j = spherical_jn_array(l_max, x);
    let y = spherical_yn_array(l_max, x);
    j.into_iter()
        .zip(y)
        .map(|(re, im)| Complex64::new(re, im))
        .collect()
}

/// Derivative array from a value array via `f'_l = f_{l−1} − (l+1)/x · f_l`
/// (`f'_0 = −f_1`). Valid for `j`, `y` and any linear combination.
pub fn bessel_derivative_real(values: &[f64], x: f64) -> Vec<f64> {
    let l_max = values.len() - 1;
    assert!(l_max >= 1, "need at least two orders for derivatives");
    let mut out = Vec::with_capacity(values.len());
    for l in 0..=l_max {
        if l == 0 {
            out.push(-values[1]);
        } else {
            out.push(values[l - 1] - (l + 1) as f64 / x * values[l]);
        }
    }
    out
}

/// Complex counterpart of [`bessel_derivative_real`], for Hankel functions.
pub fn bessel_derivative_complex(values: &[Complex64], x: f64) -> Vec<Complex64> {
    let l_max = values.len() - 1;
    let mut out = Vec::with_capacity(values.len());
    for l in 0..=l_max {
        if l == 0 {
            assert!(l_max >= 1, "need at least two orders for derivatives");
            out.push(-values[1]);
        } else {
            out.push(values[l - 1] - (l + 1) as f64 / x * values[l]);
        }
    }
    out
}

/// Legendre polynomials `P_0..=P_max` at `u ∈ [−1, 1]` (upward recurrence).
pub fn legendre_array(l_max: usize, u: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(l_max + 1);
    out.push(1.0);
    if l_max == 0 {
        return out;
    }
    out.push(u);
    for l in 1..l_max {
        let next = ((2 * l + 1) as f64 * u * out[l] - l as f64 * out[l - 1]) / (l + 1) as f64;
        out.push(next);
    }
    out
}

/// Single value `P_l(u)`.
pub fn legendre(l: usize, u: f64) -> f64 {
    legendre_array(l, u)[l]
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
