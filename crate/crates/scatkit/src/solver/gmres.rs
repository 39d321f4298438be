//! Matrix-free restarted GMRES for complex systems.
//!
//! The volume discretisation only exposes `v ↦ (I − κ²AC)v` through FFT
//! convolutions, so the linear solve must be matrix-free. GMRES with modified
//! Gram–Schmidt and Givens rotations minimises the residual over each Krylov
//! block; restarts bound the memory at `restart + 1` basis vectors.

use num_complex::Complex64;

use crate::error::{Result, ScatError};

/// Iteration statistics of a converged solve.
#[derive(Debug, Clone, Copy)]
pub struct KrylovReport {
    /// Number of operator applications consumed.
    pub iterations: usize,
    /// Final true relative residual `‖b − Ax‖/‖b‖`.
    pub residual: f64,
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Solve `A x = b` with the operator given as a closure writing `A·v` into
/// its second argument. Returns the solution and iteration statistics, or
/// [`ScatError::SolverStalled`] when the budget runs out.
pub fn solve_gmres<F>(
    mut apply: F,
    b: &[Complex64],
    tolerance: f64,
    restart: usize,
    max_iterations: usize,
) -> Result<(Vec<Complex64>, KrylovReport)>
where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    let n = b.len();
    let norm_b = norm(b);
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    if norm_b == 0.0 {
        return Ok((x, KrylovReport { iterations: 0, residual: 0.0 }));
    }
    let target = tolerance * norm_b;

    let mut work = vec![Complex64::new(0.0, 0.0); n];
    let mut iterations = 0usize;
    // Upper bound on restarts so a stagnating solve cannot loop forever even
    // if rounding keeps the estimated residual just above the target.
    let max_cycles = max_iterations / restart.max(1) + 2;

    let mut true_residual = f64::INFINITY;
    for _cycle in 0..max_cycles {
        // r = b − A x
        apply(&x, &mut work);
        let mut r: Vec<Complex64> = b.iter().zip(&work).map(|(bi, wi)| bi - wi).collect();
        let beta = norm(&r);
        true_residual = beta;
        if beta <= target {
            return Ok((
                x,
                KrylovReport { iterations, residual: beta / norm_b },
            ));
        }
        if iterations >= max_iterations {
            break;
        }

        for z in r.iter_mut() {
            *z /= beta;
        }
        let mut basis: Vec<Vec<Complex64>> = vec![r];
        let m = restart.min(max_iterations - iterations).max(1);
        // Hessenberg columns after Givens reduction, plus rotation storage.
        let mut h_cols: Vec<Vec<Complex64>> = Vec::with_capacity(m);
        let mut cos: Vec<f64> = Vec::with_capacity(m);
        let mut sin: Vec<Complex64> = Vec::with_capacity(m);
        let mut g = vec![Complex64::new(0.0, 0.0); m + 1];
        g[0] = Complex64::new(beta, 0.0);

        let mut converged_at: Option<usize> = None;
        for j in 0..m {
            apply(&basis[j], &mut work);
            iterations += 1;
            let mut h = vec![Complex64::new(0.0, 0.0); j + 2];
            let mut w = work.clone();
            // Modified Gram–Schmidt with one re-orthogonalisation sweep for
            // robustness at tight tolerances.
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let corr = dot(v, &w);
                    if corr.norm() == 0.0 {
                        continue;
                    }
                    h[i] += corr;
                    for (wk, vk) in w.iter_mut().zip(v) {
                        *wk -= corr * vk;
                    }
                }
            }
            let w_norm = norm(&w);
            h[j + 1] = Complex64::new(w_norm, 0.0);

            // Apply the accumulated rotations to the new column.
            for i in 0..j {
                let hi = h[i];
                let hi1 = h[i + 1];
                h[i] = cos[i] * hi + sin[i] * hi1;
                h[i + 1] = -sin[i].conj() * hi + cos[i] * hi1;
            }
            // New rotation zeroing the subdiagonal.
            let a = h[j];
            let bb = h[j + 1];
            let (c, s, rr) = if bb.norm() == 0.0 {
                (1.0, Complex64::new(0.0, 0.0), a)
            } else if a.norm() == 0.0 {
                (0.0, Complex64::new(1.0, 0.0), bb)
            } else {
                let t = (a.norm_sqr() + bb.norm_sqr()).sqrt();
                let phase = a / a.norm();
                (a.norm() / t, phase * bb.conj() / t, phase * t)
            };
            h[j] = rr;
            h[j + 1] = Complex64::new(0.0, 0.0);
            cos.push(c);
            sin.push(s);
            let gj = g[j];
            g[j] = c * gj + s * g[j + 1];
            g[j + 1] = -s.conj() * gj + c * g[j + 1];
            h_cols.push(h);

            let estimate = g[j + 1].norm();
            if estimate <= target || w_norm < 1e-14 * norm_b || j + 1 == m {
                converged_at = Some(j + 1);
                if estimate <= target || w_norm < 1e-14 * norm_b {
                    break;
                }
            }
            if iterations >= max_iterations {
                converged_at = Some(j + 1);
                break;
            }
            for z in w.iter_mut() {
                *z /= w_norm;
            }
            basis.push(w);
        }

        // Back-substitute R y = g and update x.
        let k = converged_at.unwrap_or(0);
        if k > 0 {
            let mut y = vec![Complex64::new(0.0, 0.0); k];
            for row in (0..k).rev() {
                let mut acc = g[row];
                for col in (row + 1)..k {
                    acc -= h_cols[col][row] * y[col];
                }
                y[row] = acc / h_cols[row][row];
            }
            for (col, yc) in y.iter().enumerate() {
                for (xi, vi) in x.iter_mut().zip(&basis[col]) {
                    *xi += yc * vi;
                }
            }
        }
    }

    Err(ScatError::SolverStalled {
        residual: true_residual / norm_b,
        iterations,
        budget: max_iterations,
        target: tolerance,
    })
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
