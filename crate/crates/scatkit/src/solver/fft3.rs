//! FFT-accelerated 3-D convolution with a translation-invariant kernel.
//!
//! The interaction matrix of the volume discretisation is a convolution —
//! entry `(i, j)` depends only on the lattice offset between cells `i` and
//! `j`. Embedding the kernel in a grid padded to twice the logical size per
//! axis makes the circular convolution computed by FFTs coincide with the
//! linear one on the logical region, turning an `O(N²)` dense product into
//! `O(N log N)` per application.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Reusable per-thread workspace for [`Conv3::apply`].
pub struct ConvScratch {
    padded: Vec<Complex64>,
    line: Vec<Complex64>,
    fft_work: Vec<Complex64>,
}

/// Precomputed convolution operator on an `nx × ny × nz` logical grid.
pub struct Conv3 {
    dims: [usize; 3],
    padded: [usize; 3],
    /// Forward transform of the padded kernel table.
    kernel_hat: Vec<Complex64>,
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl Conv3 {
    /// Build the operator for a kernel given per lattice offset
    /// `(dx, dy, dz)`, each component in `(-n, n)` for the respective axis.
    pub fn new(dims: [usize; 3], kernel: impl Fn(i64, i64, i64) -> Complex64) -> Self {
        let padded = [2 * dims[0], 2 * dims[1], 2 * dims[2]];
        let mut planner = FftPlanner::new();
        let forward = [
            planner.plan_fft_forward(padded[0]),
            planner.plan_fft_forward(padded[1]),
            planner.plan_fft_forward(padded[2]),
        ];
        let inverse = [
            planner.plan_fft_inverse(padded[0]),
            planner.plan_fft_inverse(padded[1]),
            planner.plan_fft_inverse(padded[2]),
        ];

        // Circulant embedding: index m on an axis of padded length 2n stands
        // for offset m when m < n and m − 2n otherwise. Offset magnitude n
        // itself (index m = n) is never hit by two logical cells; it reuses
        // the kernel value at distance n for definiteness.
        let mut table = vec![Complex64::new(0.0, 0.0); padded[0] * padded[1] * padded[2]];
        let unwrap = |m: usize, axis: usize| -> i64 {
            let p = padded[axis] as i64;
            let m = m as i64;
            if m <= p / 2 {
                m
            } else {
                m - p
            }
        };
        for mx in 0..padded[0] {
            let ox = unwrap(mx, 0);
            for my in 0..padded[1] {
                let oy = unwrap(my, 1);
                for mz in 0..padded[2] {
                    let oz = unwrap(mz, 2);
                    table[(mx * padded[1] + my) * padded[2] + mz] = kernel(ox, oy, oz);
                }
            }
        }

        let mut conv = Conv3 { dims, padded, kernel_hat: Vec::new(), forward, inverse };
        let mut scratch = conv.make_scratch();
        conv.fft3(&mut table, &mut scratch, true);
        conv.kernel_hat = table;
        conv
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    fn logical_len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    fn padded_len(&self) -> usize {
        self.padded[0] * self.padded[1] * self.padded[2]
    }

    pub fn make_scratch(&self) -> ConvScratch {
        let max_axis = self.padded.iter().copied().max().unwrap();
        let max_fft_work = self
            .forward
            .iter()
            .chain(self.inverse.iter())
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap();
        ConvScratch {
            padded: vec![Complex64::new(0.0, 0.0); self.padded_len()],
            line: vec![Complex64::new(0.0, 0.0); max_axis],
            fft_work: vec![Complex64::new(0.0, 0.0); max_fft_work],
        }
    }

    /// In-place 3-D FFT over the padded volume, one axis at a time.
    fn fft3(&self, data: &mut [Complex64], scratch: &mut ConvScratch, fwd: bool) {
        let [px, py, pz] = self.padded;
        let plans = if fwd { &self.forward } else { &self.inverse };

        // Axis z: lines are contiguous; rustfft processes the whole volume
        // as consecutive transforms of length pz.
        plans[2].process_with_scratch(data, &mut scratch.fft_work);

        // Axis y: gather strided lines.
        for ix in 0..px {
            for iz in 0..pz {
                let base = ix * py * pz + iz;
                for iy in 0..py {
                    scratch.line[iy] = data[base + iy * pz];
                }
                plans[1].process_with_scratch(&mut scratch.line[..py], &mut scratch.fft_work);
                for iy in 0..py {
                    data[base + iy * pz] = scratch.line[iy];
                }
            }
        }

        // Axis x.
        let stride = py * pz;
        for rest in 0..stride {
            for ix in 0..px {
                scratch.line[ix] = data[ix * stride + rest];
            }
            plans[0].process_with_scratch(&mut scratch.line[..px], &mut scratch.fft_work);
            for ix in 0..px {
                data[ix * stride + rest] = scratch.line[ix];
            }
        }
    }

    /// Convolve `input` (logical grid, row-major `((x·ny)+y)·nz+z`) with the
    /// kernel; `output` is resized to the logical length.
    pub fn apply(
        &self,
        input: &[Complex64],
        output: &mut Vec<Complex64>,
        scratch: &mut ConvScratch,
    ) {
        assert_eq!(input.len(), self.logical_len());
        let [nx, ny, nz] = self.dims;
        let [_, py, pz] = self.padded;

        scratch.padded.fill(Complex64::new(0.0, 0.0));
        for ix in 0..nx {
            for iy in 0..ny {
                let src = (ix * ny + iy) * nz;
                let dst = (ix * py + iy) * pz;
                scratch.padded[dst..dst + nz].copy_from_slice(&input[src..src + nz]);
            }
        }

        // Split borrows: temporarily move the padded buffer out of scratch
        // so fft3 can borrow scratch mutably alongside it.
        let mut volume = std::mem::take(&mut scratch.padded);
        self.fft3(&mut volume, scratch, true);
        for (v, k) in volume.iter_mut().zip(&self.kernel_hat) {
            *v *= k;
        }
        self.fft3(&mut volume, scratch, false);

        let scale = 1.0 / self.padded_len() as f64;
        output.resize(self.logical_len(), Complex64::new(0.0, 0.0));
        for ix in 0..nx {
            for iy in 0..ny {
                let dst = (ix * ny + iy) * nz;
                let src = (ix * py + iy) * pz;
                for iz in 0..nz {
                    output[dst + iz] = volume[src + iz] * scale;
                }
            }
        }
        scratch.padded = volume;
    }
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
