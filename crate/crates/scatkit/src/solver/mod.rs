//! Volume-integral solver for the inhomogeneous Helmholtz problem.
//!
//! The total field satisfies `V^t = V^i + κ² ∫_Ω (n²−1) Φ(·,y) V^t(y) dy`;
//! collocating at the centers of a cubic grid and averaging the kernel over
//! the source cell turns this into `(I − κ² A C) u = b` with `A` a symmetric
//! convolution ([`kernel`], [`fft3`]) and `C` the diagonal of cell-averaged
//! contrasts. The same discrete operator serves plane-wave and point-source
//! right-hand sides, so total fields, Green functions and far fields all come
//! from one code path and satisfy the reciprocity identities to solver
//! tolerance.

pub mod fft3;
pub mod gmres;
pub mod kernel;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, ScatError};
use crate::farfield::{FarFieldMatrix, MatrixKind};
use crate::geom::Vec3;
use crate::medium::MediumSpec;
use crate::waves::WaveConfig;

use fft3::Conv3;
use gmres::solve_gmres;
use kernel::MollifiedKernel;

/// Fraction of the free-space wavelength below which a requested Green
/// function evaluation counts as "near the source" and gets flagged.
pub const NEAR_SOURCE_WAVELENGTH_FRACTION: f64 = 1e-3;

/// Subdivisions per axis when averaging the contrast over a cell.
const CONTRAST_SUBSAMPLES: usize = 4;

/// Krylov-solver and grid-resolution parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    /// Grid cells along the longest axis of the support box.
    pub cells_per_axis: usize,
    /// Relative residual target for the iterative solve.
    pub tolerance: f64,
    /// Operator-application budget per solve.
    pub max_iterations: usize,
    /// Krylov block length between restarts.
    pub restart: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            cells_per_axis: 24,
            tolerance: 1e-8,
            max_iterations: 500,
            restart: 30,
        }
    }
}

impl SolverParams {
    pub fn with_cells(cells_per_axis: usize) -> Self {
        SolverParams { cells_per_axis, ..SolverParams::default() }
    }
}

/// Cubic-cell discretisation of the support box with cell-averaged contrast.
#[derive(Debug, Clone)]
pub struct VolumeGrid {
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    /// Cell-averaged contrast `n² − 1`, row-major.
    contrast: Vec<f64>,
    /// Indices of cells with nonzero averaged contrast.
    support: Vec<usize>,
}

impl VolumeGrid {
    /// Tile the support box of `medium` with cubic cells, `cells_per_axis`
    /// along its longest edge, and average the contrast over each cell.
    ///
    /// Fails with [`ScatError::GridTooCoarse`] when the cell exceeds an
    /// eighth of the shortest interior wavelength `2π/(κ·n_max)`.
    pub fn new(medium: &MediumSpec, kappa: f64, cells_per_axis: usize) -> Result<Self> {
        if cells_per_axis == 0 {
            return Err(ScatError::InvalidConfig(
                "grid needs at least one cell per axis".into(),
            ));
        }
        let widths = medium.support().widths();
        let longest = widths.iter().cloned().fold(0.0, f64::max);
        let cell = longest / cells_per_axis as f64;
        let limit = 2.0 * std::f64::consts::PI / (kappa * medium.n_max()) / 8.0;
        if cell > limit {
            return Err(ScatError::GridTooCoarse { cell, limit });
        }
        let mut dims = [0usize; 3];
        for axis in 0..3 {
            // Cells tile the box exactly or over-cover it; over-covered
            // cells see index 1 outside the box and contribute no contrast.
            dims[axis] = ((widths[axis] / cell) - 1e-9).ceil().max(1.0) as usize;
        }

        let origin = medium.support().min;
        let n_cells = dims[0] * dims[1] * dims[2];
        let mut contrast = vec![0.0; n_cells];
        let sub = CONTRAST_SUBSAMPLES;
        let sub_weight = 1.0 / (sub * sub * sub) as f64;
        for ix in 0..dims[0] {
            for iy in 0..dims[1] {
                for iz in 0..dims[2] {
                    let corner = origin
                        + Vec3::new(ix as f64 * cell, iy as f64 * cell, iz as f64 * cell);
                    let mut acc = 0.0;
                    for px in 0..sub {
                        for py in 0..sub {
                            for pz in 0..sub {
                                let p = corner
                                    + Vec3::new(
                                        (px as f64 + 0.5) / sub as f64 * cell,
                                        (py as f64 + 0.5) / sub as f64 * cell,
                                        (pz as f64 + 0.5) / sub as f64 * cell,
                                    );
                                acc += medium.contrast(p)?;
                            }
                        }
                    }
                    contrast[(ix * dims[1] + iy) * dims[2] + iz] = acc * sub_weight;
                }
            }
        }
        let support = contrast
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(i, _)| i)
            .collect();
        Ok(VolumeGrid { origin, cell, dims, contrast, support })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.contrast.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contrast.is_empty()
    }

    pub fn contrast(&self) -> &[f64] {
        &self.contrast
    }

    /// Indices of cells carrying contrast.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Center of cell `idx`.
    pub fn center(&self, idx: usize) -> Vec3 {
        let iz = idx % self.dims[2];
        let iy = (idx / self.dims[2]) % self.dims[1];
        let ix = idx / (self.dims[1] * self.dims[2]);
        self.origin
            + Vec3::new(
                (ix as f64 + 0.5) * self.cell,
                (iy as f64 + 0.5) * self.cell,
                (iz as f64 + 0.5) * self.cell,
            )
    }

    /// Cell volume.
    pub fn cell_volume(&self) -> f64 {
        self.cell * self.cell * self.cell
    }
}

/// What illuminated a stored field solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Incidence {
    /// Unit plane wave along the stored direction.
    PlaneWave(Vec3),
    /// Point source at the stored location.
    PointSource(Vec3),
}

/// Grid samples of a solved field plus iteration statistics.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub incidence: Incidence,
    /// Field values at cell centers (total field for plane waves, Green
    /// function for point sources).
    pub values: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
}

/// A Green-function evaluation with its proximity diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct GreenSample {
    pub value: Complex64,
    /// True when the evaluation point sits closer to the source than
    /// [`NEAR_SOURCE_WAVELENGTH_FRACTION`] of the free-space wavelength, where
    /// the discretisation cannot follow the 1/|x−z| growth.
    pub near_singular: bool,
}

/// Discretised scattering operator for one medium at one wavenumber.
pub struct MediumSolver {
    medium: MediumSpec,
    kappa: f64,
    params: SolverParams,
    grid: VolumeGrid,
    kernel: MollifiedKernel,
    conv: Option<Conv3>,
}

impl MediumSolver {
    pub fn new(medium: MediumSpec, kappa: f64, params: SolverParams) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(ScatError::InvalidConfig(format!(
                "wavenumber must be positive and finite, got {kappa}"
            )));
        }
        let grid = VolumeGrid::new(&medium, kappa, params.cells_per_axis)?;
        let kernel = MollifiedKernel::for_cell(kappa, grid.cell_size());
        let conv = if grid.support().is_empty() {
            None
        } else {
            let cell = grid.cell_size();
            Some(Conv3::new(grid.dims(), |dx, dy, dz| {
                let rho = cell * ((dx * dx + dy * dy + dz * dz) as f64).sqrt();
                kernel.eval(rho)
            }))
        };
        Ok(MediumSolver { medium, kappa, params, grid, kernel, conv })
    }

    pub fn medium(&self) -> &MediumSpec {
        &self.medium
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn grid(&self) -> &VolumeGrid {
        &self.grid
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    /// Run the Krylov solver on `b`; zero-contrast media short-circuit to
    /// the incident field with zero iterations.
    fn run(&self, b: Vec<Complex64>) -> Result<(Vec<Complex64>, usize, f64)> {
        let conv = match &self.conv {
            None => return Ok((b, 0, 0.0)),
            Some(conv) => conv,
        };
        let kappa_sq = self.kappa * self.kappa;
        let contrast = self.grid.contrast();
        let mut scratch = conv.make_scratch();
        let mut weighted = vec![Complex64::new(0.0, 0.0); b.len()];
        let mut convolved = Vec::with_capacity(b.len());
        let apply = |v: &[Complex64], out: &mut [Complex64]| {
            for ((w, x), &c) in weighted.iter_mut().zip(v).zip(contrast) {
                *w = x * c;
            }
            conv.apply(&weighted, &mut convolved, &mut scratch);
            for ((o, x), conv_x) in out.iter_mut().zip(v).zip(&convolved) {
                *o = x - kappa_sq * conv_x;
            }
        };
        let (values, report) = solve_gmres(
            apply,
            &b,
            self.params.tolerance,
            self.params.restart,
            self.params.max_iterations,
        )?;
        Ok((values, report.iterations, report.residual))
    }

    /// Total field for a unit plane wave along `theta`.
    pub fn solve_total_field(&self, theta: Vec3) -> Result<FieldSolution> {
        let b: Vec<Complex64> = (0..self.grid.len())
            .map(|idx| (Complex64::i() * self.kappa * theta.dot(self.grid.center(idx))).exp())
            .collect();
        let (values, iterations, residual) = self.run(b)?;
        Ok(FieldSolution {
            incidence: Incidence::PlaneWave(theta),
            values,
            iterations,
            residual,
        })
    }

    /// Green function of the medium for a point source at `z` (sampled on
    /// the grid; evaluate anywhere with [`MediumSolver::green_function`]).
    pub fn solve_green(&self, z: Vec3) -> Result<FieldSolution> {
        // Right-hand side: the free-space kernel averaged over each receiving
        // cell, i.e. the same mollification the interaction matrix uses.
        let inv_volume = 1.0 / self.grid.cell_volume();
        let b: Vec<Complex64> = (0..self.grid.len())
            .map(|idx| self.kernel.eval(self.grid.center(idx).dist(z)) * inv_volume)
            .collect();
        let (values, iterations, residual) = self.run(b)?;
        Ok(FieldSolution {
            incidence: Incidence::PointSource(z),
            values,
            iterations,
            residual,
        })
    }

    /// Evaluate a plane-wave total field anywhere via its volume potential.
    pub fn evaluate_total_field(&self, solution: &FieldSolution, x: Vec3) -> Complex64 {
        let theta = match solution.incidence {
            Incidence::PlaneWave(theta) => theta,
            Incidence::PointSource(_) => {
                panic!("evaluate_total_field expects a plane-wave solution")
            }
        };
        let incident = (Complex64::i() * self.kappa * theta.dot(x)).exp();
        incident + self.volume_potential(&solution.values, x)
    }

    /// `κ² Σ_j F(|x − x_j|) c_j v_j` — the scattered/secondary part of any
    /// field represented on the grid.
    fn volume_potential(&self, values: &[Complex64], x: Vec3) -> Complex64 {
        let kappa_sq = self.kappa * self.kappa;
        let mut acc = Complex64::new(0.0, 0.0);
        for &idx in self.grid.support() {
            acc += self.kernel.eval(x.dist(self.grid.center(idx)))
                * self.grid.contrast()[idx]
                * values[idx];
        }
        acc * kappa_sq
    }

    /// Far-field pattern of a plane-wave solution at observation `xhat`.
    pub fn far_field_pattern(&self, solution: &FieldSolution, xhat: Vec3) -> Complex64 {
        debug_assert!(matches!(solution.incidence, Incidence::PlaneWave(_)));
        self.far_weights_sum(&solution.values, xhat)
    }

    fn far_weights_sum(&self, values: &[Complex64], xhat: Vec3) -> Complex64 {
        let kappa_sq = self.kappa * self.kappa;
        let w = self.grid.cell_volume();
        let mut acc = Complex64::new(0.0, 0.0);
        for &idx in self.grid.support() {
            let phase = (-Complex64::i() * self.kappa * xhat.dot(self.grid.center(idx))).exp();
            acc += phase * self.grid.contrast()[idx] * values[idx];
        }
        acc * kappa_sq * w
    }

    /// Green function `G(x, z)` from a point-source solution at `z`.
    ///
    /// The free-space part is exact; the grid only carries the smooth
    /// remainder, so the value stays meaningful down to the flagged
    /// near-source region.
    pub fn green_function(&self, solution: &FieldSolution, x: Vec3) -> Result<GreenSample> {
        let z = match solution.incidence {
            Incidence::PointSource(z) => z,
            Incidence::PlaneWave(_) => {
                panic!("green_function expects a point-source solution")
            }
        };
        let dist = x.dist(z);
        if dist == 0.0 {
            return Err(ScatError::InvalidConfig(
                "Green function requested at its own source point".into(),
            ));
        }
        let phi = (Complex64::i() * self.kappa * dist).exp()
            / (4.0 * std::f64::consts::PI * dist);
        let value = phi + self.volume_potential(&solution.values, x);
        let near = dist < NEAR_SOURCE_WAVELENGTH_FRACTION * 2.0 * std::f64::consts::PI / self.kappa;
        Ok(GreenSample { value, near_singular: near })
    }

    /// Far-field pattern of the Green function at observation `xhat`.
    pub fn green_far_field(&self, solution: &FieldSolution, xhat: Vec3) -> Complex64 {
        let z = match solution.incidence {
            Incidence::PointSource(z) => z,
            Incidence::PlaneWave(_) => {
                panic!("green_far_field expects a point-source solution")
            }
        };
        let direct = (-Complex64::i() * self.kappa * xhat.dot(z)).exp();
        direct + self.far_weights_sum(&solution.values, xhat)
    }

    /// Background backscatter matrix over a direction set: one solve per
    /// incidence, far-field quadrature per observation direction.
    pub fn far_field_matrix(&self, waves: &WaveConfig) -> Result<FarFieldMatrix> {
        if (waves.kappa() - self.kappa).abs() > 1e-12 * self.kappa {
            return Err(ScatError::InvalidConfig(format!(
                "wave configuration at kappa = {} does not match solver at {}",
                waves.kappa(),
                self.kappa
            )));
        }
        let dirs = waves.directions();
        let columns: Result<Vec<Vec<Complex64>>> = dirs
            .par_iter()
            .map(|&theta_j| {
                let solution = self.solve_total_field(theta_j)?;
                Ok(dirs
                    .iter()
                    .map(|&theta_i| self.far_field_pattern(&solution, -theta_i))
                    .collect())
            })
            .collect();
        let columns = columns?;
        let n = dirs.len();
        let mut values = vec![Complex64::new(0.0, 0.0); n * n];
        for (j, col) in columns.iter().enumerate() {
            for i in 0..n {
                values[i * n + j] = col[i];
            }
        }
        Ok(FarFieldMatrix {
            kind: MatrixKind::Background,
            kappa: self.kappa,
            directions: dirs.to_vec(),
            values,
        })
    }
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
