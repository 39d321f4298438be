//! Point-probe forward synthesis.
//!
//! A probe is a small sound-soft-like ball of radius `a` whose surface
//! impedance grows like `a^{-h}`; in the asymptotic regime it scatters as a
//! point source with a real *capacitance* coupling constant. Placing one or
//! two probes inside a known background medium perturbs the backscatter
//! matrix in a structured way: each ball contributes its scattering
//! amplitude times the background total field at its center, and a close
//! pair couples through the background Green function. This module solves
//! the coupled-amplitude system exactly and synthesises the perturbed
//! far-field matrices an experiment would record, one probe site at a time.
//!
//! Background fields come from a [`FieldProvider`]: either closed-form
//! free-space fields ([`HomogeneousProvider`]) or a volume-integral solver
//! ([`SolverProvider`]). An optional model-residual injection perturbs the
//! synthesised matrices at the size of the neglected asymptotic remainder,
//! so inversion tests do not reuse the exact forward model.

use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScatError};
use crate::farfield::{FarFieldMatrix, MatrixKind};
use crate::geom::Vec3;
use crate::layout::InclusionLayout;
use crate::solver::{FieldSolution, MediumSolver};
use crate::waves::WaveConfig;

/// Condition-estimate ceiling beyond which the coupled-amplitude system is
/// reported as numerically singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Coupling constant of one probe ball of radius `a` with impedance
/// exponent `h`: the electrostatic capacitance `4πa` of the ball, rescaled
/// by the impedance magnitude `a^{-h}` relative to its large-impedance
/// limit. Negative for `0 < a < 1` and `h > 0`, and `O(a^{1-h})` as
/// `a → 0`.
pub fn capacitance(radius: f64, impedance_exponent: f64) -> f64 {
    let a = radius;
    let h = impedance_exponent;
    -4.0 * std::f64::consts::PI * a.powf(1.0 - h) * (1.0 - a.powf(h))
}

/// Outgoing free-space Green function `exp(iκ|x−z|) / (4π|x−z|)`.
pub fn free_space_green(kappa: f64, x: Vec3, z: Vec3) -> Complex64 {
    let d = x.dist(z);
    (Complex64::i() * kappa * d).exp() / (4.0 * std::f64::consts::PI * d)
}

/// Solved scattering amplitudes for the probes of one site, with the
/// assembled coupling system and its quality diagnostics.
#[derive(Debug, Clone)]
pub struct ScatteringCoefficients {
    /// One amplitude per ball, in input order.
    pub amplitudes: Vec<Complex64>,
    /// Row-major assembled system `I + C·G̃` that was solved.
    pub system: Vec<Complex64>,
    /// Infinity-norm condition estimate of the system.
    pub condition: f64,
    /// Relative residual `‖A·q − b‖∞ / ‖b‖∞` of the returned amplitudes.
    pub residual: f64,
}

/// Solve the coupled-amplitude system
///
/// ```text
/// Q_m + C_m · Σ_{j≠m} G(z_m, z_j) · Q_j = −C_m · v_m
/// ```
///
/// for the amplitudes `Q`, where `v_m` is the background total field at the
/// `m`-th ball center and `interactions` holds the background Green values
/// `G(z_m, z_j)` row-major with an ignored diagonal. Uses dense Gaussian
/// elimination with partial pivoting (the system is tiny — one or two balls
/// per site), estimates the condition number from the explicit inverse, and
/// rejects systems with condition estimate above [`CONDITION_LIMIT`] or a
/// residual incompatible with backward stability.
pub fn solve_scattering_coefficients(
    capacitances: &[f64],
    interactions: &[Complex64],
    totals: &[Complex64],
) -> Result<ScatteringCoefficients> {
    let m = capacitances.len();
    if totals.len() != m || interactions.len() != m * m {
        return Err(ScatError::InvalidConfig(format!(
            "coupling system shape mismatch: {} capacitances, {} totals, {} interactions",
            m,
            totals.len(),
            interactions.len()
        )));
    }
    if m == 0 {
        return Ok(ScatteringCoefficients {
            amplitudes: Vec::new(),
            system: Vec::new(),
            condition: 1.0,
            residual: 0.0,
        });
    }

    // Assemble A = I + C·G̃ (zero diagonal on G̃) and b = −C ∘ v.
    let mut system = vec![Complex64::new(0.0, 0.0); m * m];
    for row in 0..m {
        for col in 0..m {
            system[row * m + col] = if row == col {
                Complex64::new(1.0, 0.0)
            } else {
                interactions[row * m + col] * capacitances[row]
            };
        }
    }
    let rhs: Vec<Complex64> = totals
        .iter()
        .zip(capacitances)
        .map(|(&v, &c)| v * (-c))
        .collect();

    let lu = LuFactors::factor(&system, m)?;
    let amplitudes = lu.solve(&rhs);
    let condition = lu.condition_estimate(&system);
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(ScatError::NearSingularSystem { cond: condition });
    }

    // Backward-stability guard on the returned amplitudes.
    let mut residual_norm: f64 = 0.0;
    let mut rhs_norm: f64 = 0.0;
    for row in 0..m {
        let mut acc = -rhs[row];
        for col in 0..m {
            acc += system[row * m + col] * amplitudes[col];
        }
        residual_norm = residual_norm.max(acc.norm());
        rhs_norm = rhs_norm.max(rhs[row].norm());
    }
    let residual = if rhs_norm > 0.0 { residual_norm / rhs_norm } else { residual_norm };
    if residual > 1e-12 * (1.0 + condition) {
        return Err(ScatError::NearSingularSystem { cond: condition });
    }

    Ok(ScatteringCoefficients { amplitudes, system, condition, residual })
}

/// Dense complex LU factorisation with partial pivoting, sized for the tiny
/// per-site coupling systems.
struct LuFactors {
    m: usize,
    /// Packed L (unit diagonal, below) and U (on and above the diagonal).
    lu: Vec<Complex64>,
    pivots: Vec<usize>,
}

impl LuFactors {
    fn factor(matrix: &[Complex64], m: usize) -> Result<Self> {
        let mut lu = matrix.to_vec();
        let mut pivots = vec![0usize; m];
        for k in 0..m {
            let mut pivot_row = k;
            let mut pivot_mag = lu[k * m + k].norm();
            for r in (k + 1)..m {
                let mag = lu[r * m + k].norm();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = r;
                }
            }
            if !(pivot_mag > 0.0) || !pivot_mag.is_finite() {
                return Err(ScatError::NearSingularSystem { cond: f64::INFINITY });
            }
            pivots[k] = pivot_row;
            if pivot_row != k {
                for c in 0..m {
                    lu.swap(k * m + c, pivot_row * m + c);
                }
            }
            let pivot = lu[k * m + k];
            for r in (k + 1)..m {
                let factor = lu[r * m + k] / pivot;
                lu[r * m + k] = factor;
                for c in (k + 1)..m {
                    let sub = factor * lu[k * m + c];
                    lu[r * m + c] -= sub;
                }
            }
        }
        Ok(LuFactors { m, lu, pivots })
    }

    fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let m = self.m;
        let mut x = b.to_vec();
        for k in 0..m {
            x.swap(k, self.pivots[k]);
            for r in (k + 1)..m {
                let sub = self.lu[r * m + k] * x[k];
                x[r] -= sub;
            }
        }
        for k in (0..m).rev() {
            for c in (k + 1)..m {
                let sub = self.lu[k * m + c] * x[c];
                x[k] -= sub;
            }
            x[k] /= self.lu[k * m + k];
        }
        x
    }

    /// `‖A‖∞ · ‖A⁻¹‖∞` with the inverse formed column by column — exact
    /// enough for the 1×1 and 2×2 systems this crate solves.
    fn condition_estimate(&self, matrix: &[Complex64]) -> f64 {
        let m = self.m;
        let row_sum = |rows: &dyn Fn(usize, usize) -> Complex64| -> f64 {
            (0..m)
                .map(|r| (0..m).map(|c| rows(r, c).norm()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let norm_a = row_sum(&|r, c| matrix[r * m + c]);
        let mut inverse = vec![Complex64::new(0.0, 0.0); m * m];
        for col in 0..m {
            let mut e = vec![Complex64::new(0.0, 0.0); m];
            e[col] = Complex64::new(1.0, 0.0);
            let x = self.solve(&e);
            for row in 0..m {
                inverse[row * m + col] = x[row];
            }
        }
        let norm_inv = row_sum(&|r, c| inverse[r * m + c]);
        norm_a * norm_inv
    }
}

/// Far-field pattern of the background plus the probes of one site:
/// the background value plus `Σ_m v_m · Q_m`, where `v_m` is the background
/// total field at the `m`-th center for the *reversed observation*
/// direction and `Q_m` the solved amplitude. The sum runs in index order so
/// synthesis is bit-reproducible.
pub fn perturbed_far_field(
    background: Complex64,
    totals_at_reversed: &[Complex64],
    amplitudes: &[Complex64],
) -> Complex64 {
    debug_assert_eq!(totals_at_reversed.len(), amplitudes.len());
    let mut acc = background;
    for (&v, &q) in totals_at_reversed.iter().zip(amplitudes) {
        acc += v * q;
    }
    acc
}

/// Closed-form response matrix of an equal-capacitance pair: the inverse of
/// the pair system written in impedance form (diagonal `−1/C`, off-diagonal
/// `−G`), i.e.
///
/// ```text
/// R = −C · (I + C·G̃)⁻¹ = 1/(1 − C²G²) · [ −C    C²G ]
///                                        [  C²G  −C  ]
/// ```
///
/// The perturbed pair matrix factors as `W − V = 𝐕ᵀ·R·𝐕` with `𝐕` the 2×N
/// matrix of background totals at the two centers, which gives an
/// independent check on the per-incidence amplitude solves.
pub fn pair_response(capacitance: f64, interaction: Complex64) -> Result<[[Complex64; 2]; 2]> {
    let c = capacitance;
    let cg = interaction * c;
    let den = Complex64::new(1.0, 0.0) - cg * cg;
    let scale = 1.0 + cg.norm() * cg.norm();
    if !(den.norm() > 1e-14 * scale) {
        return Err(ScatError::NearSingularSystem { cond: scale / den.norm() });
    }
    let diag = Complex64::new(-c, 0.0) / den;
    let off = cg * c / den;
    Ok([[diag, off], [off, diag]])
}

// ---------------------------------------------------------------------------
// background field providers
// ---------------------------------------------------------------------------

/// A background Green-function value together with its provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub value: Complex64,
    /// True when the value came from the phase-corrected point surrogate
    /// `exp(iκ·n(mid)·d) / (4πd)` instead of a point-source solve.
    pub surrogate: bool,
}

/// Source of background fields for synthesis: far-field matrix, interior
/// total fields, interior Green values, and the index itself.
pub trait FieldProvider: Sync {
    fn kappa(&self) -> f64;

    /// Incidence directions shared by every synthesised matrix.
    fn directions(&self) -> &[Vec3];

    /// Backscatter matrix of the unperturbed background.
    fn background_far_field(&self) -> Result<FarFieldMatrix>;

    /// Background total field at `z`, one value per incidence direction.
    fn total_field_vector(&self, z: Vec3) -> Result<Vec<Complex64>>;

    /// Background Green function between two interior points.
    fn interaction(&self, source: Vec3, receiver: Vec3) -> Result<Interaction>;

    /// Background refractive index at `x`.
    fn index_at(&self, x: Vec3) -> Result<f64>;
}

/// Free-space background (`n ≡ 1`): zero background far field, plane-wave
/// total fields, and the outgoing free-space kernel as Green function. All
/// values are closed-form, which makes this provider the reference for
/// synthesis identities and convergence studies free of discretisation
/// error.
#[derive(Debug, Clone)]
pub struct HomogeneousProvider {
    waves: WaveConfig,
}

impl HomogeneousProvider {
    pub fn new(waves: WaveConfig) -> Self {
        HomogeneousProvider { waves }
    }
}

impl FieldProvider for HomogeneousProvider {
    fn kappa(&self) -> f64 {
        self.waves.kappa()
    }

    fn directions(&self) -> &[Vec3] {
        self.waves.directions()
    }

    fn background_far_field(&self) -> Result<FarFieldMatrix> {
        Ok(FarFieldMatrix::zeros(
            MatrixKind::Background,
            self.waves.kappa(),
            self.waves.directions().to_vec(),
        ))
    }

    fn total_field_vector(&self, z: Vec3) -> Result<Vec<Complex64>> {
        let kappa = self.waves.kappa();
        Ok(self
            .waves
            .directions()
            .iter()
            .map(|theta| (Complex64::i() * kappa * theta.dot(z)).exp())
            .collect())
    }

    fn interaction(&self, source: Vec3, receiver: Vec3) -> Result<Interaction> {
        if source.dist(receiver) == 0.0 {
            return Err(ScatError::InvalidConfig(
                "interaction requires two distinct points".into(),
            ));
        }
        Ok(Interaction {
            value: free_space_green(self.waves.kappa(), receiver, source),
            surrogate: false,
        })
    }

    fn index_at(&self, _x: Vec3) -> Result<f64> {
        Ok(1.0)
    }
}

/// How a [`SolverProvider`] produces interior Green values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GreenMode {
    /// Solve a point-source problem per interaction, falling back to the
    /// phase-corrected surrogate when the two points are closer than
    /// `min_cell_multiple` grid cells (below that the discretised kernel
    /// cannot follow the `1/d` growth).
    Numerical { min_cell_multiple: f64 },
    /// Always use the phase-corrected surrogate
    /// `exp(iκ·n(mid)·d) / (4πd)`.
    Surrogate,
}

impl Default for GreenMode {
    fn default() -> Self {
        GreenMode::Numerical { min_cell_multiple: 4.0 }
    }
}

/// Background fields from a volume-integral [`MediumSolver`]. One total
/// field is solved per incidence direction at construction (in parallel)
/// and reused by every probe site; Green values are solved on demand per
/// pair, or replaced by the phase-corrected surrogate for separations the
/// grid cannot resolve.
pub struct SolverProvider {
    solver: MediumSolver,
    waves: WaveConfig,
    fields: Vec<FieldSolution>,
    green_mode: GreenMode,
    surrogate_uses: AtomicUsize,
}

impl SolverProvider {
    pub fn new(solver: MediumSolver, waves: WaveConfig, green_mode: GreenMode) -> Result<Self> {
        if (waves.kappa() - solver.kappa()).abs() > 1e-12 * solver.kappa() {
            return Err(ScatError::InvalidConfig(format!(
                "wave configuration at kappa = {} does not match solver at {}",
                waves.kappa(),
                solver.kappa()
            )));
        }
        if let GreenMode::Numerical { min_cell_multiple } = green_mode {
            if !(min_cell_multiple >= 0.0) {
                return Err(ScatError::InvalidConfig(format!(
                    "surrogate fallback multiple must be non-negative, got {min_cell_multiple}"
                )));
            }
        }
        let fields: Result<Vec<FieldSolution>> = waves
            .directions()
            .par_iter()
            .map(|&theta| solver.solve_total_field(theta))
            .collect();
        Ok(SolverProvider {
            solver,
            waves,
            fields: fields?,
            green_mode,
            surrogate_uses: AtomicUsize::new(0),
        })
    }

    pub fn solver(&self) -> &MediumSolver {
        &self.solver
    }

    /// How many interactions fell back to the phase-corrected surrogate.
    pub fn surrogate_uses(&self) -> usize {
        self.surrogate_uses.load(Ordering::Relaxed)
    }

    fn surrogate_value(&self, source: Vec3, receiver: Vec3, dist: f64) -> Result<Complex64> {
        let mid = (source + receiver) * 0.5;
        let n_mid = self.solver.medium().evaluate_index(mid)?;
        self.surrogate_uses.fetch_add(1, Ordering::Relaxed);
        Ok((Complex64::i() * self.waves.kappa() * n_mid * dist).exp()
            / (4.0 * std::f64::consts::PI * dist))
    }
}

impl FieldProvider for SolverProvider {
    fn kappa(&self) -> f64 {
        self.waves.kappa()
    }

    fn directions(&self) -> &[Vec3] {
        self.waves.directions()
    }

    fn background_far_field(&self) -> Result<FarFieldMatrix> {
        let dirs = self.waves.directions();
        let n = dirs.len();
        let mut matrix = FarFieldMatrix::zeros(
            MatrixKind::Background,
            self.waves.kappa(),
            dirs.to_vec(),
        );
        for j in 0..n {
            for i in 0..n {
                matrix.set(i, j, self.solver.far_field_pattern(&self.fields[j], -dirs[i]));
            }
        }
        Ok(matrix)
    }

    fn total_field_vector(&self, z: Vec3) -> Result<Vec<Complex64>> {
        Ok(self
            .fields
            .iter()
            .map(|field| self.solver.evaluate_total_field(field, z))
            .collect())
    }

    fn interaction(&self, source: Vec3, receiver: Vec3) -> Result<Interaction> {
        let dist = source.dist(receiver);
        if dist == 0.0 {
            return Err(ScatError::InvalidConfig(
                "interaction requires two distinct points".into(),
            ));
        }
        let use_surrogate = match self.green_mode {
            GreenMode::Surrogate => true,
            GreenMode::Numerical { min_cell_multiple } => {
                dist < min_cell_multiple * self.solver.grid().cell_size()
            }
        };
        if use_surrogate {
            return Ok(Interaction {
                value: self.surrogate_value(source, receiver, dist)?,
                surrogate: true,
            });
        }
        let solution = self.solver.solve_green(source)?;
        let sample = self.solver.green_function(&solution, receiver)?;
        Ok(Interaction { value: sample.value, surrogate: false })
    }

    fn index_at(&self, x: Vec3) -> Result<f64> {
        self.solver.medium().evaluate_index(x)
    }
}

// ---------------------------------------------------------------------------
// measurement synthesis
// ---------------------------------------------------------------------------

/// Backscatter matrix recorded with a single probe ball present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleMeasurement {
    pub center: Vec3,
    pub far_field: FarFieldMatrix,
}

/// Backscatter matrix recorded with a probe pair present, together with the
/// background Green value that coupled the pair during synthesis (kept as
/// the reference when scoring Green-function reconstructions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMeasurement {
    pub centers: [Vec3; 2],
    pub far_field: FarFieldMatrix,
    pub interaction: Complex64,
    pub interaction_surrogate: bool,
}

/// All measurements taken at one probe site: one single-ball experiment per
/// ball, plus the pair experiment when the site holds two balls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteMeasurements {
    pub singles: Vec<SingleMeasurement>,
    pub pair: Option<PairMeasurement>,
}

/// The complete synthetic data set for one layout: the shared background
/// matrix and the per-site perturbed matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBundle {
    pub kappa: f64,
    pub radius: f64,
    pub impedance_exponent: f64,
    pub closeness_exponent: f64,
    /// Probe coupling constant shared by every ball of the layout.
    pub capacitance: f64,
    pub background: FarFieldMatrix,
    pub sites: Vec<SiteMeasurements>,
}

/// Synthesise the measurement bundle for a probe layout.
///
/// Single-ball experiments always use the *nominal* centers from `layout`.
/// When `realized_pairs` is given (same site list, pair sites in the same
/// places), pair experiments are synthesised at its — possibly perturbed —
/// centers instead, reproducing a deployment that cannot place the pair
/// exactly where the single-ball experiments ran. Recorded pair centers are
/// the realized ones.
pub fn synthesize_measurements<P: FieldProvider + ?Sized>(
    provider: &P,
    layout: &InclusionLayout,
    realized_pairs: Option<&InclusionLayout>,
) -> Result<MeasurementBundle> {
    let realized = realized_pairs.unwrap_or(layout);
    if realized.sites().len() != layout.sites().len() {
        return Err(ScatError::InvalidConfig(format!(
            "realized layout has {} sites, nominal layout has {}",
            realized.sites().len(),
            layout.sites().len()
        )));
    }
    let background = provider.background_far_field()?;
    let cap = capacitance(layout.radius(), layout.impedance_exponent());

    let mut sites = Vec::with_capacity(layout.sites().len());
    for (idx, (site, realized_site)) in
        layout.sites().iter().zip(realized.sites()).enumerate()
    {
        if site.second.is_some() != realized_site.second.is_some() {
            return Err(ScatError::InvalidConfig(format!(
                "site {idx}: nominal and realized layouts disagree on pair/single"
            )));
        }
        let singles = site
            .centers()
            .map(|z| single_measurement(provider, &background, cap, z))
            .collect::<Result<Vec<_>>>()?;
        let pair = realized_site
            .second
            .map(|second| pair_measurement(provider, &background, cap, realized_site.first, second))
            .transpose()?;
        sites.push(SiteMeasurements { singles, pair });
    }

    Ok(MeasurementBundle {
        kappa: provider.kappa(),
        radius: layout.radius(),
        impedance_exponent: layout.impedance_exponent(),
        closeness_exponent: layout.closeness_exponent(),
        capacitance: cap,
        background,
        sites,
    })
}

fn single_measurement<P: FieldProvider + ?Sized>(
    provider: &P,
    background: &FarFieldMatrix,
    cap: f64,
    z: Vec3,
) -> Result<SingleMeasurement> {
    let totals = provider.total_field_vector(z)?;
    let n = background.len();
    let mut far_field = FarFieldMatrix::zeros(
        MatrixKind::SingleInclusion,
        background.kappa,
        background.directions.clone(),
    );
    let zero = [Complex64::new(0.0, 0.0)];
    for j in 0..n {
        let coeff = solve_scattering_coefficients(&[cap], &zero, &[totals[j]])?;
        for i in 0..n {
            far_field.set(
                i,
                j,
                perturbed_far_field(background.get(i, j), &[totals[i]], &coeff.amplitudes),
            );
        }
    }
    Ok(SingleMeasurement { center: z, far_field })
}

fn pair_measurement<P: FieldProvider + ?Sized>(
    provider: &P,
    background: &FarFieldMatrix,
    cap: f64,
    first: Vec3,
    second: Vec3,
) -> Result<PairMeasurement> {
    let totals_first = provider.total_field_vector(first)?;
    let totals_second = provider.total_field_vector(second)?;
    let green = provider.interaction(first, second)?;
    let zero = Complex64::new(0.0, 0.0);
    let interactions = [zero, green.value, green.value, zero];
    let n = background.len();
    let mut far_field = FarFieldMatrix::zeros(
        MatrixKind::DoubleInclusion,
        background.kappa,
        background.directions.clone(),
    );
    for j in 0..n {
        let coeff = solve_scattering_coefficients(
            &[cap, cap],
            &interactions,
            &[totals_first[j], totals_second[j]],
        )?;
        for i in 0..n {
            far_field.set(
                i,
                j,
                perturbed_far_field(
                    background.get(i, j),
                    &[totals_first[i], totals_second[i]],
                    &coeff.amplitudes,
                ),
            );
        }
    }
    Ok(PairMeasurement {
        centers: [first, second],
        far_field,
        interaction: green.value,
        interaction_surrogate: green.surrogate,
    })
}

// ---------------------------------------------------------------------------
// model-residual injection
// ---------------------------------------------------------------------------

/// Draw from the closed disk of the given radius, uniformly in area.
pub(crate) fn uniform_disk(rng: &mut impl Rng, radius: f64) -> Complex64 {
    let r = radius * rng.gen::<f64>().sqrt();
    let phi = std::f64::consts::TAU * rng.gen::<f64>();
    Complex64::from_polar(r, phi)
}

/// SplitMix64 step, used to derive independent per-matrix seeds from one
/// experiment seed in a documented order.
pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Perturb every entry of a far-field matrix by an independent draw from
/// the complex disk of radius `magnitude`, mimicking the asymptotic
/// remainder the point-probe model neglects. A zero magnitude returns a
/// bit-identical copy without touching the generator; the draw order is
/// row-major, so results are reproducible for a given seed.
pub fn inject_model_residual(
    matrix: &FarFieldMatrix,
    magnitude: f64,
    seed: u64,
) -> FarFieldMatrix {
    assert!(
        magnitude >= 0.0 && magnitude.is_finite(),
        "residual magnitude must be finite and non-negative, got {magnitude}"
    );
    let mut out = matrix.clone();
    if magnitude == 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for value in &mut out.values {
        *value += uniform_disk(&mut rng, magnitude);
    }
    out
}

/// Apply [`inject_model_residual`] to every perturbed matrix of a bundle at
/// the natural remainder size `coefficient · a^{2−h}`. The background
/// matrix is left untouched: the remainder models the error of the probe
/// expansion, which only affects measurements taken with probes present.
/// Per-matrix seeds derive from `seed` in site order, singles before pair,
/// so the draw is independent of how many directions each matrix has.
pub fn inject_bundle_residual(
    bundle: &MeasurementBundle,
    coefficient: f64,
    seed: u64,
) -> MeasurementBundle {
    let magnitude =
        coefficient * bundle.radius.powf(2.0 - bundle.impedance_exponent);
    let mut out = bundle.clone();
    let mut state = seed;
    for site in &mut out.sites {
        for single in &mut site.singles {
            let matrix_seed = splitmix64(&mut state);
            single.far_field = inject_model_residual(&single.far_field, magnitude, matrix_seed);
        }
        if let Some(pair) = &mut site.pair {
            let matrix_seed = splitmix64(&mut state);
            pair.far_field = inject_model_residual(&pair.far_field, magnitude, matrix_seed);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{InclusionLayout, LayoutScaling, ProbeSite};
    use crate::medium::{MediumSpec, SupportBox};
    use crate::solver::SolverParams;

    fn assert_close(got: Complex64, want: Complex64, tol: f64, what: &str) {
        assert!(
            (got - want).norm() <= tol,
            "{what}: got {got}, want {want} (|Δ| = {:.3e}, tol {tol:.1e})",
            (got - want).norm()
        );
    }

    #[test]
    fn test_capacitance_reference_values() {
        // Frozen against high-precision evaluation of −4π a^{1−h}(1−a^h).
        let c = capacitance(0.01, 0.25);
        assert!(
            (c - (-0.27171982448825227)).abs() < 1e-14,
            "capacitance(0.01, 0.25) = {c}"
        );
        let huge = capacitance(0.5, 50.0);
        assert!(
            (huge - (-7074237752028434.0)).abs() < 1e-12 * huge.abs(),
            "capacitance(0.5, 50) = {huge}"
        );
        // O(a^{1−h}) smallness and fixed sign on 0 < a < 1.
        assert!(capacitance(1e-10, 0.25).abs() < 1e-6);
        for &a in &[1e-6, 1e-3, 0.1, 0.9] {
            assert!(capacitance(a, 0.25) < 0.0, "capacitance({a}) must be negative");
        }
    }

    #[test]
    fn test_free_space_green_reference_value() {
        // exp(0.1i)/(0.4π), frozen.
        let g = free_space_green(1.0, Vec3::ZERO, Vec3::new(0.1, 0.0, 0.0));
        assert_close(
            g,
            Complex64::new(0.7917991565051152, 0.07944490872547706),
            1e-15,
            "free-space kernel at d = 0.1",
        );
    }

    #[test]
    fn test_single_ball_amplitude_is_exact() {
        // One ball: Q = −C·v with no coupling, bit-exact through the solver.
        let v = Complex64::new(0.7, 0.2);
        let coeff = solve_scattering_coefficients(
            &[-0.3],
            &[Complex64::new(0.0, 0.0)],
            &[v],
        )
        .unwrap();
        assert_eq!(coeff.amplitudes.len(), 1);
        assert_eq!(coeff.amplitudes[0], v * 0.3);
        assert_eq!(coeff.condition, 1.0);
        assert_eq!(coeff.residual, 0.0);
    }

    #[test]
    fn test_pair_amplitudes_match_direct_elimination() {
        // 2×2 system solved by hand (Cramer) for C = −0.2707, unit totals
        // and the coupling value of two balls 0.1 apart at κ = 1; both
        // amplitudes frozen.
        let g = free_space_green(1.0, Vec3::ZERO, Vec3::new(0.1, 0.0, 0.0));
        let c = -0.2707;
        let coeff = solve_scattering_coefficients(
            &[c, c],
            &[Complex64::new(0.0, 0.0), g, g, Complex64::new(0.0, 0.0)],
            &[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)],
        )
        .unwrap();
        let want = Complex64::new(0.3442931228250806, 0.009424277139215252);
        assert_close(coeff.amplitudes[0], want, 1e-13, "first amplitude");
        assert_close(coeff.amplitudes[1], want, 1e-13, "second amplitude");
        assert!(coeff.residual <= 1e-13, "residual = {:.3e}", coeff.residual);
        assert!(coeff.condition < 10.0, "condition = {:.3e}", coeff.condition);
    }

    #[test]
    fn test_decoupled_pair_reduces_to_singles() {
        // Zero interaction: each amplitude is exactly −C·v_m.
        let v1 = Complex64::new(0.3, -0.4);
        let v2 = Complex64::new(-1.1, 0.25);
        let zero = Complex64::new(0.0, 0.0);
        let coeff =
            solve_scattering_coefficients(&[-0.5, -0.5], &[zero, zero, zero, zero], &[v1, v2])
                .unwrap();
        assert_eq!(coeff.amplitudes[0], v1 * 0.5);
        assert_eq!(coeff.amplitudes[1], v2 * 0.5);
        // The closed-form pair response degenerates to the uncoupled one.
        let response = pair_response(-0.5, zero).unwrap();
        assert_eq!(response[0][0], Complex64::new(0.5, 0.0));
        assert_eq!(response[0][1], zero);
        assert_eq!(response[1][0], zero);
        assert_eq!(response[1][1], Complex64::new(0.5, 0.0));
    }

    #[test]
    fn test_pair_response_inverts_impedance_form() {
        // R must invert the matrix with −1/C diagonal and −G off-diagonal.
        let c = -0.35;
        let g = Complex64::new(0.3, 0.1);
        let r = pair_response(c, g).unwrap();
        let b = [
            [Complex64::new(-1.0 / c, 0.0), -g],
            [-g, Complex64::new(-1.0 / c, 0.0)],
        ];
        for i in 0..2 {
            for j in 0..2 {
                let mut prod = Complex64::new(0.0, 0.0);
                for k in 0..2 {
                    prod += b[i][k] * r[k][j];
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert_close(
                    prod,
                    Complex64::new(want, 0.0),
                    1e-14,
                    &format!("(B·R)[{i}][{j}]"),
                );
            }
        }
    }

    #[test]
    fn test_singular_systems_are_rejected() {
        // C·G = ±1 makes the pair system exactly singular.
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let err = solve_scattering_coefficients(&[1.0, 1.0], &[zero, one, one, zero], &[one, one])
            .unwrap_err();
        assert!(matches!(err, ScatError::NearSingularSystem { .. }), "{err}");
        let err = pair_response(1.0, one).unwrap_err();
        assert!(matches!(err, ScatError::NearSingularSystem { .. }), "{err}");
        // Nearly singular: condition estimate beyond the ceiling.
        let near = Complex64::new(1.0 - 1e-14, 0.0);
        let err =
            solve_scattering_coefficients(&[1.0, 1.0], &[zero, near, near, zero], &[one, one])
                .unwrap_err();
        assert!(matches!(err, ScatError::NearSingularSystem { .. }), "{err}");
    }

    #[test]
    fn test_shape_mismatch_is_rejected() {
        let zero = Complex64::new(0.0, 0.0);
        let err = solve_scattering_coefficients(&[1.0, 1.0], &[zero], &[zero, zero]).unwrap_err();
        assert!(matches!(err, ScatError::InvalidConfig(_)));
    }

    #[test]
    fn test_perturbed_far_field_is_affine() {
        let background = Complex64::new(2.0, 1.0);
        let totals = [Complex64::new(3.0, 0.0), Complex64::new(0.0, -1.0)];
        let amplitudes = [Complex64::new(1.0, 1.0), Complex64::new(2.0, 0.0)];
        let got = perturbed_far_field(background, &totals, &amplitudes);
        assert_eq!(got, Complex64::new(5.0, 2.0));
        assert_eq!(perturbed_far_field(background, &[], &[]), background);
    }

    #[test]
    fn test_homogeneous_provider_closed_forms() {
        let waves = WaveConfig::fibonacci(1.3, 5).unwrap();
        let provider = HomogeneousProvider::new(waves.clone());
        let background = provider.background_far_field().unwrap();
        assert_eq!(background.max_abs(), 0.0);
        assert_eq!(background.kind, MatrixKind::Background);

        let z = Vec3::new(0.2, -0.1, 0.4);
        let totals = provider.total_field_vector(z).unwrap();
        for (theta, &value) in waves.directions().iter().zip(&totals) {
            let want = (Complex64::i() * 1.3 * theta.dot(z)).exp();
            assert_close(value, want, 1e-15, "plane-wave total field");
        }

        let z2 = Vec3::new(-0.3, 0.0, 0.1);
        let green = provider.interaction(z, z2).unwrap();
        assert!(!green.surrogate);
        assert_close(
            green.value,
            free_space_green(1.3, z2, z),
            1e-16,
            "free-space interaction",
        );
        assert_eq!(provider.index_at(Vec3::new(9.0, 9.0, 9.0)).unwrap(), 1.0);
        assert!(provider.interaction(z, z).is_err());
    }

    fn free_space_pair_layout(a: f64, h: f64, t: f64) -> InclusionLayout {
        let d = a.powf(t);
        let site = ProbeSite::pair(
            Vec3::new(-0.5 * d, 0.05, -0.02),
            Vec3::new(0.5 * d, 0.05, -0.02),
        );
        InclusionLayout::new(
            vec![site],
            LayoutScaling::new(a, h, t),
            &SupportBox::cube(Vec3::ZERO, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn test_synthesis_identities_in_free_space() {
        // Singles must be exactly rank-one (U − V = −C·v vᵀ) and the pair
        // must factor through the closed-form response (W − V = 𝐕ᵀ·R·𝐕),
        // which checks the per-incidence solves against an independent path.
        let waves = WaveConfig::fibonacci(1.0, 6).unwrap();
        let provider = HomogeneousProvider::new(waves);
        let layout = free_space_pair_layout(0.01, 0.25, 0.25);
        let bundle = synthesize_measurements(&provider, &layout, None).unwrap();

        assert_eq!(bundle.sites.len(), 1);
        let site = &bundle.sites[0];
        assert_eq!(site.singles.len(), 2);
        let cap = bundle.capacitance;
        assert!((cap - capacitance(0.01, 0.25)).abs() < 1e-15);

        let n = bundle.background.len();
        for single in &site.singles {
            assert_eq!(single.far_field.kind, MatrixKind::SingleInclusion);
            let totals = provider.total_field_vector(single.center).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let want = totals[i] * totals[j] * (-cap);
                    assert_close(
                        single.far_field.get(i, j) - bundle.background.get(i, j),
                        want,
                        1e-14,
                        "rank-one single-ball difference",
                    );
                }
            }
        }

        let pair = site.pair.as_ref().unwrap();
        assert_eq!(pair.far_field.kind, MatrixKind::DoubleInclusion);
        assert!(!pair.interaction_surrogate);
        let g = provider.interaction(pair.centers[0], pair.centers[1]).unwrap();
        assert_eq!(pair.interaction, g.value);

        let response = pair_response(cap, pair.interaction).unwrap();
        let v1 = provider.total_field_vector(pair.centers[0]).unwrap();
        let v2 = provider.total_field_vector(pair.centers[1]).unwrap();
        let scale = pair.far_field.max_abs();
        for i in 0..n {
            for j in 0..n {
                let rows = [v1[i], v2[i]];
                let cols = [v1[j], v2[j]];
                let mut want = Complex64::new(0.0, 0.0);
                for l in 0..2 {
                    for lp in 0..2 {
                        want += rows[l] * response[l][lp] * cols[lp];
                    }
                }
                assert_close(
                    pair.far_field.get(i, j) - bundle.background.get(i, j),
                    want,
                    1e-12 * scale.max(1.0),
                    "pair response factorisation",
                );
                // The pair matrix inherits the symmetry of the response.
                assert_close(
                    pair.far_field.get(i, j),
                    pair.far_field.get(j, i),
                    1e-13 * scale.max(1.0),
                    "pair matrix symmetry",
                );
            }
        }
    }

    #[test]
    fn test_synthesize_empty_layout_keeps_background() {
        let waves = WaveConfig::fibonacci(1.0, 4).unwrap();
        let provider = HomogeneousProvider::new(waves);
        let layout = InclusionLayout::new(
            Vec::new(),
            LayoutScaling::new(0.01, 0.25, 0.25),
            &SupportBox::cube(Vec3::ZERO, 1.0).unwrap(),
        )
        .unwrap();
        let bundle = synthesize_measurements(&provider, &layout, None).unwrap();
        assert!(bundle.sites.is_empty());
        assert_eq!(bundle.background.kind, MatrixKind::Background);
        assert_eq!(bundle.background.len(), 4);
    }

    #[test]
    fn test_realized_layout_moves_only_the_pair() {
        let waves = WaveConfig::fibonacci(1.0, 4).unwrap();
        let provider = HomogeneousProvider::new(waves);
        let layout = free_space_pair_layout(0.01, 0.25, 0.25);
        let support = SupportBox::cube(Vec3::ZERO, 1.0).unwrap();

        let offset = Vec3::new(0.003, -0.001, 0.002);
        let moved: Vec<ProbeSite> = layout
            .sites()
            .iter()
            .map(|s| ProbeSite::pair(s.first + offset, s.second.unwrap() + offset))
            .collect();
        let realized = InclusionLayout::new(moved, *layout.scaling(), &support).unwrap();

        let bundle = synthesize_measurements(&provider, &layout, Some(&realized)).unwrap();
        let site = &bundle.sites[0];
        // Singles stay at nominal centers; the pair records realized ones.
        assert_eq!(site.singles[0].center, layout.sites()[0].first);
        assert_eq!(site.singles[1].center, layout.sites()[0].second.unwrap());
        let pair = site.pair.as_ref().unwrap();
        assert_eq!(pair.centers[0], realized.sites()[0].first);
        assert_eq!(pair.centers[1], realized.sites()[0].second.unwrap());

        // A realized layout with a different shape is rejected.
        let single_site = InclusionLayout::new(
            vec![ProbeSite::single(Vec3::new(0.1, 0.0, 0.0))],
            *layout.scaling(),
            &support,
        )
        .unwrap();
        let err = synthesize_measurements(&provider, &layout, Some(&single_site)).unwrap_err();
        assert!(matches!(err, ScatError::InvalidConfig(_)));
    }

    #[test]
    fn test_inject_model_residual_bounds_and_determinism() {
        let waves = WaveConfig::fibonacci(1.0, 4).unwrap();
        let mut matrix = FarFieldMatrix::zeros(
            MatrixKind::SingleInclusion,
            1.0,
            waves.directions().to_vec(),
        );
        for (idx, value) in matrix.values.iter_mut().enumerate() {
            *value = Complex64::new(idx as f64, -(idx as f64));
        }

        // Zero magnitude: bit-identical copy.
        let same = inject_model_residual(&matrix, 0.0, 7);
        assert_eq!(same.values, matrix.values);

        let magnitude = 1e-3;
        let noisy = inject_model_residual(&matrix, magnitude, 7);
        let mut moved = 0usize;
        for (clean, dirty) in matrix.values.iter().zip(&noisy.values) {
            let delta = (dirty - clean).norm();
            assert!(delta <= magnitude * (1.0 + 1e-12), "|Δ| = {delta:.3e}");
            if delta > 0.0 {
                moved += 1;
            }
        }
        assert!(moved > matrix.values.len() / 2, "residual barely moved anything");

        // Same seed reproduces; another seed differs.
        let again = inject_model_residual(&matrix, magnitude, 7);
        assert_eq!(again.values, noisy.values);
        let other = inject_model_residual(&matrix, magnitude, 8);
        assert_ne!(other.values, noisy.values);
    }

    #[test]
    fn test_inject_bundle_residual_scales_with_radius() {
        let waves = WaveConfig::fibonacci(1.0, 4).unwrap();
        let provider = HomogeneousProvider::new(waves);
        let layout = free_space_pair_layout(0.01, 0.25, 0.25);
        let bundle = synthesize_measurements(&provider, &layout, None).unwrap();
        let noisy = inject_bundle_residual(&bundle, 1.0, 42);

        // Background untouched, bit for bit.
        assert_eq!(noisy.background.values, bundle.background.values);

        let magnitude = 0.01_f64.powf(2.0 - 0.25);
        let site = &bundle.sites[0];
        let noisy_site = &noisy.sites[0];
        for (clean, dirty) in site.singles.iter().zip(&noisy_site.singles) {
            let mut max_delta: f64 = 0.0;
            for (c, d) in clean.far_field.values.iter().zip(&dirty.far_field.values) {
                max_delta = max_delta.max((d - c).norm());
            }
            assert!(max_delta > 0.0 && max_delta <= magnitude * (1.0 + 1e-12));
        }
        let (clean, dirty) = (
            site.pair.as_ref().unwrap(),
            noisy_site.pair.as_ref().unwrap(),
        );
        let mut max_delta: f64 = 0.0;
        for (c, d) in clean.far_field.values.iter().zip(&dirty.far_field.values) {
            max_delta = max_delta.max((d - c).norm());
        }
        assert!(max_delta > 0.0 && max_delta <= magnitude * (1.0 + 1e-12));

        // Zero coefficient reproduces the bundle exactly.
        let same = inject_bundle_residual(&bundle, 0.0, 42);
        assert_eq!(same, bundle);
    }

    #[test]
    fn test_solver_provider_matches_free_space_on_trivial_medium() {
        // Zero contrast: the volume solver must reproduce the closed forms,
        // down to the empty background matrix and the exact kernel on both
        // the numerical and the surrogate interaction paths.
        let support = SupportBox::cube(Vec3::ZERO, 1.0).unwrap();
        let medium = MediumSpec::homogeneous(support);
        let solver = MediumSolver::new(medium, 1.1, SolverParams::with_cells(8)).unwrap();
        let waves = WaveConfig::fibonacci(1.1, 4).unwrap();
        let provider = SolverProvider::new(solver, waves.clone(), GreenMode::default()).unwrap();
        let reference = HomogeneousProvider::new(waves);

        assert_eq!(provider.background_far_field().unwrap().max_abs(), 0.0);

        let z = Vec3::new(0.3, 0.2, -0.1);
        let got = provider.total_field_vector(z).unwrap();
        let want = reference.total_field_vector(z).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert_close(*g, *w, 1e-14, "trivial-medium total field");
        }

        // Far apart (> 4 cells of 0.25): numerical point-source path.
        let z1 = Vec3::new(-0.6, 0.0, 0.0);
        let z2 = Vec3::new(0.6, 0.0, 0.0);
        let numerical = provider.interaction(z1, z2).unwrap();
        assert!(!numerical.surrogate);
        assert_close(
            numerical.value,
            free_space_green(1.1, z2, z1),
            1e-13,
            "numerical interaction in free space",
        );
        assert_eq!(provider.surrogate_uses(), 0);

        // Close pair: falls back to the surrogate, which is also exact here.
        let close = provider
            .interaction(Vec3::new(-0.05, 0.0, 0.0), Vec3::new(0.05, 0.0, 0.0))
            .unwrap();
        assert!(close.surrogate);
        assert_close(
            close.value,
            free_space_green(1.1, Vec3::new(0.05, 0.0, 0.0), Vec3::new(-0.05, 0.0, 0.0)),
            1e-15,
            "surrogate interaction in free space",
        );
        assert_eq!(provider.surrogate_uses(), 1);
        assert_eq!(provider.index_at(Vec3::new(0.2, 0.2, 0.2)).unwrap(), 1.0);
    }

    #[test]
    fn test_splitmix_and_disk_sampling() {
        let mut state = 1u64;
        let first = splitmix64(&mut state);
        let second = splitmix64(&mut state);
        assert_ne!(first, second);
        let mut replay = 1u64;
        assert_eq!(splitmix64(&mut replay), first);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let z = uniform_disk(&mut rng, 2.5);
            assert!(z.norm() <= 2.5 * (1.0 + 1e-12));
        }
    }
}
