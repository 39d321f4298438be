//! Error type shared by every module of the crate.
//!
//! Numerical routines distinguish between *configuration* problems (bad
//! geometry, invalid exponents, points outside a sampled grid) and *numerical*
//! failures (iteration budgets exhausted, singular probe systems). Callers
//! that drive batch reconstructions usually treat per-pair numerical failures
//! as data points rather than fatal errors; configuration problems always
//! abort.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, ScatError>;

/// All failure modes surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum ScatError {
    /// The iterative solver exhausted its budget before reaching the
    /// requested relative residual.
    #[error(
        "linear solver stalled at relative residual {residual:.3e} \
         after {iterations} iterations (budget {budget}, target {target:.1e})"
    )]
    SolverStalled {
        residual: f64,
        iterations: usize,
        budget: usize,
        target: f64,
    },

    /// The sampling grid does not resolve the shortest interior wavelength.
    #[error(
        "grid too coarse: cell size {cell:.4e} exceeds an eighth of the \
         shortest interior wavelength ({limit:.4e})"
    )]
    GridTooCoarse { cell: f64, limit: f64 },

    /// The dense point-scatterer system is numerically singular.
    #[error("point-scatterer system is near-singular (condition estimate {cond:.3e})")]
    NearSingularSystem { cond: f64 },

    /// Every diagonal entry of the backscatter difference matrix vanishes,
    /// so no pivot is available for the square-root extraction.
    #[error(
        "backscatter difference matrix has no usable diagonal pivot \
         (largest |D_jj| = {max_diag:.3e} below threshold {threshold:.3e})"
    )]
    DegenerateBackscatter { max_diag: f64, threshold: f64 },

    /// Relative sign of two extracted field vectors cannot be decided.
    #[error(
        "sign alignment ambiguous: |v1 - v2| and |v1 + v2| differ by a \
         relative gap of only {gap:.3e}"
    )]
    AmbiguousAlignment { gap: f64 },

    /// The probe Gram matrix is too close to rank-deficient to invert.
    #[error(
        "probe field Gram matrix is ill-conditioned \
         (smallest singular value {sigma_min:.3e}, largest {sigma_max:.3e})"
    )]
    IllConditionedProbe { sigma_min: f64, sigma_max: f64 },

    /// Probe layout violates a geometric or scaling constraint.
    #[error("invalid probe layout: {0}")]
    InvalidLayout(String),

    /// A configuration value is outside its documented domain.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A point fell outside the domain of a sampled index grid.
    #[error("point ({x:.6}, {y:.6}, {z:.6}) lies outside the sampled index grid")]
    GridDomain { x: f64, y: f64, z: f64 },

    /// A partial-wave series failed to reach its tail tolerance.
    #[error(
        "partial-wave series did not reach tail tolerance {tolerance:.1e} \
         within {max_order} orders (size parameter {size_parameter:.3})"
    )]
    SeriesTruncation {
        size_parameter: f64,
        max_order: usize,
        tolerance: f64,
    },

    /// Least-squares rate fit received unusable samples.
    #[error("convergence-rate fit needs at least two positive samples: {0}")]
    RateFitDomain(String),

    /// Underlying file-system problem.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed CSV payload.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Malformed JSON payload.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ScatError {
    /// True for errors caused by invalid inputs rather than numerical
    /// breakdown. Command-line frontends map these to a distinct exit code.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            ScatError::InvalidLayout(_)
                | ScatError::InvalidConfig(_)
                | ScatError::GridDomain { .. }
                | ScatError::GridTooCoarse { .. }
                | ScatError::Io(_)
                | ScatError::Csv(_)
                | ScatError::Json(_)
        )
    }
}
