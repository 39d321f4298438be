//! Experiment configuration: one strict JSON document per run.
//!
//! Unknown keys are rejected everywhere, so a config file is a complete and
//! unambiguous record of an experiment. Sections are only required by the
//! commands that consume them: `forward` needs `medium` (and optionally
//! `waves`/`solver`), `probe` and `reconstruct` add `layout` (or `data` to
//! read a probe output directory back), `sweep` adds `sweep`, and
//! `noise-study` adds `noise` on top of `sweep`. Every geometric and
//! scaling constraint is re-validated when the described objects are built,
//! never trusted from the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use scatkit::experiments::SweepConfig;
use scatkit::foldy::GreenMode;
use scatkit::layout::{InclusionLayout, LayoutScaling, ProbeSite};
use scatkit::medium::{MediumSpec, SupportBox};
use scatkit::solver::SolverParams;
use scatkit::waves::{WaveConfig, DEFAULT_DIRECTION_COUNT};
use scatkit::{Result, ScatError, Vec3};

/// Root of the experiment configuration file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Free-form identifier echoed into every report row.
    #[serde(default)]
    pub experiment_id: Option<String>,
    /// Wavenumber of the incident plane waves.
    pub kappa: f64,
    pub medium: MediumSection,
    #[serde(default)]
    pub waves: Option<WavesSection>,
    #[serde(default)]
    pub solver: Option<SolverSection>,
    #[serde(default)]
    pub green: Option<GreenSection>,
    #[serde(default)]
    pub layout: Option<LayoutSection>,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub noise: Option<NoiseSection>,
}

/// Background medium, externally tagged: `{"homogeneous": {...}}`,
/// `{"constant_ball": {...}}` or `{"smooth_bump": {...}}`.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediumSection {
    Homogeneous(HomogeneousMedium),
    ConstantBall(BallMedium),
    SmoothBump(BumpMedium),
}

/// The trivial medium `n ≡ 1` on a cubic box.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogeneousMedium {
    /// Half-width of the cubic support box.
    pub half_width: f64,
    #[serde(default)]
    pub center: [f64; 3],
}

/// Constant refractive index inside a ball, `n ≡ 1` outside.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallMedium {
    /// Refractive index inside the ball.
    pub index: f64,
    pub radius: f64,
    #[serde(default)]
    pub center: [f64; 3],
    /// Half-width of the cubic support box around the ball center.
    pub box_half_width: f64,
}

/// Smooth compactly supported bump peaking at `index` in its center.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpMedium {
    /// Peak refractive index at the bump center.
    pub index: f64,
    pub radius: f64,
    #[serde(default)]
    pub center: [f64; 3],
    /// Shape exponent in (0, 1]; smaller values flatten the profile.
    pub regularity: f64,
    pub box_half_width: f64,
}

/// Incident plane-wave directions (Fibonacci-sphere layout).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavesSection {
    pub count: usize,
}

/// Volume-solver discretisation and iteration budget.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Grid cells along the longest axis of the support box.
    pub cells: usize,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    /// Krylov block length between restarts.
    #[serde(default)]
    pub restart: Option<usize>,
}

/// Interior Green-function strategy during probe synthesis.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenSection {
    /// Point-source solves, falling back to the phase-corrected surrogate
    /// below `min_cell_multiple` grid cells of pair separation.
    Numerical(NumericalGreen),
    /// Always the phase-corrected surrogate.
    Surrogate,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericalGreen {
    #[serde(default = "default_min_cell_multiple")]
    pub min_cell_multiple: f64,
}

fn default_min_cell_multiple() -> f64 {
    4.0
}

/// Explicit probe layout for `probe` and in-memory `reconstruct`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSection {
    /// Probe ball radius `a`.
    pub radius: f64,
    /// Impedance scaling exponent `h` (surface impedance grows as `a^{-h}`).
    pub impedance_exponent: f64,
    /// Closeness exponent `t` (pair separations scale as `a^t`).
    pub closeness_exponent: f64,
    /// Allowed separation band as multiples of `a^t`; defaults to (0.5, 1.5).
    #[serde(default)]
    pub separation_band: Option<[f64; 2]>,
    pub sites: Vec<SiteSection>,
}

/// One probe site: a single ball, or a pair when `second` is present.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSection {
    pub first: [f64; 3],
    #[serde(default)]
    pub second: Option<[f64; 3]>,
}

/// Where `reconstruct` finds previously written probe output.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding a probe manifest plus its CSV matrices.
    pub dir: PathBuf,
}

/// Radius sweep: shrink `a` over a frozen random pair placement and fit the
/// error-decay rates.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Probe radii, largest to smallest.
    pub radii: Vec<f64>,
    /// `[h, t]` exponent pairs; each is one sweep cell.
    pub exponents: Vec<[f64; 2]>,
    /// Box the pair anchors are drawn from.
    pub region: RegionSection,
    /// Separation prefactor: pairs sit `separation_coeff · a^t` apart.
    #[serde(default = "default_one")]
    pub separation_coeff: f64,
    #[serde(default)]
    pub separation_band: Option<[f64; 2]>,
    pub pair_count: usize,
    #[serde(default)]
    pub placement_seed: u64,
    /// Placement seeds to repeat every exponent cell with; defaults to just
    /// `placement_seed`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    /// Scale of the first-order model residual injected into synthesized
    /// data; 0 disables it.
    #[serde(default)]
    pub model_residual: f64,
    #[serde(default)]
    pub residual_seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub center: [f64; 3],
    pub half_width: f64,
}

fn default_one() -> f64 {
    1.0
}

/// Noise/shift scaling for `noise-study`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Data-noise prefactor: matrix entries are perturbed within
    /// `delta_coeff · a^{q1}`.
    pub delta_coeff: f64,
    pub q1: f64,
    /// Shift prefactor: pair centers move within `eta_coeff · a^{q2}`.
    pub eta_coeff: f64,
    pub q2: f64,
    /// Noise/shift seeds; medians pool across them.
    pub seeds: Vec<u64>,
}

/// Read and parse a configuration file. Parse failures carry the file name
/// and position so they can be fixed without guesswork.
pub fn load_config(path: &Path) -> std::result::Result<ExperimentConfig, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
}

pub fn vec3(v: [f64; 3]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

impl ExperimentConfig {
    /// Identifier for report rows, falling back to the command name.
    pub fn id(&self, default: &str) -> String {
        self.experiment_id.clone().unwrap_or_else(|| default.to_string())
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self.medium, MediumSection::Homogeneous(_))
    }

    pub fn medium_spec(&self) -> Result<MediumSpec> {
        match &self.medium {
            MediumSection::Homogeneous(m) => Ok(MediumSpec::homogeneous(
                SupportBox::cube(vec3(m.center), m.half_width)?,
            )),
            MediumSection::ConstantBall(m) => {
                MediumSpec::constant_ball(m.index, m.radius, vec3(m.center), m.box_half_width)
            }
            MediumSection::SmoothBump(m) => MediumSpec::smooth_bump(
                m.index,
                m.radius,
                vec3(m.center),
                m.regularity,
                m.box_half_width,
            ),
        }
    }

    pub fn wave_config(&self) -> Result<WaveConfig> {
        let count = self.waves.as_ref().map_or(DEFAULT_DIRECTION_COUNT, |w| w.count);
        WaveConfig::fibonacci(self.kappa, count)
    }

    pub fn solver_params(&self) -> SolverParams {
        let mut params = SolverParams::default();
        if let Some(section) = &self.solver {
            params.cells_per_axis = section.cells;
            if let Some(tolerance) = section.tolerance {
                params.tolerance = tolerance;
            }
            if let Some(max_iterations) = section.max_iterations {
                params.max_iterations = max_iterations;
            }
            if let Some(restart) = section.restart {
                params.restart = restart;
            }
        }
        params
    }

    pub fn green_mode(&self) -> GreenMode {
        match &self.green {
            None => GreenMode::default(),
            Some(GreenSection::Surrogate) => GreenMode::Surrogate,
            Some(GreenSection::Numerical(n)) => {
                GreenMode::Numerical { min_cell_multiple: n.min_cell_multiple }
            }
        }
    }

    /// Build the explicit probe layout, re-validating every geometric and
    /// scaling constraint against the medium's support box.
    pub fn layout(&self, support: &SupportBox) -> Result<InclusionLayout> {
        let section = self.layout.as_ref().ok_or_else(|| {
            ScatError::InvalidConfig("this command needs a `layout` section".into())
        })?;
        let mut scaling = LayoutScaling::new(
            section.radius,
            section.impedance_exponent,
            section.closeness_exponent,
        );
        if let Some([lo, hi]) = section.separation_band {
            scaling.separation_band = (lo, hi);
        }
        let sites = section
            .sites
            .iter()
            .map(|s| match s.second {
                Some(second) => ProbeSite::pair(vec3(s.first), vec3(second)),
                None => ProbeSite::single(vec3(s.first)),
            })
            .collect();
        InclusionLayout::new(sites, scaling, support)
    }

    /// Sweep configuration for one `(h, t, seed)` cell.
    pub fn sweep_config(&self, h: f64, t: f64, seed: u64) -> Result<SweepConfig> {
        let section = self.sweep.as_ref().ok_or_else(|| {
            ScatError::InvalidConfig("this command needs a `sweep` section".into())
        })?;
        let region =
            SupportBox::cube(vec3(section.region.center), section.region.half_width)?;
        let mut config = SweepConfig::new(section.radii.clone(), h, t, region);
        config.separation_coeff = section.separation_coeff;
        if let Some([lo, hi]) = section.separation_band {
            config.separation_band = (lo, hi);
        }
        config.pair_count = section.pair_count;
        config.placement_seed = seed;
        config.model_residual = section.model_residual;
        config.residual_seed = section.residual_seed;
        Ok(config)
    }
}
