//! The five commands: background synthesis, probe synthesis,
//! reconstruction, rate sweeps and noise studies.
//!
//! Each command reads one [`ExperimentConfig`], runs its parallel units
//! through the shared worker pool (incidence directions for `forward`,
//! `(h, t, seed)` cells for `sweep` and `noise-study`) and hands every
//! output file to a single writer in a deterministic order.

use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use scatkit::experiments::{
    run_noise_study, run_rate_sweep, NoiseStudyConfig, NoiseStudyOutcome, SweepOutcome,
};
use scatkit::farfield::{FarFieldMatrix, MatrixKind};
use scatkit::foldy::{
    capacitance, synthesize_measurements, FieldProvider, HomogeneousProvider,
    MeasurementBundle, PairMeasurement, SingleMeasurement, SiteMeasurements, SolverProvider,
};
use scatkit::invert::reconstruct_index_map;
use scatkit::io::{self, MatrixMetadata};
use scatkit::mie::MieBall;
use scatkit::solver::MediumSolver;
use scatkit::{Result, ScatError, Vec3};

use crate::config::{vec3, ExperimentConfig, MediumSection};
use crate::report::{
    fmt_float, load_manifest, save_diagnostics, save_manifest, save_run_info, CsvTable,
    ForwardDiagnostics, ManifestSite, ProbeManifest, RunInfo,
};

/// Where and how a command writes its output.
pub struct RunContext {
    pub out: PathBuf,
    pub no_timestamp: bool,
    pub threads: Option<usize>,
    pub seed_override: Option<u64>,
    pub config_path: String,
}

impl RunContext {
    /// Wall-clock milliseconds since `started`, or 0 when timestamps are
    /// suppressed so that report bodies stay byte-reproducible.
    fn wall_ms(&self, started: Instant) -> u128 {
        if self.no_timestamp {
            0
        } else {
            started.elapsed().as_millis()
        }
    }

    fn save_run_info(&self, command: &str, cfg: &ExperimentConfig) -> Result<()> {
        let generated_at = if self.no_timestamp {
            None
        } else {
            Some(humantime::format_rfc3339_seconds(std::time::SystemTime::now()).to_string())
        };
        save_run_info(
            &self.out,
            &RunInfo {
                command: command.to_string(),
                experiment_id: cfg.id(command),
                config: self.config_path.clone(),
                threads: self.threads,
                seed_override: self.seed_override,
                generated_at,
            },
        )
    }
}

/// Background-field source for synthesis: the closed-form provider for the
/// trivial medium, the volume solver otherwise.
fn build_provider(cfg: &ExperimentConfig) -> Result<Box<dyn FieldProvider>> {
    let waves = cfg.wave_config()?;
    if cfg.is_homogeneous() {
        Ok(Box::new(HomogeneousProvider::new(waves)))
    } else {
        let solver = MediumSolver::new(cfg.medium_spec()?, cfg.kappa, cfg.solver_params())?;
        Ok(Box::new(SolverProvider::new(solver, waves, cfg.green_mode())?))
    }
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

/// Solve the background medium once per incidence direction and write the
/// far-field matrix, solver diagnostics and — for constant-ball media —
/// the independent partial-wave series next to it.
pub fn cmd_forward(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<()> {
    let waves = cfg.wave_config()?;
    let dirs = waves.directions().to_vec();
    let n = dirs.len();

    let (matrix, iterations, residuals, grid_dims) = if cfg.is_homogeneous() {
        let matrix = FarFieldMatrix::zeros(MatrixKind::Background, cfg.kappa, dirs.clone());
        (matrix, vec![0usize; n], vec![0.0f64; n], None)
    } else {
        let solver = MediumSolver::new(cfg.medium_spec()?, cfg.kappa, cfg.solver_params())?;
        let columns: Result<Vec<(Vec<Complex64>, usize, f64)>> = dirs
            .par_iter()
            .map(|&theta_j| {
                let solution = solver.solve_total_field(theta_j)?;
                let column = dirs
                    .iter()
                    .map(|&theta_i| solver.far_field_pattern(&solution, -theta_i))
                    .collect();
                Ok((column, solution.iterations, solution.residual))
            })
            .collect();
        let columns = columns?;
        let mut values = vec![Complex64::new(0.0, 0.0); n * n];
        let mut iterations = Vec::with_capacity(n);
        let mut residuals = Vec::with_capacity(n);
        for (j, (column, its, res)) in columns.iter().enumerate() {
            for i in 0..n {
                values[i * n + j] = column[i];
            }
            iterations.push(*its);
            residuals.push(*res);
        }
        let matrix = FarFieldMatrix::new(MatrixKind::Background, cfg.kappa, dirs.clone(), values)?;
        (matrix, iterations, residuals, Some(solver.grid().dims()))
    };

    io::save_matrix(
        &ctx.out.join("background.csv"),
        &matrix,
        &MatrixMetadata::background(cfg.kappa),
    )?;

    let mut max_series_gap = None;
    if let MediumSection::ConstantBall(ball) = &cfg.medium {
        if ball.index != 1.0 {
            let mie = MieBall::new(ball.index, ball.radius, vec3(ball.center), cfg.kappa)?;
            let series = mie.far_field_matrix(&waves);
            io::save_matrix(
                &ctx.out.join("background_series.csv"),
                &series,
                &MatrixMetadata::background(cfg.kappa),
            )?;
            let diff = matrix.sub(&series)?;
            let scale = series.max_abs().max(f64::MIN_POSITIVE);
            let gap = diff.iter().map(|v| v.norm()).fold(0.0f64, f64::max) / scale;
            max_series_gap = Some(gap);
        }
    }

    save_diagnostics(
        &ctx.out,
        &ForwardDiagnostics {
            kappa: cfg.kappa,
            direction_count: n,
            grid_dims,
            iterations,
            residuals,
            max_series_gap,
        },
    )?;
    ctx.save_run_info("forward", cfg)
}

// ---------------------------------------------------------------------------
// probe
// ---------------------------------------------------------------------------

/// Synthesize the measurement bundle for the configured layout and write
/// one CSV per matrix plus a manifest tying them together.
pub fn cmd_probe(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<()> {
    let spec = cfg.medium_spec()?;
    let provider = build_provider(cfg)?;
    let layout = cfg.layout(spec.support())?;
    let bundle = synthesize_measurements(provider.as_ref(), &layout, None)?;
    write_probe_files(&ctx.out, &bundle)?;
    ctx.save_run_info("probe", cfg)
}

fn probe_metadata(
    bundle: &MeasurementBundle,
    kind: MatrixKind,
    centers: Vec<Vec3>,
) -> MatrixMetadata {
    MatrixMetadata {
        kind,
        kappa: bundle.kappa,
        centers,
        radius: Some(bundle.radius),
        impedance_exponent: Some(bundle.impedance_exponent),
        closeness_exponent: Some(bundle.closeness_exponent),
    }
}

/// Write a bundle as a probe output directory: background + per-site
/// matrices, each with its metadata sidecar, indexed by a manifest.
pub fn write_probe_files(dir: &Path, bundle: &MeasurementBundle) -> Result<()> {
    io::save_matrix(
        &dir.join("background.csv"),
        &bundle.background,
        &MatrixMetadata::background(bundle.kappa),
    )?;
    let mut sites = Vec::with_capacity(bundle.sites.len());
    for (i, site) in bundle.sites.iter().enumerate() {
        let mut singles = Vec::with_capacity(site.singles.len());
        for (k, single) in site.singles.iter().enumerate() {
            let name = format!("site_{i:03}_single_{k}.csv");
            io::save_matrix(
                &dir.join(&name),
                &single.far_field,
                &probe_metadata(bundle, MatrixKind::SingleInclusion, vec![single.center]),
            )?;
            singles.push(name);
        }
        let mut entry = ManifestSite {
            singles,
            pair: None,
            interaction: None,
            interaction_surrogate: false,
        };
        if let Some(pair) = &site.pair {
            let name = format!("site_{i:03}_pair.csv");
            io::save_matrix(
                &dir.join(&name),
                &pair.far_field,
                &probe_metadata(bundle, MatrixKind::DoubleInclusion, pair.centers.to_vec()),
            )?;
            entry.pair = Some(name);
            entry.interaction = Some((pair.interaction.re, pair.interaction.im));
            entry.interaction_surrogate = pair.interaction_surrogate;
        }
        sites.push(entry);
    }
    save_manifest(
        dir,
        &ProbeManifest {
            kappa: bundle.kappa,
            radius: bundle.radius,
            impedance_exponent: bundle.impedance_exponent,
            closeness_exponent: bundle.closeness_exponent,
            background: "background.csv".to_string(),
            sites,
        },
    )
}

/// Rebuild a measurement bundle from a probe output directory.
pub fn load_probe_files(dir: &Path) -> Result<MeasurementBundle> {
    let manifest = load_manifest(dir)?;
    let (background, _) = io::load_matrix(&dir.join(&manifest.background))?;
    let mut sites = Vec::with_capacity(manifest.sites.len());
    for site in &manifest.sites {
        let mut singles = Vec::with_capacity(site.singles.len());
        for name in &site.singles {
            let (matrix, meta) = io::load_matrix(&dir.join(name))?;
            let center = *meta.centers.first().ok_or_else(|| {
                ScatError::InvalidConfig(format!(
                    "{name}: single-probe metadata lists no center"
                ))
            })?;
            singles.push(SingleMeasurement { center, far_field: matrix });
        }
        let pair = match &site.pair {
            None => None,
            Some(name) => {
                let (matrix, meta) = io::load_matrix(&dir.join(name))?;
                if meta.centers.len() != 2 {
                    return Err(ScatError::InvalidConfig(format!(
                        "{name}: pair metadata lists {} centers instead of 2",
                        meta.centers.len()
                    )));
                }
                let (re, im) = site.interaction.ok_or_else(|| {
                    ScatError::InvalidConfig(format!(
                        "{name}: manifest lacks the reference interaction value"
                    ))
                })?;
                Some(PairMeasurement {
                    centers: [meta.centers[0], meta.centers[1]],
                    far_field: matrix,
                    interaction: Complex64::new(re, im),
                    interaction_surrogate: site.interaction_surrogate,
                })
            }
        };
        sites.push(SiteMeasurements { singles, pair });
    }
    Ok(MeasurementBundle {
        kappa: manifest.kappa,
        radius: manifest.radius,
        impedance_exponent: manifest.impedance_exponent,
        closeness_exponent: manifest.closeness_exponent,
        capacitance: capacitance(manifest.radius, manifest.impedance_exponent),
        background,
        sites,
    })
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------

const RECORD_HEADER: &[&str] = &[
    "site",
    "z1_x",
    "z1_y",
    "z1_z",
    "z2_x",
    "z2_y",
    "z2_z",
    "separation",
    "green_re",
    "green_im",
    "gram_min_singular",
    "gram_max_singular",
    "index_re",
    "index_im",
    "index_imag_abs",
    "reference_re",
    "reference_im",
    "reference_is_surrogate",
    "green_error",
    "index_error",
];

/// Invert a measurement bundle — synthesized in memory, or read back from a
/// probe output directory when the config names one — into per-pair Green
/// and index estimates.
pub fn cmd_reconstruct(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<()> {
    let spec = cfg.medium_spec()?;
    let bundle = match &cfg.data {
        Some(data) => {
            let bundle = load_probe_files(&data.dir)?;
            if (bundle.kappa - cfg.kappa).abs() > 1e-12 * cfg.kappa.abs() {
                return Err(ScatError::InvalidConfig(format!(
                    "probe data at kappa = {} does not match the config's {}",
                    bundle.kappa, cfg.kappa
                )));
            }
            bundle
        }
        None => {
            let provider = build_provider(cfg)?;
            let layout = cfg.layout(spec.support())?;
            synthesize_measurements(provider.as_ref(), &layout, None)?
        }
    };

    let report = reconstruct_index_map(&bundle);

    let mut records = CsvTable::new(RECORD_HEADER);
    for rec in &report.records {
        let [z1, z2] = rec.green.centers;
        // The configured medium is the ground truth; points outside its
        // support get an empty error cell rather than a guessed index.
        let index_error = if spec.support().contains(rec.index.point) {
            let truth = spec.evaluate_index(rec.index.point)?;
            fmt_float((rec.index.value - truth).norm())
        } else {
            String::new()
        };
        records.push(vec![
            rec.site.to_string(),
            fmt_float(z1.x),
            fmt_float(z1.y),
            fmt_float(z1.z),
            fmt_float(z2.x),
            fmt_float(z2.y),
            fmt_float(z2.z),
            fmt_float(rec.index.separation),
            fmt_float(rec.green.value.re),
            fmt_float(rec.green.value.im),
            fmt_float(rec.green.gram_min_singular),
            fmt_float(rec.green.gram_max_singular),
            fmt_float(rec.index.value.re),
            fmt_float(rec.index.value.im),
            fmt_float(rec.index.value.im.abs()),
            fmt_float(rec.reference_interaction.re),
            fmt_float(rec.reference_interaction.im),
            rec.reference_is_surrogate.to_string(),
            fmt_float((rec.green.value - rec.reference_interaction).norm()),
            index_error,
        ]);
    }
    records.write(&ctx.out.join("records.csv"))?;

    let mut failures = CsvTable::new(&["site", "message"]);
    for (site, message) in &report.failures {
        failures.push(vec![site.to_string(), format!("{message:?}")]);
    }
    failures.write(&ctx.out.join("failures.csv"))?;

    ctx.save_run_info("reconstruct", cfg)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

const PAIR_HEADER: &[&str] = &[
    "experiment_id",
    "h",
    "t",
    "seed",
    "q1",
    "q2",
    "radius",
    "site",
    "index_error",
    "green_error",
    "imag_index",
    "gram_min",
];

const MEDIAN_HEADER: &[&str] = &[
    "experiment_id",
    "h",
    "t",
    "seed",
    "radius",
    "index_error_median",
    "green_error_median",
    "imag_index_median",
    "gram_min",
    "sites_reconstructed",
    "sites_failed",
];

const SWEEP_SUMMARY_HEADER: &[&str] = &[
    "experiment_id",
    "h",
    "t",
    "seed",
    "q1",
    "q2",
    "index_slope",
    "index_intercept",
    "green_slope",
    "green_intercept",
    "expected_index_rate",
    "expected_green_rate",
    "classification",
    "wall_ms",
];

/// Run the radius sweep over the `(h, t)` exponent grid and placement
/// seeds, in parallel over cells, and write per-pair rows, per-radius
/// medians and the fitted-slope summary.
pub fn cmd_sweep(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<()> {
    let section = cfg.sweep.as_ref().ok_or_else(|| {
        ScatError::InvalidConfig("the `sweep` command needs a `sweep` section".into())
    })?;
    let provider = build_provider(cfg)?;
    let id = cfg.id("sweep");

    let seeds: Vec<u64> = match ctx.seed_override {
        Some(seed) => vec![seed],
        None => section.seeds.clone().unwrap_or_else(|| vec![section.placement_seed]),
    };
    let mut cells = Vec::with_capacity(section.exponents.len() * seeds.len());
    for &[h, t] in &section.exponents {
        for &seed in &seeds {
            cells.push((h, t, seed));
        }
    }

    let results: Vec<_> = cells
        .par_iter()
        .map(|&(h, t, seed)| -> Result<(SweepOutcome, u128)> {
            let started = Instant::now();
            let cell = cfg.sweep_config(h, t, seed)?;
            let outcome = run_rate_sweep(provider.as_ref(), &cell)?;
            Ok((outcome, ctx.wall_ms(started)))
        })
        .collect();

    let mut pair_rows = CsvTable::new(PAIR_HEADER);
    let mut median_rows = CsvTable::new(MEDIAN_HEADER);
    let mut summary = CsvTable::new(SWEEP_SUMMARY_HEADER);
    for (&(h, t, seed), result) in cells.iter().zip(results) {
        let (outcome, wall_ms) = result?;
        for pair in &outcome.pairs {
            pair_rows.push(vec![
                id.clone(),
                fmt_float(h),
                fmt_float(t),
                seed.to_string(),
                String::new(),
                String::new(),
                fmt_float(pair.radius),
                pair.site.to_string(),
                fmt_float(pair.index_error),
                fmt_float(pair.green_error),
                fmt_float(pair.imag_index),
                fmt_float(pair.gram_min),
            ]);
        }
        for sample in &outcome.samples {
            median_rows.push(vec![
                id.clone(),
                fmt_float(h),
                fmt_float(t),
                seed.to_string(),
                fmt_float(sample.radius),
                fmt_float(sample.index_error_median),
                fmt_float(sample.green_error_median),
                fmt_float(sample.imag_index_median),
                fmt_float(sample.gram_min),
                sample.sites_reconstructed.to_string(),
                sample.sites_failed.to_string(),
            ]);
        }
        let classification =
            if outcome.window_satisfied { "in_window" } else { "out_of_window" };
        summary.push(vec![
            id.clone(),
            fmt_float(h),
            fmt_float(t),
            seed.to_string(),
            String::new(),
            String::new(),
            fmt_float(outcome.index_rate.slope),
            fmt_float(outcome.index_rate.intercept),
            fmt_float(outcome.green_rate.slope),
            fmt_float(outcome.green_rate.intercept),
            fmt_float(t),
            fmt_float(1.0 - h - 2.0 * t),
            classification.to_string(),
            wall_ms.to_string(),
        ]);
    }
    pair_rows.write(&ctx.out.join("sweep_pairs.csv"))?;
    median_rows.write(&ctx.out.join("sweep_medians.csv"))?;
    summary.write(&ctx.out.join("sweep_summary.csv"))?;

    ctx.save_run_info("sweep", cfg)
}

// ---------------------------------------------------------------------------
// noise-study
// ---------------------------------------------------------------------------

const NOISE_ROW_HEADER: &[&str] = &[
    "experiment_id",
    "h",
    "t",
    "q1",
    "q2",
    "radius",
    "delta",
    "eta",
    "index_error_median",
    "green_error_median",
    "reconstructions",
    "failures",
];

const NOISE_SUMMARY_HEADER: &[&str] = &[
    "experiment_id",
    "h",
    "t",
    "q1",
    "q2",
    "index_slope",
    "index_intercept",
    "green_slope",
    "green_intercept",
    "classification",
    "wall_ms",
];

/// Rerun the sweep under radius-scaled measurement noise and pair-center
/// shifts, pooling medians across the configured seeds, and classify each
/// `(h, t)` cell's scaling regime.
pub fn cmd_noise_study(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<()> {
    let section = cfg.sweep.as_ref().ok_or_else(|| {
        ScatError::InvalidConfig("the `noise-study` command needs a `sweep` section".into())
    })?;
    let noise = cfg.noise.as_ref().ok_or_else(|| {
        ScatError::InvalidConfig("the `noise-study` command needs a `noise` section".into())
    })?;
    let provider = build_provider(cfg)?;
    let id = cfg.id("noise_study");
    let placement_seed = ctx.seed_override.unwrap_or(section.placement_seed);

    let cells: Vec<[f64; 2]> = section.exponents.clone();
    let results: Vec<_> = cells
        .par_iter()
        .map(|&[h, t]| -> Result<(NoiseStudyOutcome, u128)> {
            let started = Instant::now();
            let study = NoiseStudyConfig {
                sweep: cfg.sweep_config(h, t, placement_seed)?,
                delta_coeff: noise.delta_coeff,
                q1: noise.q1,
                eta_coeff: noise.eta_coeff,
                q2: noise.q2,
                seeds: noise.seeds.clone(),
            };
            let outcome = run_noise_study(provider.as_ref(), &study)?;
            Ok((outcome, ctx.wall_ms(started)))
        })
        .collect();

    let mut rows = CsvTable::new(NOISE_ROW_HEADER);
    let mut summary = CsvTable::new(NOISE_SUMMARY_HEADER);
    for (&[h, t], result) in cells.iter().zip(results) {
        let (outcome, wall_ms) = result?;
        for sample in &outcome.samples {
            rows.push(vec![
                id.clone(),
                fmt_float(h),
                fmt_float(t),
                fmt_float(noise.q1),
                fmt_float(noise.q2),
                fmt_float(sample.radius),
                fmt_float(sample.delta),
                fmt_float(sample.eta),
                fmt_float(sample.index_error_median),
                fmt_float(sample.green_error_median),
                sample.reconstructions.to_string(),
                sample.failures.to_string(),
            ]);
        }
        summary.push(vec![
            id.clone(),
            fmt_float(h),
            fmt_float(t),
            fmt_float(noise.q1),
            fmt_float(noise.q2),
            fmt_float(outcome.index_rate.slope),
            fmt_float(outcome.index_rate.intercept),
            fmt_float(outcome.green_rate.slope),
            fmt_float(outcome.green_rate.intercept),
            outcome.regime.to_string(),
            wall_ms.to_string(),
        ]);
    }
    rows.write(&ctx.out.join("noise_rows.csv"))?;
    summary.write(&ctx.out.join("noise_summary.csv"))?;

    ctx.save_run_info("noise-study", cfg)
}
