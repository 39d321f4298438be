//! Convergence-rate and cross-module consistency checks.
//!
//! These tests pin the scaling behaviour of the synthesis/inversion
//! pipeline with frozen seeds and designs: second-order coupling decay,
//! field-vector extraction accuracy, the fitted error-rate windows of the
//! radius sweeps, reciprocity and symmetry of the volume solver, the
//! boundedness of the Green singularity subtraction, and end-to-end index
//! tracking on smooth and trivial media. Expected figures quoted in
//! comments were measured on the frozen designs.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scatkit::experiments::{run_rate_sweep, SweepConfig};
use scatkit::foldy::{
    capacitance, free_space_green, inject_bundle_residual, synthesize_measurements, GreenMode,
    HomogeneousProvider, SolverProvider,
};
use scatkit::geom::Vec3;
use scatkit::invert::{
    align_signs, extract_green, extract_total_field_vector, reconstruct_index_map,
};
use scatkit::layout::{InclusionLayout, LayoutScaling, ProbeSite};
use scatkit::medium::{MediumSpec, SupportBox};
use scatkit::solver::{MediumSolver, SolverParams};
use scatkit::stability::{convergence_rate, noisy_reconstruct, NoiseModel, ShiftModel};
use scatkit::waves::WaveConfig;

const SWEEP_RADII: [f64; 4] = [0.04, 0.02, 0.01, 0.005];

fn bump_index(z: Vec3) -> f64 {
    let r2 = z.norm_sq();
    if r2 >= 1.0 {
        1.0
    } else {
        1.0 + 0.3 * (1.0 - 1.0 / (1.0 - r2)).exp()
    }
}

fn max_abs(values: &[Complex64]) -> f64 {
    values.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// rate-fit helper oracles
// ---------------------------------------------------------------------------

#[test]
fn rate_fit_recovers_exact_power_laws() {
    let unit: Vec<(f64, f64)> = SWEEP_RADII.iter().map(|&a| (a, a)).collect();
    let fit = convergence_rate(&unit).unwrap();
    assert!((fit.slope - 1.0).abs() <= 1e-12, "slope {}", fit.slope);

    let scaled: Vec<(f64, f64)> = SWEEP_RADII.iter().map(|&a| (a, 7.0 * a.powf(0.4))).collect();
    let fit = convergence_rate(&scaled).unwrap();
    assert!((fit.slope - 0.4).abs() <= 1e-12, "slope {}", fit.slope);
    assert!(
        (fit.intercept - 7.0_f64.ln()).abs() <= 1e-12,
        "intercept {} vs ln 7",
        fit.intercept
    );
    assert!(fit.residual <= 1e-12, "residual {}", fit.residual);
}

// ---------------------------------------------------------------------------
// second-order coupling decay
// ---------------------------------------------------------------------------

/// The difference between the pair response and the sum of the two
/// single-ball responses is the second-order multiple-scattering term; its
/// magnitude decays like a^{2−2h−t}. Measured slopes on this design:
/// 1.3626, 1.2262, 1.4181.
#[test]
fn pair_coupling_term_decays_at_second_order_rate() {
    let kappa = 2.4;
    let waves = WaveConfig::fibonacci(kappa, 6).unwrap();
    let provider = HomogeneousProvider::new(waves);
    let support = SupportBox::cube(Vec3::ZERO, 2.0).unwrap();
    let z0 = Vec3::new(0.2, -0.1, 0.3);
    let axis = Vec3::new(1.0, 2.0, -0.5).normalized();

    for (h, t) in [(0.2, 0.2), (0.25, 0.25), (0.1, 0.3)] {
        let mut samples: Vec<(f64, f64)> = Vec::new();
        for a in [1e-4_f64, 1e-5, 1e-6, 1e-7] {
            let d = a.powf(t);
            let site = ProbeSite::pair(z0 - axis * (0.5 * d), z0 + axis * (0.5 * d));
            let layout =
                InclusionLayout::new(vec![site], LayoutScaling::new(a, h, t), &support).unwrap();
            let bundle = synthesize_measurements(&provider, &layout, None).unwrap();
            let site = &bundle.sites[0];
            let w = &site.pair.as_ref().unwrap().far_field.values;
            let u1 = &site.singles[0].far_field.values;
            let u2 = &site.singles[1].far_field.values;
            let v = &bundle.background.values;
            let mut worst = 0.0_f64;
            for i in 0..v.len() {
                let coupling = w[i] - v[i] - (u1[i] - v[i]) - (u2[i] - v[i]);
                worst = worst.max(coupling.norm());
            }
            samples.push((a, worst));
        }
        let fit = convergence_rate(&samples).unwrap();
        let target = 2.0 - 2.0 * h - t;
        assert!(
            (fit.slope - target).abs() <= 0.15,
            "(h,t)=({h},{t}): coupling slope {:.4} outside {target} ± 0.15",
            fit.slope
        );
    }
}

// ---------------------------------------------------------------------------
// field-vector extraction accuracy
// ---------------------------------------------------------------------------

/// With the model's higher-order residual injected, the extracted field
/// vector converges to the true total field at first order in the radius.
/// Measured slope on this design: 1.1525.
#[test]
fn field_vector_extraction_converges_at_first_order() {
    let kappa = 2.4;
    let waves = WaveConfig::fibonacci(kappa, 6).unwrap();
    let provider = HomogeneousProvider::new(waves.clone());
    let support = SupportBox::cube(Vec3::ZERO, 2.0).unwrap();
    let h = 0.2;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let points: Vec<Vec3> = (0..16)
        .map(|_| {
            Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();

    let mut samples: Vec<(f64, f64)> = Vec::new();
    for a in SWEEP_RADII {
        let sites: Vec<ProbeSite> = points.iter().map(|&p| ProbeSite::single(p)).collect();
        let layout =
            InclusionLayout::new(sites, LayoutScaling::new(a, h, 0.2), &support).unwrap();
        let bundle = synthesize_measurements(&provider, &layout, None).unwrap();
        let bundle = inject_bundle_residual(&bundle, 1.0, 42);
        let cap = capacitance(a, h);

        let mut errors: Vec<f64> = Vec::new();
        for (site, &z) in bundle.sites.iter().zip(&points) {
            let vhat = extract_total_field_vector(
                &site.singles[0].far_field,
                &bundle.background,
                cap,
                z,
            )
            .unwrap();
            let truth: Vec<Complex64> = waves
                .directions()
                .iter()
                .map(|theta| (Complex64::i() * kappa * theta.dot(z)).exp())
                .collect();
            let dev = |sign: f64| {
                vhat.values
                    .iter()
                    .zip(&truth)
                    .map(|(got, want)| (got - want * sign).norm())
                    .fold(0.0_f64, f64::max)
            };
            errors.push(dev(1.0).min(dev(-1.0)));
        }
        errors.sort_by(|x, y| x.partial_cmp(y).unwrap());
        samples.push((a, 0.5 * (errors[7] + errors[8])));
    }

    let fit = convergence_rate(&samples).unwrap();
    assert!(
        fit.slope >= 0.85,
        "field-vector error slope {:.4} below the first-order floor 0.85",
        fit.slope
    );
}

// ---------------------------------------------------------------------------
// sweep error-rate windows
// ---------------------------------------------------------------------------

/// Fitted interaction-error and index-error slopes of the standard radius
/// sweep stay inside their windows around 1−h−2t and t for three
/// exponent choices. Measured (seed 7): (0.3954, 0.1736), (0.3162,
/// 0.2268), (0.2767, 0.2562).
#[test]
fn sweep_error_rates_match_theory_windows() {
    let region = SupportBox::cube(Vec3::ZERO, 1.0).unwrap();
    for (h, t, separation) in [(0.2, 0.2, 1.5), (0.25, 0.25, 1.5), (0.1, 0.3, 2.0)] {
        let kappa = 2.4;
        let provider = HomogeneousProvider::new(WaveConfig::fibonacci(kappa, 6).unwrap());
        let mut config = SweepConfig::new(SWEEP_RADII.to_vec(), h, t, region.clone());
        config.separation_coeff = separation;
        config.separation_band = (0.05, 20.0);
        config.pair_count = 384;
        config.placement_seed = 7;
        config.model_residual = 1.0;
        config.residual_seed = 1007;
        let outcome = run_rate_sweep(&provider, &config).unwrap();

        let green_target = 1.0 - h - 2.0 * t;
        assert!(
            (outcome.green_rate.slope - green_target).abs() <= 0.15,
            "(h,t)=({h},{t}): interaction slope {:.4} outside {green_target} ± 0.15",
            outcome.green_rate.slope
        );
        assert!(
            (outcome.index_rate.slope - t).abs() <= 0.15,
            "(h,t)=({h},{t}): index slope {:.4} outside {t} ± 0.15",
            outcome.index_rate.slope
        );
    }
}

/// Identical sweep configurations reproduce identical outcomes.
#[test]
fn sweeps_are_deterministic() {
    let region = SupportBox::cube(Vec3::ZERO, 1.0).unwrap();
    let provider = HomogeneousProvider::new(WaveConfig::fibonacci(1.6, 6).unwrap());
    let mut config = SweepConfig::new(vec![0.04, 0.02, 0.01], 0.25, 0.25, region);
    config.pair_count = 4;
    config.placement_seed = 3;
    config.model_residual = 1.0;
    config.residual_seed = 17;
    let first = run_rate_sweep(&provider, &config).unwrap();
    let second = run_rate_sweep(&provider, &config).unwrap();
    assert_eq!(first, second);
}

// ---------------------------------------------------------------------------
// exact-data truncation law
// ---------------------------------------------------------------------------

/// On exact pair data with exact field vectors, the recovered interaction
/// equals g/(1−C²g²): the only error is the analytically known
/// second-order truncation of the two-site inverse.
#[test]
fn exact_data_interaction_error_is_the_closed_form_remainder() {
    let kappa = 1.6;
    let waves = WaveConfig::fibonacci(kappa, 6).unwrap();
    let provider = HomogeneousProvider::new(waves);
    let support = SupportBox::cube(Vec3::ZERO, 2.0).unwrap();
    let (a, h, t) = (0.02_f64, 0.25, 0.25);
    let cap = capacitance(a, h);
    let d = a.powf(t);

    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..5 {
        let anchor = Vec3::new(
            rng.gen_range(-0.7..0.7),
            rng.gen_range(-0.7..0.7),
            rng.gen_range(-0.7..0.7),
        );
        let axis = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalized();
        let (z1, z2) = (anchor, anchor + axis * d);
        let layout = InclusionLayout::new(
            vec![ProbeSite::pair(z1, z2)],
            LayoutScaling::new(a, h, t),
            &support,
        )
        .unwrap();
        let bundle = synthesize_measurements(&provider, &layout, None).unwrap();
        let site = &bundle.sites[0];

        let mut v1 =
            extract_total_field_vector(&site.singles[0].far_field, &bundle.background, cap, z1)
                .unwrap();
        let mut v2 =
            extract_total_field_vector(&site.singles[1].far_field, &bundle.background, cap, z2)
                .unwrap();
        align_signs(&mut v1, &mut v2).unwrap();
        let estimate = extract_green(
            &site.pair.as_ref().unwrap().far_field,
            &bundle.background,
            &v1,
            &v2,
            [z1, z2],
            cap,
        )
        .unwrap();

        let g = free_space_green(kappa, z1, z2);
        let c = Complex64::new(cap, 0.0);
        let expected = g / (Complex64::new(1.0, 0.0) - c * c * g * g);
        let rel = (estimate.value - expected).norm() / g.norm();
        assert!(
            rel <= 1e-10,
            "interaction estimate deviates from the closed-form value by {rel:.3e} relative"
        );
    }
}

// ---------------------------------------------------------------------------
// solver reciprocity and symmetry
// ---------------------------------------------------------------------------

/// The interior Green function of the volume solver is symmetric in its
/// arguments, to within ten times the solver tolerance. Measured worst
/// relative asymmetry: 7.3e-10.
#[test]
fn green_function_is_symmetric() {
    let kappa = 1.0;
    let medium = MediumSpec::smooth_bump(1.3, 1.0, Vec3::ZERO, 1.0, 1.0).unwrap();
    let params = SolverParams::default();
    let bound = 10.0 * params.tolerance;
    let solver = MediumSolver::new(medium, kappa, params).unwrap();
    let cell = solver.grid().cell_size();

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0usize;
    for _ in 0..6 {
        let draw = |rng: &mut ChaCha8Rng| {
            Vec3::new(
                rng.gen_range(-0.7..0.7),
                rng.gen_range(-0.7..0.7),
                rng.gen_range(-0.7..0.7),
            )
        };
        let x = draw(&mut rng);
        let z = draw(&mut rng);
        if x.dist(z) < cell {
            continue;
        }
        let from_z = solver.solve_green(z).unwrap();
        let from_x = solver.solve_green(x).unwrap();
        let g_xz = solver.green_function(&from_z, x).unwrap().value;
        let g_zx = solver.green_function(&from_x, z).unwrap().value;
        let rel = (g_xz - g_zx).norm() / g_xz.norm();
        assert!(rel <= bound, "Green asymmetry {rel:.3e} exceeds {bound:.1e}");
        checked += 1;
    }
    assert!(checked >= 5, "too few well-separated sample pairs: {checked}");
}

/// Far-field reciprocity: the backscatter matrix over any direction set is
/// symmetric (entry (i,j) equals entry (j,i)) to within ten times the
/// solver tolerance. Measured worst ratio: 3.5e-11.
#[test]
fn backscatter_matrix_is_reciprocal() {
    let kappa = 1.0;
    let medium = MediumSpec::smooth_bump(1.3, 1.0, Vec3::ZERO, 1.0, 1.0).unwrap();
    let params = SolverParams::default();
    let bound = 10.0 * params.tolerance;
    let solver = MediumSolver::new(medium, kappa, params).unwrap();
    let waves = WaveConfig::fibonacci(kappa, 6).unwrap();
    let matrix = solver.far_field_matrix(&waves).unwrap();

    let n = waves.directions().len();
    let scale = max_abs(&matrix.values);
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((matrix.values[i * n + j] - matrix.values[j * n + i]).norm());
        }
    }
    assert!(
        worst / scale <= bound,
        "backscatter asymmetry {:.3e} exceeds {bound:.1e}",
        worst / scale
    );
}

// ---------------------------------------------------------------------------
// Green singularity subtraction
// ---------------------------------------------------------------------------

/// Subtracting the phase-corrected free-space kernel from the interior
/// Green function leaves a bounded remainder as the evaluation point
/// approaches the source over a dyadic sequence — while the kernel itself
/// blows up. Measured remainders at r = 0.5, 0.25, 0.125: 0.0215, 0.0222,
/// 0.0225 against kernel magnitudes 0.159 → 0.637.
#[test]
fn green_singularity_subtraction_stays_bounded() {
    let kappa = 1.0;
    let medium = MediumSpec::smooth_bump(1.3, 1.0, Vec3::ZERO, 1.0, 1.0).unwrap();
    let solver = MediumSolver::new(medium, kappa, SolverParams::with_cells(64)).unwrap();
    let cell = solver.grid().cell_size();

    let z = Vec3::new(0.1, -0.05, 0.15);
    let n_z = bump_index(z);
    let from_z = solver.solve_green(z).unwrap();
    let axis = Vec3::new(1.0, 0.5, -0.3).normalized();

    let mut remainders: Vec<f64> = Vec::new();
    let mut r = 0.5_f64;
    let mut r_min = r;
    while r >= 4.0 * cell {
        let sample = solver.green_function(&from_z, z + axis * r).unwrap();
        let surrogate = (Complex64::i() * kappa * n_z * r).exp()
            / (4.0 * std::f64::consts::PI * r);
        remainders.push((sample.value - surrogate).norm());
        r_min = r;
        r *= 0.5;
    }
    assert!(remainders.len() >= 3, "dyadic sequence too short: {remainders:?}");

    let largest = remainders.iter().cloned().fold(0.0_f64, f64::max);
    assert!(
        largest <= 0.05,
        "singularity-subtracted remainder {largest:.4} exceeds the frozen bound 0.05"
    );
    // No blow-up: the remainder at the closest point stays comparable to
    // the farthest one while the kernel magnitude quadruples.
    let ratio = remainders.last().unwrap() / remainders.first().unwrap();
    assert!(ratio <= 1.5, "remainder grew by {ratio:.2}× toward the source");
    let kernel_at_min = 1.0 / (4.0 * std::f64::consts::PI * r_min);
    assert!(
        largest <= 0.1 * kernel_at_min,
        "remainder {largest:.4} is not small against the kernel {kernel_at_min:.4}"
    );
}

// ---------------------------------------------------------------------------
// end-to-end index tracking
// ---------------------------------------------------------------------------

/// Reconstructed indices track the true profile monotonically along a
/// radial line of the bump medium. Measured: 1.3012 → 1.1165 against true
/// 1.3000 → 1.1148, worst deviation 0.0904.
#[test]
fn index_estimates_track_the_bump_profile_radially() {
    let kappa = 1.0;
    let medium = MediumSpec::smooth_bump(1.3, 1.0, Vec3::ZERO, 1.0, 1.0).unwrap();
    let solver = MediumSolver::new(medium, kappa, SolverParams::default()).unwrap();
    let waves = WaveConfig::fibonacci(kappa, 6).unwrap();
    let provider =
        SolverProvider::new(solver, waves, GreenMode::Numerical { min_cell_multiple: 2.0 })
            .unwrap();

    let (a, h, t) = (0.01_f64, 0.1, 0.3);
    let d = 0.5 * a.powf(t);
    let mut scaling = LayoutScaling::new(a, h, t);
    scaling.separation_band = (0.25, 2.0);
    let support = SupportBox::cube(Vec3::ZERO, 1.0).unwrap();
    let sites: Vec<ProbeSite> = (0..5)
        .map(|k| {
            let anchor = Vec3::new(0.175 * k as f64, 0.0, 0.0);
            ProbeSite::pair(anchor, anchor + Vec3::new(0.0, d, 0.0))
        })
        .collect();
    let layout = InclusionLayout::new(sites, scaling, &support).unwrap();
    let bundle = synthesize_measurements(&provider, &layout, None).unwrap();
    let report = reconstruct_index_map(&bundle);
    assert!(report.failures.is_empty(), "failures: {:?}", report.failures);

    let mut previous = f64::INFINITY;
    for record in &report.records {
        let z = record.green.centers[0];
        let truth = bump_index(z);
        let estimate = record.index.value;
        assert!(
            (estimate - truth).norm() <= 0.12,
            "index at radius {:.3}: {estimate} vs true {truth:.4}",
            z.norm()
        );
        assert!(
            estimate.re < previous,
            "recovered profile must decrease radially, got {:.4} after {previous:.4}",
            estimate.re
        );
        previous = estimate.re;
    }
}

/// On the trivial background the recovered index of every probe pair sits
/// within the probe-separation scale of 1. Measured ratio to the κ·d
/// bound: 0.469.
#[test]
fn trivial_background_indices_land_within_the_separation_scale() {
    let kappa = 1.0;
    let medium = MediumSpec::constant_ball(1.0, 1.0, Vec3::ZERO, 1.0).unwrap();
    let solver = MediumSolver::new(medium, kappa, SolverParams::default()).unwrap();
    let waves = WaveConfig::fibonacci(kappa, 6).unwrap();
    let provider =
        SolverProvider::new(solver, waves, GreenMode::Numerical { min_cell_multiple: 2.0 })
            .unwrap();

    let (a, h, t) = (0.01_f64, 0.25, 0.25);
    let d = a.powf(t);
    let support = SupportBox::cube(Vec3::ZERO, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sites: Vec<ProbeSite> = (0..5)
        .map(|_| {
            let anchor = Vec3::new(
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-0.4..0.4),
            );
            let axis = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalized();
            ProbeSite::pair(anchor, anchor + axis * d)
        })
        .collect();
    let layout = InclusionLayout::new(sites, LayoutScaling::new(a, h, t), &support).unwrap();
    let bundle = synthesize_measurements(&provider, &layout, None).unwrap();
    let report = reconstruct_index_map(&bundle);
    assert!(report.failures.is_empty(), "failures: {:?}", report.failures);

    let bound = kappa * d;
    for record in &report.records {
        let deviation = (record.index.value - Complex64::new(1.0, 0.0)).norm();
        assert!(
            deviation <= bound,
            "trivial-background index off by {deviation:.3e}, bound {bound:.3e}"
        );
    }
}

// ---------------------------------------------------------------------------
// noise-model degeneracy
// ---------------------------------------------------------------------------

/// Silent noise, zero shift and no residual reproduce the noiseless
/// pipeline exactly.
#[test]
fn silent_noise_model_reproduces_the_noiseless_pipeline() {
    let kappa = 1.6;
    let waves = WaveConfig::fibonacci(kappa, 6).unwrap();
    let provider = HomogeneousProvider::new(waves);
    let support = SupportBox::cube(Vec3::ZERO, 2.0).unwrap();
    let (a, h, t) = (0.02_f64, 0.25, 0.25);
    let d = a.powf(t);

    let sites = vec![
        ProbeSite::pair(Vec3::new(0.1, 0.2, -0.3), Vec3::new(0.1, 0.2 + d, -0.3)),
        ProbeSite::pair(Vec3::new(-0.4, 0.0, 0.25), Vec3::new(-0.4 + d, 0.0, 0.25)),
    ];
    let layout = InclusionLayout::new(sites, LayoutScaling::new(a, h, t), &support).unwrap();

    let silent = NoiseModel { delta_background: 0.0, delta_single: 0.0, delta_pair: 0.0, seed: 9 };
    let no_shift = ShiftModel { eta: 0.0, t_tilde: t, seed: 9 };
    let noisy = noisy_reconstruct(&provider, &layout, &support, &silent, &no_shift, None).unwrap();

    let bundle = synthesize_measurements(&provider, &layout, None).unwrap();
    let clean = reconstruct_index_map(&bundle);

    assert_eq!(noisy, clean);
}
