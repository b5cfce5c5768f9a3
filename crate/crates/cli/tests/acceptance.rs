//! Release gate for the workspace: one test per advertised guarantee.
//!
//! Each test prints a single line with the verdict, the measured numbers,
//! and the wall-clock budget it must meet, then asserts both. The checks
//! run against the analytic Gaussian-mixture oracle, the brute-force
//! landscape oracles, and the compiled `scorepath` binary, so a green run
//! certifies the numerical core and the command-line surface together.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use scorepath_core::fields::{check_velocity_score_relation, AnalyticGmmOracle, FieldOracle};
use scorepath_core::integrate::{integrate_ode, integrate_sde, GammaSchedule, OdeMethod, StepperConfig};
use scorepath_core::liegroup::{reparametrize_se3, reparametrize_so3, RigidMotion, Rotation};
use scorepath_core::mixture::GaussianMixture;
use scorepath_core::oracles::{
    hastie_principal_curve, locate_saddle_2d, GridSpec, HastieConfig, SaddleOutcome,
};
use scorepath_core::presets::preset;
use scorepath_core::reparam::{chord_spread, EuclideanReparam, Resampler, SplineKind};
use scorepath_core::schedule::Schedule;
use scorepath_core::scorenet::{
    relative_score_error_curve, train_score_model, LearnedScoreOracle, MlpScoreModel, TrainConfig,
};
use scorepath_core::stats::{polyline_hausdorff, two_sample_ks};
use scorepath_core::string::{
    encode_endpoints, init_string_geodesic, mep_residual, run_string, Regime, RegimeConfig,
    StringState,
};
use scorepath_core::walkers::{
    finite_temperature_step, run_finite_temperature_string, self_consistency_residual,
    WalkerEnsemble,
};

const G1_MAX_RESIDUAL: f64 = 1e-9;
const G2_MIN_P_VALUE: f64 = 0.01;
const G3_MAX_ABS_ERROR: f64 = 1e-2;
const G4_RESIDUAL_FRACTION: f64 = 0.05;
const G4_SADDLE_DISTANCE: f64 = 0.1;
const G5_ORDERING_SLACK: f64 = 1e-3;
const G6_MAX_HAUSDORFF: f64 = 0.15;
const G6_MAX_MEDIAN_RESIDUAL: f64 = 0.1;
const G7_DIP_FRACTION: f64 = 0.5;
const G7_SHELL_BAND: (f64, f64) = (0.9, 1.1);
const G8_MIN_ERROR_RATIO: f64 = 1.5;
const G9_MAX_SPREAD: f64 = 1e-6;

/// Prints the per-gate verdict line and enforces it. `budget` is wall-clock
/// seconds; `None` means the gate has no runtime requirement of its own.
fn conclude(id: u32, name: &str, budget: Option<f64>, started: Instant, pass: bool, detail: &str) {
    let elapsed = started.elapsed().as_secs_f64();
    let within = budget.map_or(true, |b| elapsed <= b);
    let verdict = if pass && within { "PASS" } else { "FAIL" };
    let budget_txt = budget.map_or("none".to_string(), |b| format!("{b:.0}s"));
    println!("gate {id:02} {name}: {verdict} in {elapsed:.1}s (budget {budget_txt}) {detail}");
    assert!(pass, "gate {id:02} {name}: {detail}");
    assert!(
        within,
        "gate {id:02} {name}: took {elapsed:.1}s, over the {budget_txt} budget"
    );
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_scorepath")
}

fn benchmark() -> (GaussianMixture, AnalyticGmmOracle) {
    let mixture = preset("appendix_c", 2).unwrap();
    let oracle = AnalyticGmmOracle::new(mixture.clone(), Schedule::Linear);
    (mixture, oracle)
}

/// Mixture whose mass concentrates on a circular arc: nine components
/// spaced 15 degrees apart on a radius-3 arc, each elongated along the
/// local tangent, so the density forms one smooth curved ridge with a
/// single, non-branching principal curve.
fn curved_ridge() -> GaussianMixture {
    let center = DVector::from_vec(vec![0.0, -1.0]);
    let radius = 3.0;
    let mut means = Vec::new();
    let mut covs = Vec::new();
    for k in 0..9 {
        let th = (30.0 + 15.0 * k as f64).to_radians();
        let normal = DVector::from_vec(vec![th.cos(), th.sin()]);
        let tangent = DVector::from_vec(vec![-th.sin(), th.cos()]);
        means.push(&center + &normal * radius);
        let sigma_t: f64 = if k == 0 || k == 8 { 0.45 } else { 0.6 };
        let sigma_r: f64 = 0.3;
        let cov: DMatrix<f64> = &tangent * tangent.transpose() * sigma_t.powi(2)
            + &normal * normal.transpose() * sigma_r.powi(2);
        covs.push(cov);
    }
    GaussianMixture::new(vec![1.0 / 9.0; 9], means, covs).unwrap()
}

/// Latent geodesic string between the two benchmark component means.
fn encoded_geodesic(
    oracle: &AnalyticGmmOracle,
    mixture: &GaussianMixture,
    n_images: usize,
) -> StringState {
    let a = mixture.means()[0].clone();
    let b = mixture.means()[1].clone();
    let (za, zb) = encode_endpoints(oracle, &a, &b, 400).unwrap();
    let images = init_string_geodesic(&za, &zb, n_images, SplineKind::Linear).unwrap();
    StringState::new(images, 0.0).unwrap()
}

fn peak_interior_log_density(mixture: &GaussianMixture, state: &StringState) -> f64 {
    state.images[1..state.images.len() - 1]
        .iter()
        .map(|x| mixture.log_density(x))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Holds the landscape at a fixed time and keeps stepping the walker loop,
/// re-pinning the endpoints, until the string forgets its transient; the
/// returned images are averaged over the stationary tail, which estimates
/// the fixed point without the single-walker jitter of one snapshot.
#[allow(clippy::too_many_arguments)]
fn relax_at_fixed_time(
    oracle: &dyn FieldOracle,
    regime: &RegimeConfig,
    start: &StringState,
    ensemble: &mut WalkerEnsemble,
    t_freeze: f64,
    seed: u64,
    burn_in: usize,
    kept: usize,
) -> Vec<DVector<f64>> {
    let dt = 1e-3;
    let stepper = StepperConfig {
        method: OdeMethod::Euler,
        n_steps: 1,
        t_start: t_freeze - dt,
        t_end: t_freeze,
        seed,
        ..StepperConfig::default()
    };
    let end_a = start.images[0].clone();
    let end_b = start.images[start.images.len() - 1].clone();
    let mut state = StringState::new(start.images.clone(), t_freeze - dt).unwrap();
    let mut sums = vec![DVector::<f64>::zeros(start.dim()); start.images.len()];
    for step in 0..burn_in + kept {
        let next = finite_temperature_step(oracle, &state, ensemble, regime, &stepper, 0).unwrap();
        let mut images = next.images;
        images[0] = end_a.clone();
        let last = images.len() - 1;
        images[last] = end_b.clone();
        if step >= burn_in {
            for (sum, img) in sums.iter_mut().zip(&images) {
                *sum += img;
            }
        }
        state = StringState::new(images, t_freeze - dt).unwrap();
    }
    sums.into_iter().map(|s| s / kept as f64).collect()
}

fn median(mut values: Vec<f64>) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn read_column(path: &Path, column: &str) -> Vec<f64> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let idx = reader
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == column)
        .unwrap_or_else(|| panic!("no column {column} in {}", path.display()));
    reader
        .records()
        .map(|r| r.unwrap()[idx].parse::<f64>().unwrap())
        .collect()
}

#[test]
fn gate_01_velocity_score_identity_across_schedules() {
    let started = Instant::now();
    let (mixture, _) = benchmark();
    let schedules = [Schedule::Linear, Schedule::Trigonometric, Schedule::Ou];
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let base = GaussianMixture::standard_normal(2);
    let points: Vec<DVector<f64>> = base
        .sample(1000, &mut rng)
        .into_iter()
        .map(|x| x * 4.0)
        .collect();
    let times: Vec<f64> = (0..points.len())
        .map(|_| rng.gen_range(0.05..=0.95))
        .collect();
    let mut worst: f64 = 0.0;
    for schedule in schedules {
        let oracle = AnalyticGmmOracle::new(mixture.clone(), schedule);
        for (x, &t) in points.iter().zip(&times) {
            let r = check_velocity_score_relation(&oracle, schedule, t, x).unwrap();
            worst = worst.max(r);
        }
    }
    conclude(
        1,
        "velocity and score satisfy the interpolation identity",
        Some(5.0),
        started,
        worst <= G1_MAX_RESIDUAL,
        &format!("max residual {worst:.3e} over 1000 points x 3 schedules (tol {G1_MAX_RESIDUAL:.0e})"),
    );
}

#[test]
fn gate_02_sde_marginals_match_the_exact_interpolation_law() {
    let started = Instant::now();
    let (mixture, oracle) = benchmark();
    let n = 100_000;
    let checkpoints = [0.25, 0.5, 0.75, 1.0];
    let gammas = [0.0, 0.5, 2.0];
    let steps_per_leg = 80;

    let mut reference: Vec<Vec<Vec<f64>>> = Vec::new();
    for (j, &t) in checkpoints.iter().enumerate() {
        let mut rng = ChaCha12Rng::seed_from_u64(7_000 + j as u64);
        let marginal = mixture.marginal_at(Schedule::Linear, t).unwrap();
        let draws = marginal.sample(n, &mut rng);
        reference.push(
            (0..2)
                .map(|c| draws.iter().map(|x| x[c]).collect())
                .collect(),
        );
    }

    let base = GaussianMixture::standard_normal(2);
    let mut worst_p = f64::INFINITY;
    let mut worst_case = String::new();
    for &g in &gammas {
        let gamma = if g == 0.0 {
            GammaSchedule::zero()
        } else {
            GammaSchedule::constant(g)
        };
        let mut rng = ChaCha12Rng::seed_from_u64(2_024);
        let starts = base.sample(n, &mut rng);
        let mut positions = starts;
        for (j, &t) in checkpoints.iter().enumerate() {
            let t_prev = if j == 0 { 0.0 } else { checkpoints[j - 1] };
            for (i, x) in positions.iter_mut().enumerate() {
                // The zero-noise member of the family is the probability
                // flow itself; integrate it with the second-order stepper
                // so the comparison isolates the stochastic branch's bias.
                let traj = if g == 0.0 {
                    let cfg = StepperConfig {
                        method: OdeMethod::Heun,
                        n_steps: steps_per_leg / 2,
                        t_start: t_prev,
                        t_end: t,
                        ..StepperConfig::default()
                    };
                    integrate_ode(&oracle, x, &cfg).unwrap()
                } else {
                    let cfg = StepperConfig {
                        method: OdeMethod::Euler,
                        n_steps: steps_per_leg,
                        t_start: t_prev,
                        t_end: t,
                        seed: 40_000_000 + i as u64 * 4 + j as u64,
                        ..StepperConfig::default()
                    };
                    integrate_sde(&oracle, x, &gamma, 1.0, &cfg).unwrap()
                };
                *x = traj.final_state().clone();
            }
            for coord in 0..2 {
                let projected: Vec<f64> = positions.iter().map(|x| x[coord]).collect();
                let (_, p) = two_sample_ks(&projected, &reference[j][coord]);
                if p < worst_p {
                    worst_p = p;
                    worst_case = format!("gamma={g}, t={t}, coord {coord}");
                }
            }
        }
    }
    conclude(
        2,
        "stochastic dynamics preserve the deterministic marginals",
        Some(120.0),
        started,
        worst_p > G2_MIN_P_VALUE,
        &format!("worst KS p {worst_p:.4} at {worst_case} (need > {G2_MIN_P_VALUE})"),
    );
}

#[test]
fn gate_03_likelihood_command_matches_the_closed_form() {
    let started = Instant::now();
    let (mixture, _) = benchmark();
    let mut rng = ChaCha12Rng::seed_from_u64(303);
    let points = mixture.sample(100, &mut rng);
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("points.csv");
    let mut body = String::from("x0,x1\n");
    for p in &points {
        body.push_str(&format!("{},{}\n", p[0], p[1]));
    }
    std::fs::write(&input, body).unwrap();

    let status = Command::new(bin())
        .args([
            "likelihood",
            "--preset",
            "appendix_c",
            "--dim",
            "2",
            "--steps",
            "1000",
            "--divergence",
            "exact",
            "--schedule",
            "linear",
            "--input",
        ])
        .arg(&input)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success(), "likelihood command failed");

    let estimates = read_column(&dir.path().join("likelihood.csv"), "log_likelihood");
    assert_eq!(estimates.len(), points.len());
    let max_err = points
        .iter()
        .zip(&estimates)
        .map(|(p, est)| (mixture.log_density(p) - est).abs())
        .fold(0.0f64, f64::max);
    conclude(
        3,
        "likelihood command reproduces the analytic density",
        Some(60.0),
        started,
        max_err < G3_MAX_ABS_ERROR,
        &format!("max abs error {max_err:.2e} over 100 points (tol {G3_MAX_ABS_ERROR:.0e})"),
    );
}

#[test]
fn gate_04_quenched_string_relaxes_onto_the_energy_path_and_saddle() {
    let started = Instant::now();
    let (mixture, oracle) = benchmark();
    let init = encoded_geodesic(&oracle, &mixture, 72);
    let regime = RegimeConfig {
        regime: Regime::Mep,
        gamma: GammaSchedule::windowed(8.0),
        temperature: 0.0,
        eta: 0.0,
        spline: SplineKind::Linear,
    };
    let leg1 = StepperConfig {
        method: OdeMethod::Euler,
        n_steps: 704,
        t_start: 0.0,
        t_end: 0.95,
        ..StepperConfig::default()
    };
    let mid = run_string(&oracle, init, &regime, &leg1).unwrap().state;

    let residuals = mep_residual(&oracle, &mid).unwrap();
    let max_residual = residuals.iter().cloned().fold(0.0f64, f64::max);
    let mean_score_norm = mid.images[1..mid.images.len() - 1]
        .iter()
        .map(|x| oracle.score(mid.t, x).norm())
        .sum::<f64>()
        / (mid.images.len() - 2) as f64;
    let tangency_ok = max_residual < G4_RESIDUAL_FRACTION * mean_score_norm;

    let leg2 = StepperConfig {
        method: OdeMethod::Euler,
        n_steps: 64,
        t_start: mid.t,
        t_end: 1.0,
        ..StepperConfig::default()
    };
    let fin = run_string(&oracle, mid, &regime, &leg2).unwrap().state;

    let grid = GridSpec::new([-8.0, -6.0], [8.0, 6.0], [321, 241]).unwrap();
    let logp = |x: f64, y: f64| mixture.log_density(&DVector::from_vec(vec![x, y]));
    let saddle = match locate_saddle_2d(&logp, &grid, [3.0, 0.0], [-3.0, 0.0], 1e-6).unwrap() {
        SaddleOutcome::Saddle { point, .. } => point,
        SaddleOutcome::NoBarrier { merge_level } => {
            panic!("benchmark basins merged without a barrier at level {merge_level}")
        }
    };
    let closest = fin
        .images
        .iter()
        .map(|x| (x - &saddle).norm())
        .fold(f64::INFINITY, f64::min);
    conclude(
        4,
        "quenched string is score-tangent and passes the saddle",
        Some(300.0),
        started,
        tangency_ok && closest < G4_SADDLE_DISTANCE,
        &format!(
            "max residual {max_residual:.4} vs {:.4} allowed; closest saddle approach {closest:.4} (tol {G4_SADDLE_DISTANCE})",
            G4_RESIDUAL_FRACTION * mean_score_norm
        ),
    );
}

#[test]
fn gate_05_path_likelihood_orders_with_gamma_and_temperature() {
    let started = Instant::now();
    let (mixture, oracle) = benchmark();
    let n_images = 72;

    // Deterministic branch: stronger score coupling must not lower the
    // best interior density of the delivered path.
    let gammas = [0.01, 0.5, 2.0, 8.0];
    let mut gamma_peaks = Vec::new();
    for &g in &gammas {
        let regime = RegimeConfig {
            regime: Regime::Mep,
            gamma: GammaSchedule::windowed(g),
            temperature: 0.0,
            eta: 0.0,
            spline: SplineKind::Linear,
        };
        let stepper = StepperConfig {
            method: OdeMethod::Euler,
            n_steps: 704,
            ..StepperConfig::default()
        };
        let init = encoded_geodesic(&oracle, &mixture, n_images);
        let fin = run_string(&oracle, init, &regime, &stepper).unwrap().state;
        gamma_peaks.push(peak_interior_log_density(&mixture, &fin));
    }
    let gamma_ok = gamma_peaks
        .windows(2)
        .all(|w| w[1] >= w[0] - G5_ORDERING_SLACK);

    // Stochastic branch: hotter sampling must not raise it. The string is
    // relaxed to stationarity where the noise window closes, averaged, and
    // carried to the end by pure transport.
    let temperatures = [0.1, 0.5, 0.9];
    let mut temp_peaks = Vec::new();
    for (i, &temp) in temperatures.iter().enumerate() {
        let regime = RegimeConfig {
            regime: Regime::PrincipalCurve,
            gamma: GammaSchedule::windowed(7.0),
            temperature: temp,
            eta: 0.05,
            spline: SplineKind::Linear,
        };
        let tracking = StepperConfig {
            method: OdeMethod::Euler,
            n_steps: 512,
            t_start: 0.0,
            t_end: 0.95,
            seed: 500 + i as u64,
            ..StepperConfig::default()
        };
        let init = encoded_geodesic(&oracle, &mixture, n_images);
        let run = run_finite_temperature_string(&oracle, init, &regime, &tracking).unwrap();
        let mut ensemble = run.ensemble;
        let averaged = relax_at_fixed_time(
            &oracle,
            &regime,
            &run.state,
            &mut ensemble,
            0.95,
            600 + i as u64,
            4_000,
            16_000,
        );
        let settled = StringState::new(averaged, 0.95).unwrap();
        let transport = RegimeConfig {
            regime: Regime::Transport,
            gamma: GammaSchedule::zero(),
            temperature: 0.0,
            eta: 0.0,
            spline: SplineKind::Linear,
        };
        let leg = StepperConfig {
            method: OdeMethod::Euler,
            n_steps: 64,
            t_start: 0.95,
            t_end: 1.0,
            ..StepperConfig::default()
        };
        let fin = run_string(&oracle, settled, &transport, &leg).unwrap().state;
        temp_peaks.push(peak_interior_log_density(&mixture, &fin));
    }
    let temp_ok = temp_peaks
        .windows(2)
        .all(|w| w[1] <= w[0] + G5_ORDERING_SLACK);

    conclude(
        5,
        "interior likelihood rises with gamma and falls with temperature",
        Some(900.0),
        started,
        gamma_ok && temp_ok,
        &format!("gamma peaks {gamma_peaks:.4?}; temperature peaks {temp_peaks:.4?} (slack {G5_ORDERING_SLACK})"),
    );
}

#[test]
fn gate_06_unit_temperature_string_is_a_principal_curve() {
    let started = Instant::now();
    let mixture = curved_ridge();
    let oracle = AnalyticGmmOracle::new(mixture.clone(), Schedule::Linear);
    let n_images = 21;
    // Anchors sit past the end components along the outward tangents, so
    // almost no mass projects beyond the pinned endpoints and the arc is
    // the unique self-consistent curve between them.
    let th_a = 30.0f64.to_radians();
    let th_b = 150.0f64.to_radians();
    let out_a = DVector::from_vec(vec![th_a.sin(), -th_a.cos()]);
    let out_b = DVector::from_vec(vec![-th_b.sin(), th_b.cos()]);
    let a = mixture.means()[0].clone() + &out_a * 0.9;
    let b = mixture.means()[8].clone() + &out_b * 0.9;
    let (za, zb) = encode_endpoints(&oracle, &a, &b, 400).unwrap();
    let images = init_string_geodesic(&za, &zb, n_images, SplineKind::Linear).unwrap();
    let init = StringState::new(images, 0.0).unwrap();

    let tracking_regime = RegimeConfig {
        regime: Regime::PrincipalCurve,
        gamma: GammaSchedule::constant(2.0),
        temperature: 1.0,
        eta: 0.05,
        spline: SplineKind::Linear,
    };
    let tracking = StepperConfig {
        method: OdeMethod::Euler,
        n_steps: 2000,
        seed: 61,
        ..StepperConfig::default()
    };
    let run = run_finite_temperature_string(&oracle, init, &tracking_regime, &tracking).unwrap();
    // Re-seat the walkers on the tracked images: the tracking sweep can
    // leave a walker outside its own cell, where every proposal is
    // rejected and the attached image stops responding.
    let mut ensemble = WalkerEnsemble::new(&run.state.images, 62);
    // Same stationary law, faster mixing and gentler averaging for the
    // frozen-landscape polish.
    let polish_regime = RegimeConfig {
        gamma: GammaSchedule::constant(4.0),
        eta: 0.02,
        ..tracking_regime
    };
    let averaged = relax_at_fixed_time(
        &oracle,
        &polish_regime,
        &run.state,
        &mut ensemble,
        1.0,
        62,
        8_000,
        8_000,
    );
    let string_state = StringState::new(averaged.clone(), 1.0).unwrap();

    let mut rng = ChaCha12Rng::seed_from_u64(63);
    let samples = scorepath_core::walkers::sample_tempered(&mixture, 1.0, 100_000, &mut rng).unwrap();
    let reference = hastie_principal_curve(
        &samples,
        &averaged,
        &HastieConfig {
            n_iterations: 50,
            pin_endpoints: true,
            smoothing: 0.25,
        },
    )
    .unwrap();

    let hausdorff = polyline_hausdorff(&averaged, &reference.points);
    let cells = self_consistency_residual(&mixture, &string_state, 1.0, 200_000, 64).unwrap();
    let residuals: Vec<f64> = cells.iter().filter_map(|c| c.residual).collect();
    let med = median(residuals);
    conclude(
        6,
        "unit-temperature string matches the independent principal curve",
        Some(600.0),
        started,
        hausdorff < G6_MAX_HAUSDORFF && med < G6_MAX_MEDIAN_RESIDUAL,
        &format!(
            "Hausdorff {hausdorff:.4} (tol {G6_MAX_HAUSDORFF}); median cell residual {med:.4} (tol {G6_MAX_MEDIAN_RESIDUAL})"
        ),
    );
}

#[test]
fn gate_07_high_dimension_separates_ridge_paths_from_typical_paths() {
    let started = Instant::now();
    let d = 1000;
    let sqrt_d = (d as f64).sqrt();
    let mixture = preset("standard_normal", d).unwrap();
    let oracle = AnalyticGmmOracle::new(mixture.clone(), Schedule::Trigonometric);

    let mut a = DVector::zeros(d);
    a[0] = sqrt_d;
    let mut b = DVector::zeros(d);
    b[1] = sqrt_d;
    let (za, zb) = encode_endpoints(&oracle, &a, &b, 400).unwrap();
    let images = init_string_geodesic(&za, &zb, 31, SplineKind::Linear).unwrap();

    let transport = RegimeConfig {
        regime: Regime::Transport,
        gamma: GammaSchedule::zero(),
        temperature: 0.0,
        eta: 0.0,
        spline: SplineKind::Linear,
    };
    let mep = RegimeConfig {
        regime: Regime::Mep,
        gamma: GammaSchedule::windowed(2.0),
        ..transport.clone()
    };
    let stepper = StepperConfig {
        method: OdeMethod::Euler,
        n_steps: 400,
        ..StepperConfig::default()
    };
    let transport_final = run_string(
        &oracle,
        StringState::new(images.clone(), 0.0).unwrap(),
        &transport,
        &stepper,
    )
    .unwrap()
    .state;
    let mep_final = run_string(
        &oracle,
        StringState::new(images, 0.0).unwrap(),
        &mep,
        &stepper,
    )
    .unwrap()
    .state;

    let norms = |s: &StringState| -> Vec<f64> { s.images.iter().map(|x| x.norm()).collect() };
    let transport_norms = norms(&transport_final);
    let in_band = transport_norms
        .iter()
        .all(|&r| r >= G7_SHELL_BAND.0 * sqrt_d && r <= G7_SHELL_BAND.1 * sqrt_d);
    let mep_min = mep_final.images[1..mep_final.images.len() - 1]
        .iter()
        .map(|x| x.norm())
        .fold(f64::INFINITY, f64::min);
    conclude(
        7,
        "in d=1000 the score path leaves the shell the transport path keeps",
        Some(600.0),
        started,
        in_band && mep_min < G7_DIP_FRACTION * sqrt_d,
        &format!(
            "transport norms within [{:.1}, {:.1}] of shell {:.1}; score-path min norm {:.2} (need < {:.2})",
            transport_norms.iter().cloned().fold(f64::INFINITY, f64::min),
            transport_norms.iter().cloned().fold(0.0f64, f64::max),
            sqrt_d,
            mep_min,
            G7_DIP_FRACTION * sqrt_d
        ),
    );
}

#[test]
fn gate_08_learned_score_error_concentrates_near_the_data_end() {
    let started = Instant::now();
    let (mixture, _) = benchmark();
    let mut model = MlpScoreModel::with_default_hidden(2, 808).unwrap();
    let cfg = TrainConfig {
        iterations: 4_000,
        batch_size: 128,
        seed: 808,
        ..TrainConfig::default()
    };
    train_score_model(&mut model, &mixture, Schedule::Linear, &cfg).unwrap();
    let learned = LearnedScoreOracle::new(model, Schedule::Linear).unwrap();

    let mid_times = [0.4, 0.45, 0.5, 0.55, 0.6];
    let late_times = [0.9, 0.925, 0.95, 0.975, 1.0];
    let mean_error = |times: &[f64]| -> f64 {
        let pts =
            relative_score_error_curve(&learned, &mixture, Schedule::Linear, times, 2_000, 881)
                .unwrap();
        pts.iter().map(|p| p.mean_relative_error).sum::<f64>() / pts.len() as f64
    };
    let mid = mean_error(&mid_times);
    let late = mean_error(&late_times);
    let ratio = late / mid;
    conclude(
        8,
        "trained model degrades toward the data end of time",
        Some(1200.0),
        started,
        ratio >= G8_MIN_ERROR_RATIO,
        &format!(
            "mean relative error {late:.3} on t in [0.9,1] vs {mid:.3} on [0.4,0.6]; ratio {ratio:.2} (need >= {G8_MIN_ERROR_RATIO})"
        ),
    );
}

#[test]
fn gate_09_reparametrization_invariants_hold() {
    let started = Instant::now();

    // Euclidean: equal chords, exact endpoints, idempotence.
    let path: Vec<DVector<f64>> = (0..9)
        .map(|i| {
            let s = i as f64 * 0.5;
            DVector::from_vec(vec![s.cos(), s.sin(), 0.3 * s])
        })
        .collect();
    let reparam = EuclideanReparam::new(SplineKind::Linear);
    let out = reparam.resample(&path, 41).unwrap();
    let euclid_ok = out[0] == path[0]
        && out[40] == path[8]
        && chord_spread(&out) <= G9_MAX_SPREAD
        && reparam.resample(&out, 41).unwrap() == out;

    // Rotations: equal angular steps, preserved endpoints, exp/log round
    // trip, and left equivariance.
    let mut rng = ChaCha12Rng::seed_from_u64(909);
    let mut axis_angle = |scale: f64| -> Vector3<f64> {
        Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ) * scale
    };
    let mut rot_path = vec![Rotation::exp(&axis_angle(0.4))];
    for _ in 0..5 {
        let w = axis_angle(0.9);
        rot_path.push(Rotation::exp(&w).compose(rot_path.last().unwrap()));
    }
    let rot_out = reparametrize_so3(&rot_path, 33).unwrap();
    let frob = |a: &Rotation, b: &Rotation| (a.matrix() - b.matrix()).norm();
    let angles: Vec<f64> = rot_out
        .windows(2)
        .map(|w| w[0].distance(&w[1]))
        .collect();
    let spread = |lengths: &[f64]| -> f64 {
        let max = lengths.iter().cloned().fold(0.0f64, f64::max);
        let min = lengths.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min - 1.0
    };
    let g = Rotation::exp(&axis_angle(2.0));
    let moved: Vec<Rotation> = rot_path.iter().map(|r| g.compose(r)).collect();
    let moved_out = reparametrize_so3(&moved, 33).unwrap();
    let so3_ok = frob(&rot_out[0], &rot_path[0]) < 1e-12
        && frob(&rot_out[32], &rot_path[5]) < 1e-12
        && spread(&angles) <= G9_MAX_SPREAD
        && rot_out
            .iter()
            .all(|r| frob(&Rotation::exp(&r.log()), r) < 1e-12)
        && rot_out
            .iter()
            .zip(&moved_out)
            .all(|(x, y)| frob(&g.compose(x), y) < 1e-9);

    // Rigid motions: equal mixed-norm steps and left equivariance.
    let mut pose_path = vec![RigidMotion::identity()];
    for _ in 0..4 {
        let w = axis_angle(0.8);
        let step = axis_angle(1.0);
        let prev = *pose_path.last().unwrap();
        pose_path.push(RigidMotion::new(
            Rotation::exp(&w).compose(&prev.rotation),
            prev.translation + step,
        ));
    }
    let pose_out = reparametrize_se3(&pose_path, 25).unwrap();
    let mixed: Vec<f64> = pose_out
        .windows(2)
        .map(|w| {
            let angle = w[1].rotation.compose(&w[0].rotation.inverse()).angle();
            let shift = (w[1].translation - w[0].translation).norm();
            (shift * shift + angle * angle).sqrt()
        })
        .collect();
    let gm = RigidMotion::new(Rotation::exp(&axis_angle(2.0)), Vector3::new(1.5, -0.5, 2.0));
    let pose_moved: Vec<RigidMotion> = pose_path.iter().map(|m| gm.compose(m)).collect();
    let pose_moved_out = reparametrize_se3(&pose_moved, 25).unwrap();
    let se3_ok = frob(&pose_out[0].rotation, &pose_path[0].rotation) < 1e-12
        && (pose_out[24].translation - pose_path[4].translation).norm() < 1e-12
        && spread(&mixed) <= G9_MAX_SPREAD
        && pose_out.iter().zip(&pose_moved_out).all(|(x, y)| {
            let gx = gm.compose(x);
            frob(&gx.rotation, &y.rotation) < 1e-9
                && (gx.translation - y.translation).norm() < 1e-9
        });

    conclude(
        9,
        "path resamplers keep their geometric invariants",
        Some(30.0),
        started,
        euclid_ok && so3_ok && se3_ok,
        &format!("euclidean {euclid_ok}, rotations {so3_ok}, rigid motions {se3_ok} at spacing tol {G9_MAX_SPREAD:.0e}"),
    );
}

#[test]
fn gate_10_cli_runs_reproduce_bitwise_from_their_manifest() {
    let started = Instant::now();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let run = |args: &[&str], out: &Path| {
        let status = Command::new(bin()).args(args).arg("--out").arg(out).status().unwrap();
        assert!(status.success(), "scorepath {args:?} failed");
    };
    run(
        &[
            "string-run",
            "--preset",
            "appendix_c",
            "--dim",
            "2",
            "--regime",
            "principal_curve",
            "--gamma",
            "2",
            "--temperature",
            "0.5",
            "--images",
            "15",
            "--steps",
            "120",
            "--eta",
            "0.1",
            "--seed",
            "42",
        ],
        dir_a.path(),
    );
    let manifest = dir_a.path().join("manifest.json");
    run(
        &["string-run", "--config", manifest.to_str().unwrap()],
        dir_b.path(),
    );
    let mut identical = true;
    let mut detail = Vec::new();
    for name in ["string.csv", "diagnostics.csv", "walkers.csv", "manifest.json"] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        identical &= a == b;
        detail.push(format!("{name}: {}", if a == b { "identical" } else { "DIFFERS" }));
    }
    conclude(
        10,
        "a manifest replays a run byte for byte",
        None,
        started,
        identical,
        &detail.join(", "),
    );
}
