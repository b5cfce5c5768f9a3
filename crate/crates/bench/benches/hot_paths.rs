//! Timings for the kernels that dominate every run: analytic field
//! evaluation, one string relaxation step, and path resampling in flat and
//! rotation-group geometry. Run with `cargo bench -p scorepath-bench`.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;

use scorepath_bench::{helix_path, rotation_path};
use scorepath_core::fields::{AnalyticGmmOracle, FieldOracle};
use scorepath_core::integrate::{GammaSchedule, StepperConfig};
use scorepath_core::liegroup::reparametrize_so3;
use scorepath_core::presets::preset;
use scorepath_core::reparam::{EuclideanReparam, Resampler, SplineKind};
use scorepath_core::schedule::Schedule;
use scorepath_core::string::{init_string_geodesic, string_step, RegimeConfig, StringState};

/// One mixture-field evaluation at a generic off-axis point, in the planar
/// benchmark dimension and in a high ambient dimension where the dense
/// covariance solves dominate.
fn field_evaluation(c: &mut Criterion) {
    let mut group = c.benchmark_group("field_eval");
    for dim in [2usize, 64] {
        let mixture = preset("appendix_c", dim).unwrap();
        let oracle = AnalyticGmmOracle::new(mixture, Schedule::Linear);
        let x = DVector::from_fn(dim, |j, _| 0.3 * (j as f64 + 1.0).sin());
        group.bench_function(format!("velocity_and_score_d{dim}"), |b| {
            b.iter(|| oracle.velocity_and_score(black_box(0.7), black_box(&x)))
        });
    }
    let oracle = AnalyticGmmOracle::new(preset("appendix_c", 2).unwrap(), Schedule::Linear);
    let x = DVector::from_vec(vec![0.4, -0.8]);
    group.bench_function("log_density_d2", |b| {
        b.iter(|| oracle.log_density(black_box(0.7), black_box(&x)))
    });
    group.finish();
}

/// One damped-string update of 71 images at mid-trajectory: interior drift
/// plus endpoint transport plus the equal-arc-length resample.
fn string_relaxation(c: &mut Criterion) {
    let mixture = preset("appendix_c", 2).unwrap();
    let (a, b) = (mixture.means()[0].clone(), mixture.means()[1].clone());
    let oracle = AnalyticGmmOracle::new(mixture, Schedule::Linear);
    let images = init_string_geodesic(&a, &b, 71, SplineKind::Cubic).unwrap();
    let stepper = StepperConfig {
        n_steps: 704,
        ..StepperConfig::default()
    };
    let k = 352;
    let state = StringState::new(images, stepper.time_at(k)).unwrap();
    let regime = RegimeConfig::mep(GammaSchedule::windowed(8.0));
    c.bench_function("mep_string_step_d2_n71", |bch| {
        bch.iter(|| string_step(&oracle, black_box(&state), &regime, &stepper, k).unwrap())
    });
}

/// Equal-arc-length resampling of a 64-point helix in 16 dimensions, with
/// both spline orders, and geodesic resampling of a rotation path.
fn path_resampling(c: &mut Criterion) {
    let path = helix_path(64, 16);
    let mut group = c.benchmark_group("resample");
    for (label, spline) in [("linear", SplineKind::Linear), ("cubic", SplineKind::Cubic)] {
        let resampler = EuclideanReparam::new(spline);
        group.bench_function(format!("euclidean_{label}_64pts_d16"), |b| {
            b.iter(|| resampler.resample(black_box(&path), 64).unwrap())
        });
    }
    let rotations = rotation_path(33);
    group.bench_function("so3_33_to_65", |b| {
        b.iter(|| reparametrize_so3(black_box(&rotations), 65).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    field_evaluation,
    string_relaxation,
    path_resampling
);
criterion_main!(benches);
