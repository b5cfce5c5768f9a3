//! Deterministic fixtures shared by the criterion benchmarks in `benches/`.
//!
//! The paths are closed-form curves rather than random draws so that two
//! benchmark runs time exactly the same inputs and the numbers stay
//! comparable across machines and commits.

use nalgebra::{DVector, Vector3};
use scorepath_core::liegroup::Rotation;

/// Points along a helix embedded in `dim >= 3` dimensions: the first two
/// coordinates wind twice around the unit circle, the third climbs
/// linearly, and the remaining coordinates carry a small coordinate-dependent
/// drift so no block of the vector is trivially zero.
pub fn helix_path(n_points: usize, dim: usize) -> Vec<DVector<f64>> {
    assert!(dim >= 3, "the helix fixture needs at least 3 dimensions");
    assert!(n_points >= 2, "a path needs at least 2 points");
    let total_angle = 4.0 * std::f64::consts::PI;
    (0..n_points)
        .map(|i| {
            let s = total_angle * i as f64 / (n_points - 1) as f64;
            DVector::from_fn(dim, |j, _| match j {
                0 => s.cos(),
                1 => s.sin(),
                2 => 0.25 * s,
                _ => 0.05 * s * (j as f64).sin(),
            })
        })
        .collect()
}

/// A smooth non-geodesic path of rotations: the rotation angle grows
/// linearly while the axis precesses, so chord lengths vary along the path
/// and resampling has real work to do.
pub fn rotation_path(n_points: usize) -> Vec<Rotation> {
    assert!(n_points >= 2, "a path needs at least 2 points");
    (0..n_points)
        .map(|i| {
            let s = i as f64 / (n_points - 1) as f64;
            let polar = 0.4 + 0.3 * s;
            let azimuth = 1.7 * s;
            let axis = Vector3::new(
                polar.sin() * azimuth.cos(),
                polar.sin() * azimuth.sin(),
                polar.cos(),
            );
            Rotation::exp(&(axis * (2.0 * s)))
        })
        .collect()
}
