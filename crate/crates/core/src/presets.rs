//! Named benchmark target mixtures.
//!
//! The main benchmark ("appendix_c") is a symmetric pair of anisotropic
//! Gaussians: means at (+/-3, 0, ..., 0) with weight 1/2 each, planar
//! covariance R(+/-30 deg) diag(7, 0.3) R(+/-30 deg)^T (the rotation sign
//! follows the mean sign, so the mixture is mirror symmetric under
//! x_0 -> -x_0), and identity covariance on every remaining coordinate.
//! The two elongated lobes point toward each other's side of the plane,
//! which separates the straight transport path, the curved minimum energy
//! path through the density saddle, and the finite-temperature principal
//! curves that interpolate between them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;

/// Names accepted by [`preset`].
pub const PRESET_NAMES: &[&str] = &["appendix_c", "standard_normal"];

/// Builds a named benchmark mixture in the given ambient dimension.
pub fn preset(name: &str, dim: usize) -> Result<GaussianMixture> {
    match name {
        "appendix_c" => benchmark_pair(dim),
        "standard_normal" => {
            if dim == 0 {
                return Err(Error::Config("dimension must be positive".into()));
            }
            Ok(GaussianMixture::standard_normal(dim))
        }
        other => Err(Error::Config(format!(
            "unknown preset {other:?}; available: {PRESET_NAMES:?}"
        ))),
    }
}

/// The symmetric two-lobe benchmark embedded in `dim >= 2` dimensions.
pub fn benchmark_pair(dim: usize) -> Result<GaussianMixture> {
    if dim < 2 {
        return Err(Error::Config(
            "the two-lobe benchmark needs at least 2 dimensions".into(),
        ));
    }
    let theta = std::f64::consts::FRAC_PI_6;
    let mut means = Vec::with_capacity(2);
    let mut covs = Vec::with_capacity(2);
    for sign in [1.0f64, -1.0] {
        let mut mean = DVector::zeros(dim);
        mean[0] = 3.0 * sign;
        means.push(mean);

        let (c, s) = ((sign * theta).cos(), (sign * theta).sin());
        let (l0, l1) = (7.0, 0.3);
        let mut cov = DMatrix::identity(dim, dim);
        cov[(0, 0)] = l0 * c * c + l1 * s * s;
        cov[(1, 1)] = l0 * s * s + l1 * c * c;
        cov[(0, 1)] = (l0 - l1) * c * s;
        cov[(1, 0)] = cov[(0, 1)];
        covs.push(cov);
    }
    GaussianMixture::new(vec![0.5, 0.5], means, covs)
}
