//! Gaussian mixture targets.
//!
//! The data distribution is a mixture sum_k w_k N(mu_k, Sigma_k). Under an
//! interpolation schedule the time-t marginal stays a mixture with the same
//! weights and per-component moments
//!
//! ```text
//!     mean_k(t) = beta_t * mu_k,
//!     cov_k(t)  = alpha_t^2 * I + beta_t^2 * Sigma_k,
//! ```
//!
//! because conditioning on the component makes I_t a sum of two independent
//! Gaussians. This closed form is what makes the mixture an exact reference
//! for every field quantity downstream.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::Schedule;
use crate::stats::logsumexp;

const WEIGHT_SUM_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

/// A validated Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
}

/// Wire format: plain nested arrays.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureWire {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<Vec<f64>>>,
}

impl GaussianMixture {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        if means.len() != k || covariances.len() != k {
            return Err(Error::Config(format!(
                "component count mismatch: {k} weights, {} means, {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Config(format!("weights sum to {sum}, expected 1")));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        for (i, m) in means.iter().enumerate() {
            if m.len() != d {
                return Err(Error::Config(format!(
                    "mean {i} has dimension {}, expected {d}",
                    m.len()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("mean {i} has non-finite entries")));
            }
        }
        for (i, c) in covariances.iter().enumerate() {
            if c.nrows() != d || c.ncols() != d {
                return Err(Error::Config(format!(
                    "covariance {i} is {}x{}, expected {d}x{d}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("covariance {i} has non-finite entries")));
            }
            let asym = (c - c.transpose()).abs().max();
            if asym > SYMMETRY_TOL {
                return Err(Error::Config(format!(
                    "covariance {i} asymmetric by {asym}"
                )));
            }
            let eig = c.clone().symmetric_eigen();
            let min_eig = eig.eigenvalues.min();
            if min_eig <= 0.0 {
                return Err(Error::Config(format!(
                    "covariance {i} has non-positive eigenvalue {min_eig}"
                )));
            }
        }
        Ok(Self {
            weights,
            means,
            covariances,
        })
    }

    /// Single-component mixture.
    pub fn single(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![covariance])
    }

    /// Standard normal in d dimensions.
    pub fn standard_normal(d: usize) -> Self {
        Self::new(vec![1.0], vec![DVector::zeros(d)], vec![DMatrix::identity(d, d)])
            .expect("standard normal is always valid")
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let wire: MixtureWire = serde_json::from_str(json)?;
        let means = wire.means.into_iter().map(DVector::from_vec).collect();
        let covariances = wire
            .covariances
            .into_iter()
            .map(|rows| {
                let n = rows.len();
                let flat: Vec<f64> = rows.into_iter().flatten().collect();
                if flat.len() != n * n {
                    return Err(Error::Config("ragged covariance rows".into()));
                }
                Ok(DMatrix::from_row_slice(n, n, &flat))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(wire.weights, means, covariances)
    }

    pub fn to_json(&self) -> String {
        let wire = MixtureWire {
            weights: self.weights.clone(),
            means: self.means.iter().map(|m| m.iter().cloned().collect()).collect(),
            covariances: self
                .covariances
                .iter()
                .map(|c| {
                    (0..c.nrows())
                        .map(|i| c.row(i).iter().cloned().collect())
                        .collect()
                })
                .collect(),
        };
        serde_json::to_string_pretty(&wire).expect("mixture serialization cannot fail")
    }

    /// Time-t marginal of the interpolation as a mixture in its own right.
    pub fn marginal_at(&self, schedule: Schedule, t: f64) -> Result<GaussianMixture> {
        Schedule::check_time(t)?;
        let a2 = schedule.alpha(t).powi(2);
        let b = schedule.beta(t);
        let b2 = b * b;
        let d = self.dim();
        let eye = DMatrix::identity(d, d);
        let means = self.means.iter().map(|m| m * b).collect();
        let covariances = self
            .covariances
            .iter()
            .map(|c| &eye * a2 + c * b2)
            .collect();
        GaussianMixture::new(self.weights.clone(), means, covariances)
    }

    /// Exact log density, evaluated with per-component Cholesky solves.
    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = self.dim() as f64;
        let terms: Vec<f64> = (0..self.n_components())
            .map(|k| {
                let chol = self.covariances[k]
                    .clone()
                    .cholesky()
                    .expect("validated covariance is positive definite");
                let diff = x - &self.means[k];
                let sol = chol.solve(&diff);
                let logdet: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
                self.weights[k].ln() - 0.5 * diff.dot(&sol)
                    - 0.5 * logdet
                    - 0.5 * d * (2.0 * std::f64::consts::PI).ln()
            })
            .collect();
        logsumexp(&terms)
    }

    /// Draws n samples. Component choice and Gaussian draws both come from
    /// the supplied generator, so results are reproducible per seed.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<DVector<f64>> {
        let factors: Vec<DMatrix<f64>> = self
            .covariances
            .iter()
            .map(|c| {
                c.clone()
                    .cholesky()
                    .expect("validated covariance is positive definite")
                    .l()
            })
            .collect();
        let d = self.dim();
        (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut k = self.weights.len() - 1;
                for (i, w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                let z = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
                &self.means[k] + &factors[k] * z
            })
            .collect()
    }
}
