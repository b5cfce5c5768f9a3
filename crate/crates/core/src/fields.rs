//! Velocity and score fields of the interpolation marginals.
//!
//! For the interpolation I_t = alpha_t x0 + beta_t x1 the two central
//! fields are the velocity b_t(x) = E[dI_t/dt | I_t = x], which transports
//! the marginals through the probability flow ODE, and the score
//! s_t(x) = grad log rho_t(x). They satisfy
//!
//! ```text
//!     s_t(x) = (beta_t b_t(x) - dbeta_t x) / (alpha_t w_t),
//!     w_t    = alpha_t dbeta_t - dalpha_t beta_t,
//! ```
//!
//! which lets either field be recovered from the other away from the
//! endpoint times where the coefficients degenerate (beta_0 = 0 for the
//! score-to-velocity direction, alpha_1 w_1 = 0 for some schedules in the
//! other). For Gaussian mixture targets both fields have closed forms: with
//! component moments m_k = beta mu_k and C_k = alpha^2 I + beta^2 Sigma_k,
//!
//! ```text
//!     s_t(x) = sum_k r_k(x) * (-C_k^-1 (x - m_k)),
//!     b_t(x) = sum_k r_k(x) * (dbeta mu_k + (d(alpha)alpha I + d(beta)beta Sigma_k) C_k^-1 (x - m_k)),
//! ```
//!
//! where r_k are the posterior component responsibilities, computed with
//! log-sum-exp. Writing Sigma_k = Q_k diag(lambda) Q_k^T once at
//! construction makes every C_k(t) diagonal in the same fixed basis, so no
//! per-time factorization is ever required and evaluation is pure. The
//! endpoint values come out of the same expressions directly (no 0/0), so
//! no special casing is needed for analytic targets.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::schedule::Schedule;
use crate::stats::logsumexp;

/// Denominators below this magnitude make a field conversion singular.
pub const SINGULAR_COEFF_TOL: f64 = 1e-12;

/// Provenance of a field oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    AnalyticGmm,
    LearnedNet,
    UserSupplied,
}

/// A source of velocity and score fields on [0, 1] x R^d.
///
/// Evaluations must be pure; implementors are shared freely across threads.
pub trait FieldOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn kind(&self) -> OracleKind;

    fn velocity(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;

    fn score(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;

    /// Both fields at once. Override when a shared evaluation is cheaper.
    fn velocity_and_score(&self, t: f64, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (self.velocity(t, x), self.score(t, x))
    }

    /// Exact divergence of the velocity field, when available.
    fn divergence(&self, _t: f64, _x: &DVector<f64>) -> Option<f64> {
        None
    }

    /// Exact log density of the time-t marginal, when available.
    fn log_density(&self, _t: f64, _x: &DVector<f64>) -> Option<f64> {
        None
    }
}

/// One mixture component, eigendecomposed once.
#[derive(Debug, Clone)]
struct Prepared {
    mean: DVector<f64>,
    /// Eigenvalues of Sigma (or its diagonal when `basis` is None).
    eigvals: DVector<f64>,
    /// Orthonormal eigenbasis; None when Sigma is already diagonal.
    basis: Option<DMatrix<f64>>,
}

impl Prepared {
    fn to_local(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.basis {
            Some(q) => q.transpose() * v,
            None => v.clone(),
        }
    }

    fn from_local(&self, v: DVector<f64>) -> DVector<f64> {
        match &self.basis {
            Some(q) => q * v,
            None => v,
        }
    }
}

/// Everything the closed form yields at one (t, x).
#[derive(Debug, Clone)]
pub struct FieldPoint {
    pub log_density: f64,
    pub score: DVector<f64>,
    pub velocity: DVector<f64>,
    pub divergence: f64,
}

/// Exact fields of a Gaussian mixture target under a schedule.
#[derive(Debug, Clone)]
pub struct AnalyticGmmOracle {
    schedule: Schedule,
    mixture: GaussianMixture,
    log_weights: Vec<f64>,
    comps: Vec<Prepared>,
}

impl AnalyticGmmOracle {
    pub fn new(mixture: GaussianMixture, schedule: Schedule) -> Self {
        let log_weights = mixture.weights().iter().map(|w| w.ln()).collect();
        let comps = mixture
            .means()
            .iter()
            .zip(mixture.covariances())
            .map(|(mean, cov)| {
                let d = cov.nrows();
                let off_diagonal = (0..d)
                    .flat_map(|i| (0..d).map(move |j| (i, j)))
                    .filter(|(i, j)| i != j)
                    .map(|(i, j)| cov[(i, j)].abs())
                    .fold(0.0f64, f64::max);
                if off_diagonal == 0.0 {
                    Prepared {
                        mean: mean.clone(),
                        eigvals: cov.diagonal(),
                        basis: None,
                    }
                } else {
                    let eig = cov.clone().symmetric_eigen();
                    Prepared {
                        mean: mean.clone(),
                        eigvals: eig.eigenvalues,
                        basis: Some(eig.eigenvectors),
                    }
                }
            })
            .collect();
        Self {
            schedule,
            mixture,
            log_weights,
            comps,
        }
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    pub fn mixture(&self) -> &GaussianMixture {
        &self.mixture
    }

    /// Single pass producing density, score, velocity, and divergence.
    pub fn evaluate(&self, t: f64, x: &DVector<f64>) -> FieldPoint {
        debug_assert!((0.0..=1.0).contains(&t), "t = {t} outside [0, 1]");
        let d = self.dim();
        let a2 = self.schedule.alpha(t).powi(2);
        let b = self.schedule.beta(t);
        let b2 = b * b;
        let bdot = self.schedule.beta_dot(t);
        let aad = self.schedule.alpha_alpha_dot(t);
        let bbd = self.schedule.beta_beta_dot(t);
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();

        let k = self.comps.len();
        let mut log_terms = Vec::with_capacity(k);
        let mut scores = Vec::with_capacity(k);
        let mut velocities = Vec::with_capacity(k);
        let mut traces = Vec::with_capacity(k);
        for (comp, log_w) in self.comps.iter().zip(&self.log_weights) {
            let u = x - &comp.mean * b;
            let z = comp.to_local(&u);
            let mut quad = 0.0;
            let mut logdet = 0.0;
            let mut trace = 0.0;
            let mut h_local = DVector::zeros(d);
            let mut g_local = DVector::zeros(d);
            for i in 0..d {
                let e = a2 + b2 * comp.eigvals[i];
                let f = (aad + bbd * comp.eigvals[i]) / e;
                quad += z[i] * z[i] / e;
                logdet += e.ln();
                trace += f;
                h_local[i] = -z[i] / e;
                g_local[i] = f * z[i];
            }
            log_terms.push(log_w - 0.5 * quad - 0.5 * logdet - d as f64 * half_log_2pi);
            scores.push(comp.from_local(h_local));
            velocities.push(&comp.mean * bdot + comp.from_local(g_local));
            traces.push(trace);
        }

        let log_density = logsumexp(&log_terms);
        let mut score = DVector::zeros(d);
        let mut velocity = DVector::zeros(d);
        let mut resp = Vec::with_capacity(k);
        for i in 0..k {
            let r = (log_terms[i] - log_density).exp();
            resp.push(r);
            score += &scores[i] * r;
            velocity += &velocities[i] * r;
        }
        // div b = sum_k r_k [tr(A_k) + (h_k - s) . g_k] with g_k the
        // component velocity deviation; responsibilities differentiate as
        // grad r_k = r_k (h_k - s).
        let mut divergence = 0.0;
        for i in 0..k {
            let rel_vel = &velocities[i];
            divergence += resp[i] * (traces[i] + (&scores[i] - &score).dot(rel_vel));
        }
        FieldPoint {
            log_density,
            score,
            velocity,
            divergence,
        }
    }
}

impl FieldOracle for AnalyticGmmOracle {
    fn dim(&self) -> usize {
        self.mixture.dim()
    }

    fn kind(&self) -> OracleKind {
        OracleKind::AnalyticGmm
    }

    fn velocity(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.evaluate(t, x).velocity
    }

    fn score(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.evaluate(t, x).score
    }

    fn velocity_and_score(&self, t: f64, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let p = self.evaluate(t, x);
        (p.velocity, p.score)
    }

    fn divergence(&self, t: f64, x: &DVector<f64>) -> Option<f64> {
        Some(self.evaluate(t, x).divergence)
    }

    fn log_density(&self, t: f64, x: &DVector<f64>) -> Option<f64> {
        Some(self.evaluate(t, x).log_density)
    }
}

/// Oracle assembled from closures; the escape hatch for external models
/// and tests.
pub struct FnOracle<V, S>
where
    V: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync,
    S: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync,
{
    dim: usize,
    velocity: V,
    score: S,
    divergence: Option<Box<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>>,
    log_density: Option<Box<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>>,
}

impl<V, S> FnOracle<V, S>
where
    V: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync,
    S: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync,
{
    pub fn new(dim: usize, velocity: V, score: S) -> Self {
        Self {
            dim,
            velocity,
            score,
            divergence: None,
            log_density: None,
        }
    }

    pub fn with_divergence(
        mut self,
        f: impl Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.divergence = Some(Box::new(f));
        self
    }

    pub fn with_log_density(
        mut self,
        f: impl Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.log_density = Some(Box::new(f));
        self
    }
}

impl<V, S> FieldOracle for FnOracle<V, S>
where
    V: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync,
    S: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> OracleKind {
        OracleKind::UserSupplied
    }

    fn velocity(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.velocity)(t, x)
    }

    fn score(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.score)(t, x)
    }

    fn divergence(&self, t: f64, x: &DVector<f64>) -> Option<f64> {
        self.divergence.as_ref().map(|f| f(t, x))
    }

    fn log_density(&self, t: f64, x: &DVector<f64>) -> Option<f64> {
        self.log_density.as_ref().map(|f| f(t, x))
    }
}

/// Score implied by a velocity via the conversion identity.
pub fn score_from_velocity(
    schedule: Schedule,
    t: f64,
    x: &DVector<f64>,
    velocity: &DVector<f64>,
) -> Result<DVector<f64>> {
    let aw = schedule.alpha_wronskian(t);
    if aw.abs() < SINGULAR_COEFF_TOL {
        return Err(Error::SingularTime {
            t,
            what: "alpha * wronskian vanishes; score not recoverable from velocity",
        });
    }
    Ok((velocity * schedule.beta(t) - x * schedule.beta_dot(t)) / aw)
}

/// Velocity implied by a score via the conversion identity.
pub fn velocity_from_score(
    schedule: Schedule,
    t: f64,
    x: &DVector<f64>,
    score: &DVector<f64>,
) -> Result<DVector<f64>> {
    let beta = schedule.beta(t);
    if beta.abs() < SINGULAR_COEFF_TOL {
        return Err(Error::SingularTime {
            t,
            what: "beta vanishes; velocity not recoverable from score",
        });
    }
    Ok((x * schedule.beta_dot(t) + score * schedule.alpha_wronskian(t)) / beta)
}

/// Residual norm of the velocity-score identity at one point.
pub fn check_velocity_score_relation(
    oracle: &dyn FieldOracle,
    schedule: Schedule,
    t: f64,
    x: &DVector<f64>,
) -> Result<f64> {
    let (velocity, score) = oracle.velocity_and_score(t, x);
    let implied = score_from_velocity(schedule, t, x, &velocity)?;
    Ok((score - implied).norm())
}

/// Log density of the temperature-T tempered marginal, up to its (dropped)
/// normalization constant: log rho_t(x) / T.
pub fn tempered_log_density(
    oracle: &dyn FieldOracle,
    t: f64,
    x: &DVector<f64>,
    temperature: f64,
) -> Result<f64> {
    if !(temperature > 0.0 && temperature <= 1.0) {
        return Err(Error::Domain(format!(
            "temperature {temperature} outside (0, 1]"
        )));
    }
    let logp = oracle
        .log_density(t, x)
        .ok_or(Error::MissingCapability("log_density"))?;
    Ok(logp / temperature)
}
