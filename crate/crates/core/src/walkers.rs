//! Finite-temperature strings sampled by one walker per image.
//!
//! Interior images track local averages of a tempered density instead of a
//! deterministic drift. Each image phi_i owns a walker that takes Langevin
//! steps
//!
//!   x' = x + (b + gamma(t)^2 s) dt + gamma(t) sqrt(2 T dt) xi
//!
//! and is confined to its image's Voronoi cell: a move that lands closest to
//! a different image of the pre-step string is rejected, leaving the walker
//! in place. Images then relax toward their walkers through an exponential
//! moving average with rate eta, endpoints keep following the velocity field
//! alone, and the string is resampled to equal arc length.
//!
//! At stationarity each interior image solves phi_i = E[x | x in cell_i]
//! under rho_t^(1/T), which is the self-consistency property of a principal
//! curve. `self_consistency_residual` checks it directly against exact
//! samples of the tempered mixture drawn by rejection from a widened
//! Gaussian mixture envelope.

use nalgebra::linalg::Cholesky;
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fields::FieldOracle;
use crate::integrate::{ode_step, StepperConfig};
use crate::mixture::GaussianMixture;
use crate::reparam::{EuclideanReparam, Resampler};
use crate::string::{Regime, RegimeConfig, StringDiagnostics, StringState};

/// One walker per string image, with an independent counter-based RNG
/// stream per walker so ensembles reproduce bitwise for a given seed no
/// matter how rejections fall.
#[derive(Debug, Clone)]
pub struct WalkerEnsemble {
    pub positions: Vec<DVector<f64>>,
    pub reject_counts: Vec<u64>,
    rngs: Vec<ChaCha12Rng>,
}

impl WalkerEnsemble {
    pub fn new(images: &[DVector<f64>], seed: u64) -> Self {
        let rngs = (0..images.len())
            .map(|i| {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        Self {
            positions: images.to_vec(),
            reject_counts: vec![0; images.len()],
            rngs,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Index of the closest image, ties resolved toward the lower index.
pub fn nearest_image(images: &[DVector<f64>], x: &DVector<f64>) -> usize {
    let mut best = 0usize;
    let mut best_d = (x - &images[0]).norm_squared();
    for (j, img) in images.iter().enumerate().skip(1) {
        let d = (x - img).norm_squared();
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

fn ema(image: &DVector<f64>, walker: &DVector<f64>, eta: f64) -> DVector<f64> {
    if eta == 1.0 {
        walker.clone()
    } else {
        image * (1.0 - eta) + walker * eta
    }
}

/// Advances a finite-temperature string from `stepper.time_at(k)` to
/// `time_at(k + 1)`: Langevin-moves the interior walkers with Voronoi
/// rejection against the pre-step images, advances the endpoints on the
/// velocity field with the configured method, relaxes interior images
/// toward their walkers, clamps endpoint walkers, and resamples to equal
/// arc length. Walkers draw their noise before the rejection test, so the
/// random streams advance identically whether or not moves are accepted.
pub fn finite_temperature_step(
    oracle: &dyn FieldOracle,
    state: &StringState,
    ensemble: &mut WalkerEnsemble,
    regime: &RegimeConfig,
    stepper: &StepperConfig,
    k: usize,
) -> Result<StringState> {
    if ensemble.len() != state.images.len() {
        return Err(Error::Config(format!(
            "{} walkers for {} images",
            ensemble.len(),
            state.images.len()
        )));
    }
    let dt = stepper.dt();
    regime.gamma.check_timestep(dt.abs(), stepper.timestep_safety)?;
    let t = stepper.time_at(k);
    let t_next = stepper.time_at(k + 1);
    let last = state.images.len() - 1;
    let d = state.dim();
    let g = regime.gamma.gamma(t);
    let noise_scale = g * (2.0 * regime.temperature * dt).sqrt();

    let snapshot = &state.images;
    for i in 1..last {
        let x = &ensemble.positions[i];
        let drift = if g == 0.0 {
            oracle.velocity(t, x)
        } else {
            let (b, s) = oracle.velocity_and_score(t, x);
            b + s * (g * g)
        };
        // The noise is always drawn, even when gamma vanishes, to keep the
        // per-walker streams aligned across steps.
        let rng = &mut ensemble.rngs[i];
        let xi = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let candidate = if noise_scale == 0.0 {
            x + drift * dt
        } else {
            x + drift * dt + xi * noise_scale
        };
        if !candidate.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                t,
                index: Some(i),
                last_finite: x.iter().cloned().collect(),
            });
        }
        if nearest_image(snapshot, &candidate) == i {
            ensemble.positions[i] = candidate;
        } else {
            ensemble.reject_counts[i] += 1;
        }
    }

    let mut images = Vec::with_capacity(state.images.len());
    for (i, x) in state.images.iter().enumerate() {
        let next = if i == 0 || i == last {
            ode_step(
                stepper.method,
                &mut |tt: f64, xx: &DVector<f64>| oracle.velocity(tt, xx),
                t,
                t_next,
                dt,
                x,
            )
        } else {
            ema(x, &ensemble.positions[i], regime.eta)
        };
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                t,
                index: Some(i),
                last_finite: x.iter().cloned().collect(),
            });
        }
        images.push(next);
    }
    ensemble.positions[0] = images[0].clone();
    ensemble.positions[last] = images[last].clone();

    let images = EuclideanReparam::new(regime.spline).resample(&images, images.len())?;
    StringState::new(images, t_next.clamp(0.0, 1.0))
}

/// Final string, walker ensemble, and per-step diagnostics.
#[derive(Debug, Clone)]
pub struct FiniteTempRun {
    pub state: StringState,
    pub ensemble: WalkerEnsemble,
    pub diagnostics: Vec<StringDiagnostics>,
}

/// Runs the finite-temperature string over `stepper`'s forward time span.
/// Walker streams derive from `stepper.seed`.
pub fn run_finite_temperature_string(
    oracle: &dyn FieldOracle,
    init: StringState,
    regime: &RegimeConfig,
    stepper: &StepperConfig,
) -> Result<FiniteTempRun> {
    regime.validate()?;
    stepper.validate()?;
    if regime.regime != Regime::PrincipalCurve {
        return Err(Error::Config(
            "the finite-temperature runner handles the principal_curve regime only".into(),
        ));
    }
    if stepper.t_end <= stepper.t_start {
        return Err(Error::Config("strings evolve forward; need t_end > t_start".into()));
    }
    if (init.t - stepper.t_start).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "string is at t = {} but the stepper starts at {}",
            init.t, stepper.t_start
        )));
    }
    if init.dim() != oracle.dim() {
        return Err(Error::Config(format!(
            "string dimension {} does not match field dimension {}",
            init.dim(),
            oracle.dim()
        )));
    }
    regime.gamma.check_timestep(stepper.dt().abs(), stepper.timestep_safety)?;

    let mut state = init;
    let mut ensemble = WalkerEnsemble::new(&state.images, stepper.seed);
    let mut diagnostics = Vec::with_capacity(stepper.n_steps + 1);
    diagnostics.push(record(oracle, &state, 0, 0.0));
    for k in 0..stepper.n_steps {
        let next = finite_temperature_step(oracle, &state, &mut ensemble, regime, stepper, k)?;
        let max_displacement = state
            .images
            .iter()
            .zip(&next.images)
            .map(|(a, b)| (b - a).norm())
            .fold(0.0f64, f64::max);
        diagnostics.push(record(oracle, &next, k + 1, max_displacement));
        state = next;
    }
    Ok(FiniteTempRun {
        state,
        ensemble,
        diagnostics,
    })
}

fn record(
    oracle: &dyn FieldOracle,
    state: &StringState,
    step: usize,
    max_displacement: f64,
) -> StringDiagnostics {
    let mut logp = Vec::with_capacity(state.images.len());
    let mut available = true;
    for img in &state.images {
        match oracle.log_density(state.t, img) {
            Some(v) => logp.push(v),
            None => {
                available = false;
                break;
            }
        }
    }
    StringDiagnostics {
        step,
        t: state.t,
        arc_length: state.arc_length(),
        max_displacement,
        log_density: if available { Some(logp) } else { None },
    }
}

/// Draws exact samples of rho^(1/T) for a Gaussian mixture rho by rejection.
///
/// Raising a single Gaussian to 1/T widens its covariance to T Sigma, and
/// for a K-component mixture the power-mean inequality bounds the tempered
/// density by K^max(0, 1/T - 1) times the componentwise-tempered mixture,
/// which is itself a Gaussian mixture and can be sampled directly. Accepting
/// with the exact density ratio then yields unbiased samples at any
/// temperature T > 0; at T = 1 the envelope is the target and nothing is
/// rejected.
pub fn sample_tempered<R: Rng>(
    mixture: &GaussianMixture,
    temperature: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::Domain(format!(
            "tempering temperature must be positive and finite, got {temperature}"
        )));
    }
    if temperature == 1.0 {
        return Ok(mixture.sample(n, rng));
    }
    let d = mixture.dim();
    let k = mixture.n_components();
    let inv_t = 1.0 / temperature;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();

    let mut factors = Vec::with_capacity(k);
    let mut log_dets = Vec::with_capacity(k);
    for cov in mixture.covariances() {
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?;
        log_dets.push(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>());
        factors.push(chol);
    }
    // log gamma_k: the constant relating (w_k N_k)^(1/T) to N(mu_k, T Sigma_k).
    let log_gamma: Vec<f64> = (0..k)
        .map(|j| {
            inv_t * mixture.weights()[j].ln()
                + 0.5 * (d as f64) * ((1.0 - inv_t) * ln2pi + temperature.ln())
                + 0.5 * (1.0 - inv_t) * log_dets[j]
        })
        .collect();
    let log_norm = crate::stats::logsumexp(&log_gamma);
    let probs: Vec<f64> = log_gamma.iter().map(|lg| (lg - log_norm).exp()).collect();
    let log_overlap = (inv_t - 1.0).max(0.0) * (k as f64).ln();
    let sqrt_t = temperature.sqrt();

    // log of the tempered-component density N(x; mu_j, T Sigma_j).
    let widened_logpdf = |j: usize, x: &DVector<f64>| -> f64 {
        let delta = x - &mixture.means()[j];
        let z = factors[j].l().solve_lower_triangular(&delta).unwrap();
        -0.5 * (d as f64) * ln2pi
            - 0.5 * ((d as f64) * temperature.ln() + log_dets[j])
            - 0.5 * z.norm_squared() * inv_t
    };

    let max_attempts_per_sample: u64 = 10_000_000;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut accepted = false;
        for _ in 0..max_attempts_per_sample {
            let u: f64 = rng.gen();
            let mut j = k - 1;
            let mut acc = 0.0;
            for (idx, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    j = idx;
                    break;
                }
            }
            let xi = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &mixture.means()[j] + factors[j].l() * xi * sqrt_t;

            let log_target = inv_t * mixture.log_density(&x);
            let lw: Vec<f64> = (0..k)
                .map(|jj| log_gamma[jj] + widened_logpdf(jj, &x))
                .collect();
            let log_envelope = log_overlap + crate::stats::logsumexp(&lw);
            let log_accept = log_target - log_envelope;
            debug_assert!(log_accept < 1e-9, "envelope violated: {log_accept}");
            let v: f64 = rng.gen();
            if v.ln() < log_accept {
                out.push(x);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::Domain(
                "tempered rejection sampler exceeded its attempt budget".into(),
            ));
        }
    }
    Ok(out)
}

/// Occupancy and self-consistency defect of one Voronoi cell.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CellOccupancy {
    pub count: usize,
    /// Distance from the image to its cell's tempered mean; `None` when
    /// fewer than `MIN_CELL_OCCUPANCY` samples landed in the cell.
    pub residual: Option<f64>,
}

/// Cells with fewer samples than this report no residual.
pub const MIN_CELL_OCCUPANCY: usize = 10;

/// Measures how far each image sits from the mean of the tempered density
/// restricted to its Voronoi cell, using `n_samples` exact tempered draws.
/// A converged principal curve has small residuals in every well-occupied
/// cell.
pub fn self_consistency_residual(
    mixture: &GaussianMixture,
    state: &StringState,
    temperature: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<CellOccupancy>> {
    if mixture.dim() != state.dim() {
        return Err(Error::Config(format!(
            "mixture dimension {} does not match string dimension {}",
            mixture.dim(),
            state.dim()
        )));
    }
    if n_samples == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let samples = sample_tempered(mixture, temperature, n_samples, &mut rng)?;
    let m = state.images.len();
    let mut sums = vec![DVector::<f64>::zeros(state.dim()); m];
    let mut counts = vec![0usize; m];
    for x in &samples {
        let i = nearest_image(&state.images, x);
        sums[i] += x;
        counts[i] += 1;
    }
    Ok((0..m)
        .map(|i| CellOccupancy {
            count: counts[i],
            residual: if counts[i] >= MIN_CELL_OCCUPANCY {
                Some((&sums[i] / counts[i] as f64 - &state.images[i]).norm())
            } else {
                None
            },
        })
        .collect())
}
