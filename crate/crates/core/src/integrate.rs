//! Time integration of the probability flow ODE and its noisy relatives.
//!
//! The probability flow ODE dx/dt = b_t(x) transports samples between the
//! marginals. Adding a score drift and matched noise,
//!
//! ```text
//!     dx = b_t(x) dt + gamma_t^2 s_t(x) dt + sqrt(2 T) gamma_t dW,
//! ```
//!
//! preserves the same marginals for any gamma_t >= 0 when T = 1, because
//! the extra drift and the diffusion cancel in the Fokker-Planck equation.
//! Lowering T tempers the sampled law toward rho_t^(1/T) without changing
//! the T = 1 invariance structure. Stability of the extra drift requires
//! the timestep contract dt <= c / gamma_t^2, enforced here up front.
//!
//! Log likelihoods are always computed along the deterministic flow:
//!
//! ```text
//!     log rho_1(x1) = log rho_0(x0) - int_0^1 div b_t(x_t) dt,
//! ```
//!
//! integrating x backward from t = 1 with the divergence accumulated along
//! the way, either exactly (oracle provided) or with Rademacher-probe
//! Hutchinson estimates.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldOracle;
use crate::stats::standard_normal_logpdf;

/// Fixed-step deterministic integration rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdeMethod {
    Euler,
    Heun,
}

impl OdeMethod {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "euler" => Ok(OdeMethod::Euler),
            "heun" => Ok(OdeMethod::Heun),
            other => Err(Error::Config(format!(
                "unknown method {other:?}; expected euler or heun"
            ))),
        }
    }
}

/// Step plan shared by every integrator and string run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepperConfig {
    pub method: OdeMethod,
    pub n_steps: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub seed: u64,
    /// The c in the timestep contract dt <= c / gamma^2.
    pub timestep_safety: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            method: OdeMethod::Euler,
            n_steps: 100,
            t_start: 0.0,
            t_end: 1.0,
            seed: 0,
            timestep_safety: 0.1,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be positive".into()));
        }
        for t in [self.t_start, self.t_end] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("time {t} outside [0, 1]")));
            }
        }
        if self.t_start == self.t_end {
            return Err(Error::Config("empty integration span".into()));
        }
        if !(self.timestep_safety > 0.0) {
            return Err(Error::Config("timestep_safety must be positive".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

    /// Time of step k, clamped into the span so schedule evaluations never
    /// leave [0, 1] through rounding.
    pub fn time_at(&self, k: usize) -> f64 {
        let lo = self.t_start.min(self.t_end);
        let hi = self.t_start.max(self.t_end);
        (self.t_start + k as f64 * self.dt()).clamp(lo, hi)
    }
}

/// How the score drift is switched on and off over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quench {
    /// gamma = base inside the window, 0 outside.
    HardWindow,
    /// gamma = base inside the window, falling linearly to 0 at t = 0 and
    /// t = 1 outside of it.
    LinearRamp,
}

/// Time profile gamma_t of the score drift strength.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GammaSchedule {
    pub base: f64,
    pub window: (f64, f64),
    pub quench: Quench,
}

impl GammaSchedule {
    pub fn zero() -> Self {
        Self {
            base: 0.0,
            window: (0.0, 1.0),
            quench: Quench::HardWindow,
        }
    }

    pub fn constant(base: f64) -> Self {
        Self {
            base,
            window: (0.0, 1.0),
            quench: Quench::HardWindow,
        }
    }

    /// The benchmark profile: active on [0.1, 0.95], hard edges.
    pub fn windowed(base: f64) -> Self {
        Self {
            base,
            window: (0.1, 0.95),
            quench: Quench::HardWindow,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base >= 0.0 && self.base.is_finite()) {
            return Err(Error::Config(format!("gamma base {} must be >= 0", self.base)));
        }
        let (lo, hi) = self.window;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::Config(format!(
                "gamma window ({lo}, {hi}) must satisfy 0 <= lo <= hi <= 1"
            )));
        }
        Ok(())
    }

    pub fn gamma(&self, t: f64) -> f64 {
        let (lo, hi) = self.window;
        if t >= lo && t <= hi {
            return self.base;
        }
        match self.quench {
            Quench::HardWindow => 0.0,
            Quench::LinearRamp => {
                if t < lo {
                    if lo <= 0.0 {
                        self.base
                    } else {
                        self.base * (t / lo).max(0.0)
                    }
                } else if hi >= 1.0 {
                    self.base
                } else {
                    self.base * ((1.0 - t) / (1.0 - hi)).max(0.0)
                }
            }
        }
    }

    pub fn max_gamma(&self) -> f64 {
        self.base
    }

    pub fn is_zero(&self) -> bool {
        self.base == 0.0
    }

    /// Largest dt the contract dt <= c / gamma^2 permits, infinite when the
    /// schedule is identically zero.
    pub fn max_dt(&self, safety: f64) -> f64 {
        if self.is_zero() {
            f64::INFINITY
        } else {
            safety / (self.base * self.base)
        }
    }

    pub fn check_timestep(&self, dt: f64, safety: f64) -> Result<()> {
        let limit = self.max_dt(safety);
        // A relative whisker forgives dt set to exactly the limit.
        if dt.abs() > limit * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "dt = {} violates the timestep contract dt <= {safety} / gamma^2 = {limit}",
                dt.abs()
            )));
        }
        Ok(())
    }
}

/// A recorded trajectory, including the initial state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }
}

fn check_finite(t: f64, x: &DVector<f64>) -> Result<()> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            t,
            index: Some(i),
            last_finite: Vec::new(),
        });
    }
    Ok(())
}

/// One deterministic step of the chosen method for an arbitrary field.
/// dt is passed separately from the evaluation times so that every caller
/// shares the exact same floating point step arithmetic.
pub(crate) fn ode_step<F>(
    method: OdeMethod,
    f: &F,
    t: f64,
    t_next: f64,
    dt: f64,
    x: &DVector<f64>,
) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    match method {
        OdeMethod::Euler => x + f(t, x) * dt,
        OdeMethod::Heun => {
            let k1 = f(t, x);
            let predictor = x + &k1 * dt;
            let k2 = f(t_next, &predictor);
            x + (k1 + k2) * (0.5 * dt)
        }
    }
}

fn integrate_field<F>(f: F, x0: &DVector<f64>, cfg: &StepperConfig) -> Result<Trajectory>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    cfg.validate()?;
    let dt = cfg.dt();
    let mut times = Vec::with_capacity(cfg.n_steps + 1);
    let mut states = Vec::with_capacity(cfg.n_steps + 1);
    let mut x = x0.clone();
    times.push(cfg.t_start);
    states.push(x.clone());
    for k in 0..cfg.n_steps {
        let t = cfg.time_at(k);
        let t_next = cfg.time_at(k + 1);
        let next = ode_step(cfg.method, &f, t, t_next, dt, &x);
        if let Err(Error::Diverged { index, .. }) = check_finite(t_next, &next) {
            return Err(Error::Diverged {
                t: t_next,
                index,
                last_finite: x.iter().cloned().collect(),
            });
        }
        x = next;
        times.push(t_next);
        states.push(x.clone());
    }
    Ok(Trajectory { times, states })
}

/// Integrates the probability flow ODE dx/dt = b_t(x). Backward spans
/// (t_start > t_end) are allowed.
pub fn integrate_ode(
    oracle: &dyn FieldOracle,
    x0: &DVector<f64>,
    cfg: &StepperConfig,
) -> Result<Trajectory> {
    integrate_field(|t, x| oracle.velocity(t, x), x0, cfg)
}

/// Euler-Maruyama integration of the score-augmented SDE. Forward only.
///
/// With gamma identically zero this reduces arithmetically to the Euler
/// path of [`integrate_ode`]: the score term and the noise term are skipped
/// outright, not multiplied by zero.
pub fn integrate_sde(
    oracle: &dyn FieldOracle,
    x0: &DVector<f64>,
    gamma: &GammaSchedule,
    temperature: f64,
    cfg: &StepperConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    gamma.validate()?;
    if cfg.t_end < cfg.t_start {
        return Err(Error::Config("SDE integration must run forward in time".into()));
    }
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!("temperature {temperature} must be >= 0")));
    }
    gamma.check_timestep(cfg.dt(), cfg.timestep_safety)?;

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let d = x0.len();
    let dt = cfg.dt();
    let noise_scale = (2.0 * temperature * dt).sqrt();
    let mut times = Vec::with_capacity(cfg.n_steps + 1);
    let mut states = Vec::with_capacity(cfg.n_steps + 1);
    let mut x = x0.clone();
    times.push(cfg.t_start);
    states.push(x.clone());
    for k in 0..cfg.n_steps {
        let t = cfg.time_at(k);
        let t_next = cfg.time_at(k + 1);
        let g = gamma.gamma(t);
        let mut next = if g > 0.0 {
            let (velocity, score) = oracle.velocity_and_score(t, &x);
            &x + (velocity + score * (g * g)) * dt
        } else {
            &x + oracle.velocity(t, &x) * dt
        };
        if g > 0.0 && temperature > 0.0 {
            let noise = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            next += noise * (noise_scale * g);
        }
        if let Err(Error::Diverged { index, .. }) = check_finite(t_next, &next) {
            return Err(Error::Diverged {
                t: t_next,
                index,
                last_finite: x.iter().cloned().collect(),
            });
        }
        x = next;
        times.push(t_next);
        states.push(x.clone());
    }
    Ok(Trajectory { times, states })
}

/// How div b is obtained during likelihood integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DivergenceMode {
    Exact,
    Hutchinson { probes: usize },
}

/// Rademacher-probe divergence estimate at a single point.
///
/// Each probe contributes eps . (b(x + h eps) - b(x - h eps)) / (2 h), an
/// unbiased estimator of div b up to O(h^2) finite difference bias.
pub fn hutchinson_divergence<R: Rng>(
    oracle: &dyn FieldOracle,
    t: f64,
    x: &DVector<f64>,
    n_probes: usize,
    rng: &mut R,
) -> f64 {
    assert!(n_probes > 0, "need at least one probe");
    let d = x.len();
    let h = 1e-4 * (1.0 + x.norm());
    let mut acc = 0.0;
    for _ in 0..n_probes {
        let eps = DVector::from_fn(d, |_, _| if rng.gen::<bool>() { 1.0 } else { -1.0 });
        let bp = oracle.velocity(t, &(x + &eps * h));
        let bm = oracle.velocity(t, &(x - &eps * h));
        acc += eps.dot(&(bp - bm)) / (2.0 * h);
    }
    acc / n_probes as f64
}

/// Result of a likelihood evaluation: the log density at the queried point
/// and the latent endpoint the backward flow reached.
#[derive(Debug, Clone)]
pub struct Likelihood {
    pub log_density: f64,
    pub latent: DVector<f64>,
}

/// Log density of the time-1 marginal at x1 through the probability flow.
///
/// Integrates the pair (x, accumulated divergence) backward from t = 1 to
/// t = 0 with cfg.method and cfg.n_steps; cfg's time span is ignored
/// because the identity is anchored at the two endpoints. The divergence
/// enters each step at the same stage points as the velocity.
pub fn log_likelihood(
    oracle: &dyn FieldOracle,
    x1: &DVector<f64>,
    cfg: &StepperConfig,
    mode: DivergenceMode,
) -> Result<Likelihood> {
    if cfg.n_steps == 0 {
        return Err(Error::Config("n_steps must be positive".into()));
    }
    if let DivergenceMode::Exact = mode {
        if oracle.divergence(1.0, x1).is_none() {
            return Err(Error::MissingCapability("exact divergence"));
        }
    }
    if let DivergenceMode::Hutchinson { probes } = mode {
        if probes == 0 {
            return Err(Error::Config("hutchinson probe count must be positive".into()));
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut div_at = |t: f64, x: &DVector<f64>| -> f64 {
        match mode {
            DivergenceMode::Exact => oracle
                .divergence(t, x)
                .expect("capability checked above"),
            DivergenceMode::Hutchinson { probes } => {
                hutchinson_divergence(oracle, t, x, probes, &mut rng)
            }
        }
    };

    let n = cfg.n_steps;
    let dt = -1.0 / n as f64;
    let mut x = x1.clone();
    let mut acc = 0.0;
    for k in 0..n {
        let t = (1.0 + k as f64 * dt).clamp(0.0, 1.0);
        let t_next = (1.0 + (k + 1) as f64 * dt).clamp(0.0, 1.0);
        match cfg.method {
            OdeMethod::Euler => {
                let v = oracle.velocity(t, &x);
                acc += div_at(t, &x) * dt;
                x += v * dt;
            }
            OdeMethod::Heun => {
                let v1 = oracle.velocity(t, &x);
                let d1 = div_at(t, &x);
                let predictor = &x + &v1 * dt;
                let v2 = oracle.velocity(t_next, &predictor);
                let d2 = div_at(t_next, &predictor);
                x += (v1 + v2) * (0.5 * dt);
                acc += (d1 + d2) * (0.5 * dt);
            }
        }
        if let Err(Error::Diverged { index, .. }) = check_finite(t_next, &x) {
            return Err(Error::Diverged {
                t: t_next,
                index,
                last_finite: Vec::new(),
            });
        }
        if !acc.is_finite() {
            return Err(Error::Diverged {
                t: t_next,
                index: None,
                last_finite: x.iter().cloned().collect(),
            });
        }
    }
    Ok(Likelihood {
        log_density: standard_normal_logpdf(&x) + acc,
        latent: x,
    })
}
