//! String relaxation through time-dependent velocity and score fields.
//!
//! A string is a discrete path of N+1 images phi_0..phi_N that evolves with
//! the interpolation time t. Each step advances every image through the
//! regime's drift and then resamples the path to equal arc length, so the
//! images parametrize the same curve throughout:
//!
//! * transport: every image follows the velocity field b(t, x), so the
//!   string is a curve of transported samples.
//! * mep: interior images follow b + gamma(t)^2 s(t, x); the score term
//!   relaxes the path onto a minimum energy path of -log rho_t while the
//!   endpoints keep following b alone.
//! * principal_curve: images average finite-temperature walkers and are
//!   handled by the walker module; the deterministic stepper rejects it.
//!
//! Endpoints always advance with the configured one-step method on b so
//! that they reproduce, bitwise, the trajectories `integrate_ode` would
//! produce from the same configuration. Interior images use plain Euler.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fields::FieldOracle;
use crate::integrate::{ode_step, GammaSchedule, OdeMethod, StepperConfig};
use crate::reparam::{arc_length, EuclideanReparam, Resampler, SplineKind};

/// Which drift moves the interior images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Transport,
    Mep,
    PrincipalCurve,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Transport => "transport",
            Regime::Mep => "mep",
            Regime::PrincipalCurve => "principal_curve",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "transport" => Ok(Regime::Transport),
            "mep" => Ok(Regime::Mep),
            "principal_curve" => Ok(Regime::PrincipalCurve),
            other => Err(Error::Config(format!(
                "unknown regime '{other}' (expected transport, mep, or principal_curve)"
            ))),
        }
    }
}

/// Drift parameters for one regime, validated for mutual consistency:
/// transport uses no score term (gamma identically zero, T = 0), mep uses a
/// score term without noise (gamma > 0, T = 0), and principal curves need
/// noise (gamma > 0, T > 0) plus an averaging rate eta.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RegimeConfig {
    pub regime: Regime,
    pub gamma: GammaSchedule,
    pub temperature: f64,
    /// Walker-average relaxation rate, used only by principal_curve.
    pub eta: f64,
    pub spline: SplineKind,
}

impl RegimeConfig {
    pub fn transport() -> Self {
        Self {
            regime: Regime::Transport,
            gamma: GammaSchedule::zero(),
            temperature: 0.0,
            eta: 0.0,
            spline: SplineKind::Cubic,
        }
    }

    pub fn mep(gamma: GammaSchedule) -> Self {
        Self {
            regime: Regime::Mep,
            gamma,
            temperature: 0.0,
            eta: 0.0,
            spline: SplineKind::Cubic,
        }
    }

    pub fn principal_curve(gamma: GammaSchedule, temperature: f64, eta: f64) -> Self {
        Self {
            regime: Regime::PrincipalCurve,
            gamma,
            temperature,
            eta,
            spline: SplineKind::Cubic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gamma.validate()?;
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::Config("temperature must be finite and nonnegative".into()));
        }
        match self.regime {
            Regime::Transport => {
                if !self.gamma.is_zero() {
                    return Err(Error::Config(
                        "transport uses no score term; set gamma to zero".into(),
                    ));
                }
                if self.temperature != 0.0 {
                    return Err(Error::Config(
                        "transport is deterministic; set temperature to zero".into(),
                    ));
                }
            }
            Regime::Mep => {
                if self.gamma.is_zero() {
                    return Err(Error::Config(
                        "mep needs a positive gamma for the score term".into(),
                    ));
                }
                if self.temperature != 0.0 {
                    return Err(Error::Config(
                        "mep is the zero-temperature limit; set temperature to zero".into(),
                    ));
                }
            }
            Regime::PrincipalCurve => {
                if self.gamma.is_zero() {
                    return Err(Error::Config(
                        "principal_curve needs a positive gamma".into(),
                    ));
                }
                if self.temperature <= 0.0 {
                    return Err(Error::Config(
                        "principal_curve needs a positive temperature".into(),
                    ));
                }
                if !(self.eta > 0.0 && self.eta <= 1.0) {
                    return Err(Error::Config(
                        "principal_curve needs an averaging rate eta in (0, 1]".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A string of images at one interpolation time.
#[derive(Debug, Clone, PartialEq)]
pub struct StringState {
    pub images: Vec<DVector<f64>>,
    pub t: f64,
}

impl StringState {
    pub fn new(images: Vec<DVector<f64>>, t: f64) -> Result<Self> {
        if images.len() < 3 {
            return Err(Error::Config(
                "a string needs at least three images (two endpoints and one interior)".into(),
            ));
        }
        let d = images[0].len();
        if d == 0 {
            return Err(Error::Config("images must have positive dimension".into()));
        }
        for (i, img) in images.iter().enumerate() {
            if img.len() != d {
                return Err(Error::Config(format!(
                    "image {i} has dimension {} but image 0 has {d}",
                    img.len()
                )));
            }
            if !img.iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!("image {i} has non-finite entries")));
            }
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("string time {t} outside [0, 1]")));
        }
        Ok(Self { images, t })
    }

    pub fn dim(&self) -> usize {
        self.images[0].len()
    }

    pub fn n_segments(&self) -> usize {
        self.images.len() - 1
    }

    pub fn arc_length(&self) -> f64 {
        arc_length(&self.images)
    }

    pub fn endpoints(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.images[0], &self.images[self.images.len() - 1])
    }
}

/// Great-circle initial string between two latent points, resampled to equal
/// arc length. For endpoints on the latent typical set the circle keeps the
/// whole initial path near that shell instead of tunnelling through the
/// low-density interior the way a straight segment would. Coincident
/// endpoints give a constant string.
pub fn init_string_geodesic(
    z0: &DVector<f64>,
    z1: &DVector<f64>,
    n_images: usize,
    spline: SplineKind,
) -> Result<Vec<DVector<f64>>> {
    if z0.len() != z1.len() {
        return Err(Error::Config("endpoint dimensions differ".into()));
    }
    if n_images < 3 {
        return Err(Error::Config("a string needs at least three images".into()));
    }
    let scale = z0.norm().max(z1.norm());
    if (z1 - z0).norm() <= 1e-12 * scale.max(1.0) {
        log::warn!("string endpoints coincide; starting from a constant path");
        return Ok(vec![z0.clone(); n_images]);
    }
    let n = n_images - 1;
    let mut raw = Vec::with_capacity(n_images);
    for i in 0..=n {
        let a = std::f64::consts::FRAC_PI_2 * i as f64 / n as f64;
        raw.push(z0 * a.cos() + z1 * a.sin());
    }
    // The quarter-circle sweep is uniform in angle, not in arc length, and
    // collapses when z1 is close to -z0; one resampling fixes both.
    let mut out = EuclideanReparam::new(spline).resample(&raw, n_images)?;
    out[0] = z0.clone();
    out[n] = z1.clone();
    Ok(out)
}

/// Pulls two observed points at t = 1 back to latents at t = 0 along the
/// probability-flow velocity field.
pub fn encode_endpoints(
    oracle: &dyn FieldOracle,
    a: &DVector<f64>,
    b: &DVector<f64>,
    n_steps: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let cfg = StepperConfig {
        method: OdeMethod::Heun,
        n_steps,
        t_start: 1.0,
        t_end: 0.0,
        ..StepperConfig::default()
    };
    let za = crate::integrate::integrate_ode(oracle, a, &cfg)?;
    let zb = crate::integrate::integrate_ode(oracle, b, &cfg)?;
    Ok((za.final_state().clone(), zb.final_state().clone()))
}

fn interior_velocity(
    oracle: &dyn FieldOracle,
    regime: &RegimeConfig,
    t: f64,
    x: &DVector<f64>,
) -> DVector<f64> {
    match regime.regime {
        Regime::Transport => oracle.velocity(t, x),
        Regime::Mep => {
            let g = regime.gamma.gamma(t);
            if g == 0.0 {
                oracle.velocity(t, x)
            } else {
                let (b, s) = oracle.velocity_and_score(t, x);
                b + s * (g * g)
            }
        }
        Regime::PrincipalCurve => unreachable!("rejected by validation"),
    }
}

/// Advances a string from `stepper.time_at(k)` to `time_at(k + 1)`: moves
/// every image, checks finiteness, and resamples to equal arc length. The
/// endpoints use `stepper.method` on the velocity field and the exact same
/// step arithmetic as `integrate_ode`; reparametrization pins them, so a
/// string endpoint traces the identical floating-point trajectory.
pub fn string_step(
    oracle: &dyn FieldOracle,
    state: &StringState,
    regime: &RegimeConfig,
    stepper: &StepperConfig,
    k: usize,
) -> Result<StringState> {
    if regime.regime == Regime::PrincipalCurve {
        return Err(Error::Config(
            "principal_curve strings move by walker averages; use the finite-temperature runner"
                .into(),
        ));
    }
    let dt = stepper.dt();
    regime.gamma.check_timestep(dt.abs(), stepper.timestep_safety)?;
    let t = stepper.time_at(k);
    let t_next = stepper.time_at(k + 1);
    let last = state.images.len() - 1;
    let mut moved = Vec::with_capacity(state.images.len());
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
            x + interior_velocity(oracle, regime, t, x) * dt
        };
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                t,
                index: Some(i),
                last_finite: x.iter().cloned().collect(),
            });
        }
        moved.push(next);
    }
    let images = EuclideanReparam::new(regime.spline).resample(&moved, moved.len())?;
    StringState::new(images, t_next.clamp(0.0, 1.0))
}

/// Per-step observables of a string run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct StringDiagnostics {
    pub step: usize,
    pub t: f64,
    pub arc_length: f64,
    /// Largest single-image movement during the step, including the slide
    /// from reparametrization; zero on the initial record.
    pub max_displacement: f64,
    /// Per-image log density when the oracle can evaluate it.
    pub log_density: Option<Vec<f64>>,
}

/// Final string plus the diagnostics trace, one record per step boundary.
#[derive(Debug, Clone)]
pub struct StringRun {
    pub state: StringState,
    pub diagnostics: Vec<StringDiagnostics>,
}

fn diagnostics_record(
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

/// Runs the deterministic string method over `stepper`'s time span, which
/// must move forward. The initial state's time must match `stepper.t_start`.
pub fn run_string(
    oracle: &dyn FieldOracle,
    init: StringState,
    regime: &RegimeConfig,
    stepper: &StepperConfig,
) -> Result<StringRun> {
    regime.validate()?;
    stepper.validate()?;
    if regime.regime == Regime::PrincipalCurve {
        return Err(Error::Config(
            "principal_curve strings move by walker averages; use the finite-temperature runner"
                .into(),
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
    let mut diagnostics = Vec::with_capacity(stepper.n_steps + 1);
    diagnostics.push(diagnostics_record(oracle, &state, 0, 0.0));
    for k in 0..stepper.n_steps {
        let next = string_step(oracle, &state, regime, stepper, k)?;
        let max_displacement = state
            .images
            .iter()
            .zip(&next.images)
            .map(|(a, b)| (b - a).norm())
            .fold(0.0f64, f64::max);
        diagnostics.push(diagnostics_record(oracle, &next, k + 1, max_displacement));
        state = next;
    }
    Ok(StringRun { state, diagnostics })
}

/// Perpendicular score left on each interior image: at a converged minimum
/// energy path the score is parallel to the string tangent, so the norm of
/// its component orthogonal to the central-difference tangent measures the
/// remaining defect. Returns one value per interior image.
pub fn mep_residual(oracle: &dyn FieldOracle, state: &StringState) -> Result<Vec<f64>> {
    let n = state.images.len();
    let mut out = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        let tangent = &state.images[i + 1] - &state.images[i - 1];
        let norm = tangent.norm();
        if norm < 1e-14 {
            return Err(Error::DegenerateTangent { index: i });
        }
        let unit = tangent / norm;
        let s = oracle.score(state.t, &state.images[i]);
        let parallel = s.dot(&unit);
        out.push((s - unit * parallel).norm());
    }
    Ok(out)
}
