//! Interpolation schedules.
//!
//! A schedule is a pair of C^1 functions (alpha_t, beta_t) on t in [0, 1]
//! with alpha_0 = 1, beta_0 = 0, alpha_1 = 0, beta_1 = 1. It defines the
//! stochastic interpolation
//!
//! ```text
//!     I_t = alpha_t * x0 + beta_t * x1,    x0 ~ N(0, I),  x1 ~ rho1,
//! ```
//!
//! whose time marginals rho_t bridge the standard normal at t = 0 to the
//! data distribution rho1 at t = 1.
//!
//! Three standard schedules are provided:
//!
//! ```text
//!     linear:          alpha = 1 - t,         beta = t
//!     trigonometric:   alpha = cos(pi t / 2), beta = sin(pi t / 2)
//!     ou:              alpha = sqrt(1 - t^2), beta = t
//! ```
//!
//! The trigonometric and ou schedules are variance preserving
//! (alpha^2 + beta^2 = 1). Note that for the ou schedule d(alpha)/dt
//! diverges at t = 1 while the products alpha * d(alpha)/dt and
//! alpha * (alpha * d(beta)/dt - d(alpha)/dt * beta) stay finite; the
//! dedicated product accessors below use closed forms so downstream field
//! evaluations remain finite on the whole of [0, 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

/// Interpolation schedule selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Linear,
    Trigonometric,
    Ou,
}

impl Schedule {
    /// Looks a schedule up by its external name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "linear" => Ok(Schedule::Linear),
            "trigonometric" => Ok(Schedule::Trigonometric),
            "ou" => Ok(Schedule::Ou),
            other => Err(Error::Config(format!(
                "unknown schedule {other:?}; expected one of linear, trigonometric, ou"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Schedule::Linear => "linear",
            Schedule::Trigonometric => "trigonometric",
            Schedule::Ou => "ou",
        }
    }

    /// Validates t in [0, 1].
    pub fn check_time(t: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&t) || !t.is_finite() {
            return Err(Error::Domain(format!("t = {t} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn alpha(&self, t: f64) -> f64 {
        match self {
            Schedule::Linear => 1.0 - t,
            Schedule::Trigonometric => (FRAC_PI_2 * t).cos(),
            Schedule::Ou => (1.0 - t * t).max(0.0).sqrt(),
        }
    }

    pub fn beta(&self, t: f64) -> f64 {
        match self {
            Schedule::Linear => t,
            Schedule::Trigonometric => (FRAC_PI_2 * t).sin(),
            Schedule::Ou => t,
        }
    }

    /// d(alpha)/dt. Diverges at t = 1 for the ou schedule.
    pub fn alpha_dot(&self, t: f64) -> f64 {
        match self {
            Schedule::Linear => -1.0,
            Schedule::Trigonometric => -FRAC_PI_2 * (FRAC_PI_2 * t).sin(),
            Schedule::Ou => -t / (1.0 - t * t).max(0.0).sqrt(),
        }
    }

    /// d(beta)/dt.
    pub fn beta_dot(&self, t: f64) -> f64 {
        match self {
            Schedule::Linear => 1.0,
            Schedule::Trigonometric => FRAC_PI_2 * (FRAC_PI_2 * t).cos(),
            Schedule::Ou => 1.0,
        }
    }

    /// alpha * d(alpha)/dt in closed form, finite on all of [0, 1].
    pub fn alpha_alpha_dot(&self, t: f64) -> f64 {
        match self {
            Schedule::Linear => t - 1.0,
            Schedule::Trigonometric => -FRAC_PI_4 * (PI * t).sin(),
            Schedule::Ou => -t,
        }
    }

    /// beta * d(beta)/dt in closed form.
    pub fn beta_beta_dot(&self, t: f64) -> f64 {
        match self {
            Schedule::Linear => t,
            Schedule::Trigonometric => FRAC_PI_4 * (PI * t).sin(),
            Schedule::Ou => t,
        }
    }

    /// The Wronskian w = alpha * d(beta)/dt - d(alpha)/dt * beta.
    /// Strictly positive on [0, 1) for all three schedules; diverges at
    /// t = 1 for ou.
    pub fn wronskian(&self, t: f64) -> f64 {
        match self {
            Schedule::Linear => 1.0,
            Schedule::Trigonometric => FRAC_PI_2,
            Schedule::Ou => 1.0 / (1.0 - t * t).max(0.0).sqrt(),
        }
    }

    /// alpha * wronskian in closed form, finite on all of [0, 1].
    ///
    /// This is the coefficient that converts between velocity and score:
    /// s = (beta * b - d(beta)/dt * x) / (alpha * w) and
    /// b = (d(beta)/dt * x + alpha * w * s) / beta.
    pub fn alpha_wronskian(&self, t: f64) -> f64 {
        match self {
            Schedule::Linear => 1.0 - t,
            Schedule::Trigonometric => FRAC_PI_2 * (FRAC_PI_2 * t).cos(),
            Schedule::Ou => 1.0,
        }
    }

    /// Whether alpha^2 + beta^2 = 1 identically.
    pub fn is_variance_preserving(&self) -> bool {
        matches!(self, Schedule::Trigonometric | Schedule::Ou)
    }
}

/// Constructs a schedule by name. Thin alias for [`Schedule::from_name`].
pub fn make_schedule(name: &str) -> Result<Schedule> {
    Schedule::from_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const ALL: [Schedule; 3] = [Schedule::Linear, Schedule::Trigonometric, Schedule::Ou];

    #[test]
    fn boundary_conditions() {
        for s in ALL {
            assert_relative_eq!(s.alpha(0.0), 1.0, max_relative = 1e-12);
            assert_relative_eq!(s.beta(0.0), 0.0, max_relative = 1e-12);
            assert!(s.alpha(1.0).abs() < 1e-12, "{s:?}");
            assert_relative_eq!(s.beta(1.0), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn known_values() {
        let lin = make_schedule("linear").unwrap();
        assert_eq!(lin.alpha(0.25), 0.75);
        assert_eq!(lin.beta(0.25), 0.25);

        let trig = make_schedule("trigonometric").unwrap();
        assert_eq!(trig.alpha(0.0), 1.0);
        assert_eq!(trig.beta(0.0), 0.0);

        let ou = make_schedule("ou").unwrap();
        assert_relative_eq!(ou.alpha(0.6), 0.8, max_relative = 1e-15);
        assert_eq!(ou.beta(0.6), 0.6);
    }

    #[test]
    fn unknown_name_is_config_error() {
        assert!(matches!(
            make_schedule("cosine"),
            Err(crate::error::Error::Config(_))
        ));
    }

    #[test]
    fn variance_preserving_flag_matches_identity() {
        for s in ALL {
            let mut max_dev: f64 = 0.0;
            for i in 0..=100 {
                let t = i as f64 / 100.0;
                let v = s.alpha(t).powi(2) + s.beta(t).powi(2);
                max_dev = max_dev.max((v - 1.0).abs());
            }
            if s.is_variance_preserving() {
                assert!(max_dev < 1e-12, "{s:?} deviates by {max_dev}");
            } else {
                assert!(max_dev > 0.1, "{s:?} unexpectedly variance preserving");
            }
        }
    }

    #[test]
    fn product_accessors_match_factors() {
        for s in ALL {
            for i in 1..100 {
                let t = i as f64 / 101.0;
                assert_relative_eq!(
                    s.alpha_alpha_dot(t),
                    s.alpha(t) * s.alpha_dot(t),
                    max_relative = 1e-12,
                    epsilon = 1e-14
                );
                assert_relative_eq!(
                    s.beta_beta_dot(t),
                    s.beta(t) * s.beta_dot(t),
                    max_relative = 1e-12,
                    epsilon = 1e-14
                );
                let w = s.alpha(t) * s.beta_dot(t) - s.alpha_dot(t) * s.beta(t);
                assert_relative_eq!(s.wronskian(t), w, max_relative = 1e-12);
                assert_relative_eq!(s.alpha_wronskian(t), s.alpha(t) * w, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn products_finite_at_endpoints() {
        for s in ALL {
            for t in [0.0, 1.0] {
                assert!(s.alpha_alpha_dot(t).is_finite());
                assert!(s.beta_beta_dot(t).is_finite());
                assert!(s.alpha_wronskian(t).is_finite());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        // Centered differences converge at O(h^2); with h = 1e-5 the
        // truncation error is ~1e-10 times the third derivative scale.
        #[test]
        fn derivatives_match_finite_differences(t in 0.01f64..0.99, idx in 0usize..3) {
            let s = ALL[idx];
            let h = 1e-5;
            let da = (s.alpha(t + h) - s.alpha(t - h)) / (2.0 * h);
            let db = (s.beta(t + h) - s.beta(t - h)) / (2.0 * h);
            prop_assert!((da - s.alpha_dot(t)).abs() < 1e-7 * (1.0 + s.alpha_dot(t).abs()));
            prop_assert!((db - s.beta_dot(t)).abs() < 1e-7 * (1.0 + s.beta_dot(t).abs()));
        }
    }
}
