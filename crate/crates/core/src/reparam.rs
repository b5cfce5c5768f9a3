//! Equal arc-length reparametrization of discrete paths.
//!
//! After each dynamics step the string is resampled so its images sit at
//! equal arc-length intervals. Positions are interpolated against the
//! normalized cumulative chord lengths alpha_i, either piecewise linearly
//! along the polyline or with a natural cubic spline through
//! (alpha_i, phi_i) evaluated at uniform abscissae. A single interpolation
//! pass equalizes arc positions but not chord lengths on curved paths, so
//! the pass is iterated until the chord spread meets tolerance; calling the
//! operation on an already equalized path returns it unchanged, which makes
//! the operation idempotent.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Total length below which a path counts as a single point.
const DEGENERATE_LENGTH: f64 = 1e-300;

/// Interpolant used between images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplineKind {
    Linear,
    Cubic,
}

/// Resamples a path to n equally spaced points, pinning both endpoints.
pub trait Resampler<P> {
    fn resample(&self, path: &[P], n_points: usize) -> Result<Vec<P>>;
}

/// Equal arc-length resampler for paths in R^d.
#[derive(Debug, Clone, Copy)]
pub struct EuclideanReparam {
    pub spline: SplineKind,
    /// Iteration cap on the equalization loop.
    pub max_passes: usize,
    /// Stop once max/min chord ratio is within 1 + stop_ratio.
    pub stop_ratio: f64,
}

impl EuclideanReparam {
    pub fn new(spline: SplineKind) -> Self {
        let stop_ratio = match spline {
            // Internal stops sit below the advertised postconditions
            // (1e-6 linear, 1e-4 cubic) to leave headroom.
            SplineKind::Linear => 3e-7,
            SplineKind::Cubic => 3e-5,
        };
        Self {
            spline,
            // Smooth paths settle in under ten passes; the cap only matters
            // for highly jagged inputs, whose slowest observed cases need a
            // few hundred.
            max_passes: 2000,
            stop_ratio,
        }
    }
}

/// Chord lengths of consecutive points.
pub fn chord_lengths(path: &[DVector<f64>]) -> Vec<f64> {
    path.windows(2).map(|w| (&w[1] - &w[0]).norm()).collect()
}

/// Total polyline length.
pub fn arc_length(path: &[DVector<f64>]) -> f64 {
    chord_lengths(path).iter().sum()
}

/// (max - min) / min over chord lengths; infinite when a chord vanishes.
pub fn chord_spread(path: &[DVector<f64>]) -> f64 {
    let lengths = chord_lengths(path);
    let max = lengths.iter().cloned().fold(0.0f64, f64::max);
    let min = lengths.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min - 1.0
    }
}

/// Normalized cumulative chord abscissae in [0, 1].
fn abscissae(path: &[DVector<f64>]) -> Option<Vec<f64>> {
    let lengths = chord_lengths(path);
    let total: f64 = lengths.iter().sum();
    if !(total > DEGENERATE_LENGTH) {
        return None;
    }
    let mut alpha = Vec::with_capacity(path.len());
    alpha.push(0.0);
    let mut acc = 0.0;
    for l in &lengths {
        acc += l;
        alpha.push(acc / total);
    }
    *alpha.last_mut().unwrap() = 1.0;
    Some(alpha)
}

fn linear_pass(path: &[DVector<f64>], alpha: &[f64], n_points: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(n_points);
    out.push(path[0].clone());
    let mut seg = 0usize;
    for j in 1..n_points - 1 {
        let u = j as f64 / (n_points - 1) as f64;
        while seg + 2 < path.len() && alpha[seg + 1] <= u {
            seg += 1;
        }
        let (lo, hi) = (alpha[seg], alpha[seg + 1]);
        let frac = if hi > lo { (u - lo) / (hi - lo) } else { 0.0 };
        out.push(&path[seg] + (&path[seg + 1] - &path[seg]) * frac);
    }
    out.push(path[path.len() - 1].clone());
    out
}

fn cubic_pass(path: &[DVector<f64>], alpha: &[f64], n_points: usize) -> Vec<DVector<f64>> {
    // Coincident images produce repeated knots; keep the first of each run
    // so the spline sees strictly increasing abscissae.
    let mut knots = Vec::with_capacity(path.len());
    let mut values = Vec::with_capacity(path.len());
    for (i, &a) in alpha.iter().enumerate() {
        if i == 0 || a > *knots.last().unwrap() + 1e-15 {
            knots.push(a);
            values.push(path[i].clone());
        }
    }
    if let Some(last) = knots.last_mut() {
        *last = 1.0;
    }
    if knots.len() < 3 {
        return linear_pass(path, alpha, n_points);
    }
    let spline = CubicSpline::natural(knots, values);
    let mut out = Vec::with_capacity(n_points);
    out.push(path[0].clone());
    for j in 1..n_points - 1 {
        out.push(spline.eval(j as f64 / (n_points - 1) as f64));
    }
    out.push(path[path.len() - 1].clone());
    out
}

impl Resampler<DVector<f64>> for EuclideanReparam {
    fn resample(&self, path: &[DVector<f64>], n_points: usize) -> Result<Vec<DVector<f64>>> {
        if path.len() < 2 {
            return Err(Error::Config("path needs at least two points".into()));
        }
        if n_points < 2 {
            return Err(Error::Config("resampling needs at least two output points".into()));
        }
        // Idempotence: a path that already meets tolerance (and the right
        // count) is returned untouched.
        if path.len() == n_points && chord_spread(path) <= self.stop_ratio {
            return Ok(path.to_vec());
        }
        let initial_length = arc_length(path);
        if !(initial_length > DEGENERATE_LENGTH) {
            // Collapsed path: every point coincides, nothing to space.
            return Ok(vec![path[0].clone(); n_points]);
        }
        // Closed paths with no nearby equal-chord configuration contract
        // toward their common endpoint; stop once the length has shrunk by
        // this factor instead of iterating to underflow. Paths with distinct
        // endpoints keep length above the endpoint separation and never
        // trigger this.
        let collapse_floor = initial_length * 1e-9;
        // Cubic passes refine the shape but relax chord lengths very slowly
        // on jagged data, so after a budget of spline passes the loop
        // finishes equalizing with linear passes along the refined polyline.
        // Smooth paths converge within a handful of passes and never reach
        // the switch.
        const CUBIC_PASS_BUDGET: usize = 50;
        let one_pass = |pts: &[DVector<f64>], pass: usize| -> Option<Vec<DVector<f64>>> {
            let alpha = abscissae(pts)?;
            let kind = match self.spline {
                SplineKind::Cubic if pass < CUBIC_PASS_BUDGET => SplineKind::Cubic,
                _ => SplineKind::Linear,
            };
            Some(match kind {
                SplineKind::Linear => linear_pass(pts, &alpha, n_points),
                SplineKind::Cubic => cubic_pass(pts, &alpha, n_points),
            })
        };
        let mut current = match one_pass(path, 0) {
            Some(next) => next,
            None => return Ok(vec![path[0].clone(); n_points]),
        };
        for pass in 1..self.max_passes {
            if chord_spread(&current) <= self.stop_ratio {
                return Ok(current);
            }
            if arc_length(&current) < collapse_floor {
                log::warn!("path collapsed during equal arc-length iteration");
                return Ok(current);
            }
            match one_pass(&current, pass) {
                Some(next) => current = next,
                None => return Ok(current),
            }
        }
        if chord_spread(&current) > self.stop_ratio {
            log::warn!(
                "reparametrization stopped at spread {:.3e} after {} passes",
                chord_spread(&current),
                self.max_passes
            );
        }
        Ok(current)
    }
}

/// Natural cubic spline through vector-valued data on strictly increasing
/// knots. Second derivatives vanish at both ends; the interior moments come
/// from the standard tridiagonal system solved by a Thomas sweep with the
/// vector right-hand side handled componentwise.
pub(crate) struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<DVector<f64>>,
    moments: Vec<DVector<f64>>,
}

impl CubicSpline {
    pub(crate) fn natural(knots: Vec<f64>, values: Vec<DVector<f64>>) -> Self {
        let n = knots.len();
        assert!(n >= 3, "natural spline needs at least three knots");
        assert_eq!(n, values.len());
        let d = values[0].len();
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        debug_assert!(h.iter().all(|&v| v > 0.0), "knots must increase strictly");

        // Tridiagonal system for interior moments M_1..M_{n-2}.
        let m = n - 2;
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut rhs: Vec<DVector<f64>> = Vec::with_capacity(m);
        for i in 0..m {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            upper[i] = h[i + 1];
            let left = (&values[i + 1] - &values[i]) / h[i];
            let right = (&values[i + 2] - &values[i + 1]) / h[i + 1];
            rhs.push((right - left) * 6.0);
        }
        // Forward sweep; the sub-diagonal entry of row i is h[i].
        for i in 1..m {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            let prev = rhs[i - 1].clone();
            rhs[i] -= prev * w;
        }
        let mut interior: Vec<DVector<f64>> = vec![DVector::zeros(d); m];
        interior[m - 1] = &rhs[m - 1] / diag[m - 1];
        for i in (0..m - 1).rev() {
            interior[i] = (&rhs[i] - &interior[i + 1] * upper[i]) / diag[i];
        }

        let mut moments = Vec::with_capacity(n);
        moments.push(DVector::zeros(d));
        moments.extend(interior);
        moments.push(DVector::zeros(d));
        Self {
            knots,
            values,
            moments,
        }
    }

    pub(crate) fn eval(&self, u: f64) -> DVector<f64> {
        let n = self.knots.len();
        let i = match self
            .knots
            .binary_search_by(|k| k.partial_cmp(&u).unwrap())
        {
            Ok(idx) => idx.min(n - 2),
            Err(idx) => idx.clamp(1, n - 1) - 1,
        };
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - u) / h;
        let b = (u - self.knots[i]) / h;
        let h2_over_6 = h * h / 6.0;
        &self.values[i] * a
            + &self.values[i + 1] * b
            + &self.moments[i] * ((a.powi(3) - a) * h2_over_6)
            + &self.moments[i + 1] * ((b.powi(3) - b) * h2_over_6)
    }
}
