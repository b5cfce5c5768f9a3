//! Small numerical and statistical helpers shared across modules and tests.

use nalgebra::DVector;

/// log(sum(exp(v))) without overflow.
pub fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = v.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// Log density of the standard normal in d dimensions.
pub fn standard_normal_logpdf(x: &DVector<f64>) -> f64 {
    let d = x.len() as f64;
    -0.5 * x.norm_squared() - 0.5 * d * (2.0 * std::f64::consts::PI).ln()
}

/// Two-sample Kolmogorov-Smirnov test on scalar samples.
///
/// Returns (statistic, p_value) with the asymptotic p-value
/// Q(lambda) = 2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2) evaluated at
/// the effective-size corrected argument.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert!(!a.is_empty() && !b.is_empty(), "empty sample");
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let xa = a[i];
        let xb = b[j];
        if xa <= xb {
            i += 1;
        }
        if xb <= xa {
            j += 1;
        }
        let diff = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        d = d.max(diff);
    }
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let sqrt_ne = ne.sqrt();
    let lambda = (sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d;
    (d, ks_survival(lambda))
}

/// Kolmogorov distribution survival function.
fn ks_survival(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Distance from a point to the segment [a, b].
pub fn point_segment_distance(p: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let ab = b - a;
    let denom = ab.norm_squared();
    if denom == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&ab) / denom).clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

/// Distance from a point to a polyline given by its vertices.
pub fn point_polyline_distance(p: &DVector<f64>, poly: &[DVector<f64>]) -> f64 {
    assert!(!poly.is_empty(), "empty polyline");
    if poly.len() == 1 {
        return (p - &poly[0]).norm();
    }
    poly.windows(2)
        .map(|w| point_segment_distance(p, &w[0], &w[1]))
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric Hausdorff distance between two polylines, measuring each
/// vertex against the other curve's segments.
pub fn polyline_hausdorff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let one_way = |from: &[DVector<f64>], to: &[DVector<f64>]| {
        from.iter()
            .map(|p| point_polyline_distance(p, to))
            .fold(0.0f64, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}
