//! Equal arc-length resampling of paths on SO(3) and SE(3).
//!
//! A rotation path R_0..R_N is described by its left increments
//! s_i = log(R_i R_{i-1}^-1), whose norms are the geodesic angles between
//! consecutive poses. Cumulative angles define arc-length abscissae exactly
//! as chord lengths do in R^d, and a resampled pose at fraction f of segment
//! p is exp(f s_{p+1}) R_p. Working with increments keeps every logarithm
//! well inside the principal branch as long as no single increment
//! approaches pi; an increment at the branch cut is reported as an error
//! instead of silently flipping sign.
//!
//! Rigid motions add a translation part. Its increments are plain
//! differences, and segment lengths combine both parts through the mixed
//! norm sqrt(|dt|^2 + lambda^2 |s|^2) with a configurable rotation scale.
//!
//! The exponential and logarithm use Rodrigues' formula with Taylor
//! expansions below 1e-4 radians and a symmetric-part reconstruction of the
//! axis near pi, where the antisymmetric part degenerates.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::reparam::Resampler;

/// Increment angles at or above this are too close to the branch cut.
const BRANCH_TOL: f64 = std::f64::consts::PI - 1e-6;
/// Below this angle the exponential and logarithm use Taylor expansions.
const SMALL_ANGLE: f64 = 1e-4;
/// Above pi minus this the logarithm reconstructs the axis from the
/// symmetric part.
const NEAR_PI: f64 = 1e-4;

fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -w.z, w.y,
        w.z, 0.0, -w.x,
        -w.y, w.x, 0.0,
    )
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// A rotation matrix in SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps a matrix after checking orthonormality and orientation.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let defect = (m.transpose() * m - Matrix3::identity()).abs().max();
        if !defect.is_finite() || defect > 1e-9 {
            return Err(Error::Domain(format!(
                "matrix is not orthonormal (defect {defect:.3e})"
            )));
        }
        if m.determinant() < 0.0 {
            return Err(Error::Domain("matrix is orientation-reversing".into()));
        }
        Ok(Rotation(m))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Rodrigues' formula, stable at all angles.
    pub fn exp(w: &Vector3<f64>) -> Self {
        let theta = w.norm();
        let k = hat(w);
        let (a, b) = if theta < SMALL_ANGLE {
            let t2 = theta * theta;
            (
                1.0 - t2 / 6.0 * (1.0 - t2 / 20.0),
                0.5 * (1.0 - t2 / 12.0 * (1.0 - t2 / 30.0)),
            )
        } else {
            let t2 = theta * theta;
            (theta.sin() / theta, (1.0 - theta.cos()) / t2)
        };
        Rotation(Matrix3::identity() + k * a + k * k * b)
    }

    /// Rotation angle in [0, pi].
    pub fn angle(&self) -> f64 {
        (((self.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0)).acos()
    }

    /// Principal logarithm as an axis-angle vector with angle in [0, pi].
    /// At exactly pi the axis sign is ambiguous; this returns the branch
    /// whose largest axis component is positive.
    pub fn log(&self) -> Vector3<f64> {
        let theta = self.angle();
        let anti = vee(&(self.0 - self.0.transpose())) / 2.0;
        if theta < SMALL_ANGLE {
            // anti = sin(theta) * axis; invert the sinc series.
            let t2 = theta * theta;
            return anti * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0);
        }
        if theta < std::f64::consts::PI - NEAR_PI {
            return anti * (theta / theta.sin());
        }
        // Near pi: (R + R^T)/2 = cos(theta) I + (1 - cos(theta)) aa^T has a
        // well-conditioned rank-one part even where sin(theta) vanishes.
        let c = theta.cos();
        let outer = (self.0 + self.0.transpose()) / 2.0 - Matrix3::identity() * c;
        let scale = 1.0 - c;
        let mut k = 0;
        for i in 1..3 {
            if outer[(i, i)] > outer[(k, k)] {
                k = i;
            }
        }
        let mut axis = Vector3::zeros();
        axis[k] = (outer[(k, k)] / scale).max(0.0).sqrt();
        for i in 0..3 {
            if i != k {
                axis[i] = outer[(i, k)] / (scale * axis[k]);
            }
        }
        let norm = axis.norm();
        if norm <= 0.0 {
            return Vector3::zeros();
        }
        axis /= norm;
        // Align with the antisymmetric part while sin(theta) is still
        // informative; otherwise fix a deterministic sign convention.
        let reference = axis.dot(&anti);
        if reference < 0.0 {
            axis = -axis;
        } else if reference == 0.0 {
            let mut m = 0;
            for i in 1..3 {
                if axis[i].abs() > axis[m].abs() {
                    m = i;
                }
            }
            if axis[m] < 0.0 {
                axis = -axis;
            }
        }
        axis * theta
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Rotation(self.0 * other.0)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Geodesic distance to another rotation.
    pub fn distance(&self, other: &Rotation) -> f64 {
        self.compose(&other.inverse()).angle()
    }

    /// Projects back onto SO(3) by Gram-Schmidt, absorbing the slow drift
    /// from long chains of products.
    pub fn renormalized(&self) -> Self {
        let c0 = self.0.column(0).normalize();
        let mut c1 = self.0.column(1).into_owned();
        c1 -= c0 * c0.dot(&c1);
        let c1 = c1.normalize();
        let c2 = c0.cross(&c1);
        Rotation(Matrix3::from_columns(&[c0, c1, c2]))
    }
}

/// A rigid motion x -> R x + t in SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl RigidMotion {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn act(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.translation
    }

    pub fn compose(&self, other: &RigidMotion) -> Self {
        Self {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rot = self.rotation.inverse();
        Self {
            rotation: rot,
            translation: -rot.rotate(&self.translation),
        }
    }
}

/// Equal-angle resampler for rotation paths.
#[derive(Debug, Clone, Copy)]
pub struct So3Reparam {
    pub max_passes: usize,
    pub stop_ratio: f64,
}

impl Default for So3Reparam {
    fn default() -> Self {
        Self {
            max_passes: 2000,
            stop_ratio: 3e-8,
        }
    }
}

/// Equal mixed-norm resampler for rigid-motion paths.
#[derive(Debug, Clone, Copy)]
pub struct Se3Reparam {
    pub max_passes: usize,
    pub stop_ratio: f64,
    /// Weight of the rotation angle against the translation distance in the
    /// segment norm.
    pub rotation_scale: f64,
}

impl Default for Se3Reparam {
    fn default() -> Self {
        Self {
            max_passes: 2000,
            stop_ratio: 3e-8,
            rotation_scale: 1.0,
        }
    }
}

struct So3Increments {
    /// log(R_i R_{i-1}^-1) for i = 1..N.
    steps: Vec<Vector3<f64>>,
    lengths: Vec<f64>,
}

fn so3_increments(path: &[Rotation]) -> Result<So3Increments> {
    let mut steps = Vec::with_capacity(path.len() - 1);
    let mut lengths = Vec::with_capacity(path.len() - 1);
    for (i, w) in path.windows(2).enumerate() {
        let inc = w[1].compose(&w[0].inverse());
        let angle = inc.angle();
        if angle >= BRANCH_TOL {
            return Err(Error::BranchAmbiguity { index: i + 1, angle });
        }
        steps.push(inc.log());
        lengths.push(angle);
    }
    Ok(So3Increments { steps, lengths })
}

fn spread(lengths: &[f64]) -> f64 {
    let max = lengths.iter().cloned().fold(0.0f64, f64::max);
    let min = lengths.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min - 1.0
    }
}

fn abscissae_from_lengths(lengths: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = lengths.iter().sum();
    if !(total > 1e-300) {
        return None;
    }
    let mut alpha = Vec::with_capacity(lengths.len() + 1);
    alpha.push(0.0);
    let mut acc = 0.0;
    for l in lengths {
        acc += l;
        alpha.push(acc / total);
    }
    *alpha.last_mut().unwrap() = 1.0;
    Some(alpha)
}

fn so3_pass(path: &[Rotation], inc: &So3Increments, alpha: &[f64], n_points: usize) -> Vec<Rotation> {
    let mut out = Vec::with_capacity(n_points);
    out.push(path[0]);
    let mut seg = 0usize;
    for j in 1..n_points - 1 {
        let u = j as f64 / (n_points - 1) as f64;
        while seg + 2 < path.len() && alpha[seg + 1] <= u {
            seg += 1;
        }
        let (lo, hi) = (alpha[seg], alpha[seg + 1]);
        let f = if hi > lo { (u - lo) / (hi - lo) } else { 0.0 };
        let pose = Rotation::exp(&(inc.steps[seg] * f)).compose(&path[seg]);
        out.push(pose.renormalized());
    }
    out.push(path[path.len() - 1]);
    out
}

impl Resampler<Rotation> for So3Reparam {
    fn resample(&self, path: &[Rotation], n_points: usize) -> Result<Vec<Rotation>> {
        if path.len() < 2 {
            return Err(Error::Config("path needs at least two poses".into()));
        }
        if n_points < 2 {
            return Err(Error::Config("resampling needs at least two output poses".into()));
        }
        let inc = so3_increments(path)?;
        if path.len() == n_points && spread(&inc.lengths) <= self.stop_ratio {
            return Ok(path.to_vec());
        }
        let alpha = match abscissae_from_lengths(&inc.lengths) {
            None => return Ok(vec![path[0]; n_points]),
            Some(a) => a,
        };
        let mut current = so3_pass(path, &inc, &alpha, n_points);
        for _ in 1..self.max_passes {
            let inc = so3_increments(&current)?;
            if spread(&inc.lengths) <= self.stop_ratio {
                return Ok(current);
            }
            let alpha = match abscissae_from_lengths(&inc.lengths) {
                None => return Ok(current),
                Some(a) => a,
            };
            current = so3_pass(&current, &inc, &alpha, n_points);
        }
        log::warn!("rotation resampling stopped before reaching tolerance");
        Ok(current)
    }
}

struct Se3Increments {
    rot_steps: Vec<Vector3<f64>>,
    trans_steps: Vec<Vector3<f64>>,
    lengths: Vec<f64>,
}

fn se3_increments(path: &[RigidMotion], rotation_scale: f64) -> Result<Se3Increments> {
    let mut rot_steps = Vec::with_capacity(path.len() - 1);
    let mut trans_steps = Vec::with_capacity(path.len() - 1);
    let mut lengths = Vec::with_capacity(path.len() - 1);
    for (i, w) in path.windows(2).enumerate() {
        let inc = w[1].rotation.compose(&w[0].rotation.inverse());
        let angle = inc.angle();
        if angle >= BRANCH_TOL {
            return Err(Error::BranchAmbiguity { index: i + 1, angle });
        }
        let dt = w[1].translation - w[0].translation;
        lengths.push((dt.norm_squared() + (rotation_scale * angle).powi(2)).sqrt());
        rot_steps.push(inc.log());
        trans_steps.push(dt);
    }
    Ok(Se3Increments {
        rot_steps,
        trans_steps,
        lengths,
    })
}

fn se3_pass(
    path: &[RigidMotion],
    inc: &Se3Increments,
    alpha: &[f64],
    n_points: usize,
) -> Vec<RigidMotion> {
    let mut out = Vec::with_capacity(n_points);
    out.push(path[0]);
    let mut seg = 0usize;
    for j in 1..n_points - 1 {
        let u = j as f64 / (n_points - 1) as f64;
        while seg + 2 < path.len() && alpha[seg + 1] <= u {
            seg += 1;
        }
        let (lo, hi) = (alpha[seg], alpha[seg + 1]);
        let f = if hi > lo { (u - lo) / (hi - lo) } else { 0.0 };
        let rotation = Rotation::exp(&(inc.rot_steps[seg] * f))
            .compose(&path[seg].rotation)
            .renormalized();
        let translation = path[seg].translation + inc.trans_steps[seg] * f;
        out.push(RigidMotion::new(rotation, translation));
    }
    out.push(path[path.len() - 1]);
    out
}

impl Resampler<RigidMotion> for Se3Reparam {
    fn resample(&self, path: &[RigidMotion], n_points: usize) -> Result<Vec<RigidMotion>> {
        if path.len() < 2 {
            return Err(Error::Config("path needs at least two poses".into()));
        }
        if n_points < 2 {
            return Err(Error::Config("resampling needs at least two output poses".into()));
        }
        if !(self.rotation_scale.is_finite() && self.rotation_scale >= 0.0) {
            return Err(Error::Config("rotation_scale must be finite and nonnegative".into()));
        }
        let inc = se3_increments(path, self.rotation_scale)?;
        if path.len() == n_points && spread(&inc.lengths) <= self.stop_ratio {
            return Ok(path.to_vec());
        }
        let alpha = match abscissae_from_lengths(&inc.lengths) {
            None => return Ok(vec![path[0]; n_points]),
            Some(a) => a,
        };
        let mut current = se3_pass(path, &inc, &alpha, n_points);
        for _ in 1..self.max_passes {
            let inc = se3_increments(&current, self.rotation_scale)?;
            if spread(&inc.lengths) <= self.stop_ratio {
                return Ok(current);
            }
            let alpha = match abscissae_from_lengths(&inc.lengths) {
                None => return Ok(current),
                Some(a) => a,
            };
            current = se3_pass(&current, &inc, &alpha, n_points);
        }
        log::warn!("rigid-motion resampling stopped before reaching tolerance");
        Ok(current)
    }
}

/// Resamples a rotation path to `n_points` equally spaced poses.
pub fn reparametrize_so3(path: &[Rotation], n_points: usize) -> Result<Vec<Rotation>> {
    So3Reparam::default().resample(path, n_points)
}

/// Resamples a rigid-motion path to `n_points` poses equally spaced in the
/// mixed translation-rotation norm.
pub fn reparametrize_se3(path: &[RigidMotion], n_points: usize) -> Result<Vec<RigidMotion>> {
    Se3Reparam::default().resample(path, n_points)
}
