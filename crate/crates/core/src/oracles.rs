//! Independent reference constructions used to verify the main dynamics.
//!
//! Nothing here shares code with the string evolution or reparametrization
//! machinery: the saddle locator works on a density grid with a union-find
//! flood, the frozen-time path relaxer does bare steepest descent with its
//! own single-pass redistribution, and the principal-curve builder is the
//! classic assign-to-nearest / average / redistribute batch iteration.
//! Agreement between these and the dynamical results is evidence for both.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Rectangular evaluation grid in the plane.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub x_min: [f64; 2],
    pub x_max: [f64; 2],
    pub n: [usize; 2],
}

impl GridSpec {
    pub fn new(x_min: [f64; 2], x_max: [f64; 2], n: [usize; 2]) -> Result<Self> {
        for k in 0..2 {
            if !(x_max[k] > x_min[k]) {
                return Err(Error::Config(format!(
                    "grid axis {k} is empty: [{}, {}]",
                    x_min[k], x_max[k]
                )));
            }
            if n[k] < 2 {
                return Err(Error::Config("grids need at least 2 nodes per axis".into()));
            }
        }
        Ok(Self { x_min, x_max, n })
    }

    pub fn spacing(&self) -> [f64; 2] {
        [
            (self.x_max[0] - self.x_min[0]) / (self.n[0] - 1) as f64,
            (self.x_max[1] - self.x_min[1]) / (self.n[1] - 1) as f64,
        ]
    }

    fn point(&self, i: usize, j: usize) -> (f64, f64) {
        let h = self.spacing();
        (
            self.x_min[0] + i as f64 * h[0],
            self.x_min[1] + j as f64 * h[1],
        )
    }

    fn nearest_node(&self, p: [f64; 2]) -> Result<usize> {
        let h = self.spacing();
        let mut idx = [0usize; 2];
        for k in 0..2 {
            if p[k] < self.x_min[k] - 0.5 * h[k] || p[k] > self.x_max[k] + 0.5 * h[k] {
                return Err(Error::Domain(format!(
                    "point coordinate {} lies outside the grid on axis {k}",
                    p[k]
                )));
            }
            let f = ((p[k] - self.x_min[k]) / h[k]).round();
            idx[k] = (f.max(0.0) as usize).min(self.n[k] - 1);
        }
        Ok(idx[0] * self.n[1] + idx[1])
    }
}

/// Result of the grid barrier search between two basins.
#[derive(Debug, Clone)]
pub enum SaddleOutcome {
    /// The basins merge strictly below both endpoints: a genuine barrier,
    /// located at the merging grid node.
    Saddle {
        point: DVector<f64>,
        log_density: f64,
    },
    /// The endpoints connect without descending below the lower one.
    NoBarrier { merge_level: f64 },
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Finds the highest point of the lowest path between `a` and `b` on a grid
/// of log densities by activating nodes in descending order and watching
/// when the two basins first connect (4-neighbor adjacency).
///
/// The merge level always satisfies L <= min(logp(a), logp(b)); the outcome
/// is a saddle only when the gap exceeds `min_barrier_depth` (in log-density
/// units), which filters out grid-resolution artifacts on barrier-free
/// landscapes.
pub fn locate_saddle_2d(
    log_density: &dyn Fn(f64, f64) -> f64,
    grid: &GridSpec,
    a: [f64; 2],
    b: [f64; 2],
    min_barrier_depth: f64,
) -> Result<SaddleOutcome> {
    if !(min_barrier_depth >= 0.0) {
        return Err(Error::Config("min_barrier_depth must be nonnegative".into()));
    }
    let (nx, ny) = (grid.n[0], grid.n[1]);
    let n_nodes = nx * ny;
    let node_a = grid.nearest_node(a)?;
    let node_b = grid.nearest_node(b)?;
    if node_a == node_b {
        return Err(Error::Domain(
            "both endpoints map to the same grid node; refine the grid".into(),
        ));
    }

    let mut values = Vec::with_capacity(n_nodes);
    for i in 0..nx {
        for j in 0..ny {
            let (x, y) = grid.point(i, j);
            let v = log_density(x, y);
            if v.is_nan() {
                return Err(Error::Domain(format!(
                    "log density is NaN at grid node ({x}, {y})"
                )));
            }
            values.push(v);
        }
    }

    let mut order: Vec<usize> = (0..n_nodes).collect();
    order.sort_by(|&u, &v| {
        values[v]
            .partial_cmp(&values[u])
            .expect("NaN values were rejected above")
            .then(u.cmp(&v))
    });

    let mut uf = UnionFind::new(n_nodes);
    let mut active = vec![false; n_nodes];
    for &u in &order {
        active[u] = true;
        let (i, j) = (u / ny, u % ny);
        if i > 0 && active[u - ny] {
            uf.union(u, u - ny);
        }
        if i + 1 < nx && active[u + ny] {
            uf.union(u, u + ny);
        }
        if j > 0 && active[u - 1] {
            uf.union(u, u - 1);
        }
        if j + 1 < ny && active[u + 1] {
            uf.union(u, u + 1);
        }
        if active[node_a] && active[node_b] && uf.find(node_a) == uf.find(node_b) {
            let level = values[u];
            let depth = values[node_a].min(values[node_b]) - level;
            if depth <= min_barrier_depth {
                return Ok(SaddleOutcome::NoBarrier { merge_level: level });
            }
            let (x, y) = grid.point(i, j);
            return Ok(SaddleOutcome::Saddle {
                point: DVector::from_vec(vec![x, y]),
                log_density: level,
            });
        }
    }
    Err(Error::Domain(
        "grid flood finished without connecting the endpoints".into(),
    ))
}

/// Equal-chord redistribution by one pass of linear interpolation along the
/// polyline. Deliberately separate from the production resampler.
fn redistribute_linear(path: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = path.len();
    let mut cum = vec![0.0; n];
    for i in 1..n {
        cum[i] = cum[i - 1] + (&path[i] - &path[i - 1]).norm();
    }
    let total = cum[n - 1];
    if total <= 0.0 {
        return path.to_vec();
    }
    let mut out = Vec::with_capacity(n);
    out.push(path[0].clone());
    let mut seg = 0usize;
    for k in 1..n - 1 {
        let target = total * k as f64 / (n - 1) as f64;
        while seg + 2 < n && cum[seg + 1] < target {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let f = if len > 0.0 { (target - cum[seg]) / len } else { 0.0 };
        out.push(&path[seg] * (1.0 - f) + &path[seg + 1] * f);
    }
    out.push(path[n - 1].clone());
    out
}

/// Settings for the frozen-time steepest-descent relaxation.
#[derive(Debug, Clone)]
pub struct FrozenMepConfig {
    pub step_size: f64,
    pub max_steps: usize,
    /// Convergence threshold on the largest image displacement per step.
    pub tol: f64,
}

impl Default for FrozenMepConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            max_steps: 50_000,
            tol: 1e-9,
        }
    }
}

/// Relaxes a path to a minimum energy path of a frozen landscape: interior
/// images follow the score (ascending the log density toward the ridge
/// between the fixed endpoints) and are redistributed to equal chords after
/// each step.
pub fn frozen_mep_string(
    score: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    init: &[DVector<f64>],
    cfg: &FrozenMepConfig,
) -> Result<Vec<DVector<f64>>> {
    if init.len() < 3 {
        return Err(Error::Config("need at least 3 images".into()));
    }
    if !(cfg.step_size > 0.0 && cfg.step_size.is_finite()) {
        return Err(Error::Config("step_size must be positive".into()));
    }
    let mut path = init.to_vec();
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_steps {
        let mut moved = path.clone();
        for img in moved.iter_mut().take(path.len() - 1).skip(1) {
            *img += score(img) * cfg.step_size;
            if img.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(
                    "frozen relaxation produced a non-finite image".into(),
                ));
            }
        }
        let next = redistribute_linear(&moved);
        residual = path
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        path = next;
        if residual < cfg.tol {
            return Ok(path);
        }
    }
    Err(Error::BudgetExceeded { residual })
}

/// Settings for the batch principal-curve iteration.
#[derive(Debug, Clone)]
pub struct HastieConfig {
    pub n_iterations: usize,
    /// Keep the first and last points fixed at their initial positions,
    /// matching dynamics whose endpoints are clamped.
    pub pin_endpoints: bool,
    /// Neighbor weight of the filter applied to the cell means before
    /// redistribution. Raw cell means admit self-consistent sawtooth fixed
    /// points (each point claims the samples on its own side); the binomial
    /// filter at 0.25 has zero gain on the alternating mode and removes
    /// them. 0 disables smoothing.
    pub smoothing: f64,
}

impl Default for HastieConfig {
    fn default() -> Self {
        Self {
            n_iterations: 50,
            pin_endpoints: false,
            smoothing: 0.25,
        }
    }
}

/// A discrete principal curve and the cells that received no samples on the
/// final iteration (those points were held in place).
#[derive(Debug, Clone)]
pub struct HastieCurve {
    pub points: Vec<DVector<f64>>,
    pub empty_cells: Vec<usize>,
}

/// Batch principal-curve iteration: assign every sample to its nearest
/// curve point, replace each point by its cell mean, then redistribute to
/// equal chords. Empty cells hold their previous position and are flagged.
pub fn hastie_principal_curve(
    samples: &[DVector<f64>],
    init: &[DVector<f64>],
    cfg: &HastieConfig,
) -> Result<HastieCurve> {
    if init.len() < 2 {
        return Err(Error::Config("need at least 2 curve points".into()));
    }
    if samples.is_empty() {
        return Err(Error::Config("need at least one sample".into()));
    }
    let dim = init[0].len();
    if samples.iter().any(|s| s.len() != dim) || init.iter().any(|p| p.len() != dim) {
        return Err(Error::Config("samples and curve points must share a dimension".into()));
    }
    if !(0.0..=0.5).contains(&cfg.smoothing) {
        return Err(Error::Config("smoothing must lie in [0, 0.5]".into()));
    }
    let mut points = init.to_vec();
    let mut empty_cells = Vec::new();
    for _ in 0..cfg.n_iterations {
        let mut sums = vec![DVector::<f64>::zeros(dim); points.len()];
        let mut counts = vec![0usize; points.len()];
        for s in samples {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (k, p) in points.iter().enumerate() {
                let d = (s - p).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            sums[best] += s;
            counts[best] += 1;
        }
        empty_cells.clear();
        let last = points.len() - 1;
        for k in 0..points.len() {
            if cfg.pin_endpoints && (k == 0 || k == last) {
                continue;
            }
            if counts[k] == 0 {
                empty_cells.push(k);
            } else {
                points[k] = &sums[k] / counts[k] as f64;
            }
        }
        if cfg.smoothing > 0.0 && points.len() > 2 {
            let s = cfg.smoothing;
            let mut smoothed = points.clone();
            for k in 1..last {
                smoothed[k] = &points[k - 1] * s + &points[k] * (1.0 - 2.0 * s) + &points[k + 1] * s;
            }
            points = smoothed;
        }
        let redistributed = redistribute_linear(&points);
        if cfg.pin_endpoints {
            points = redistributed;
        } else {
            // Endpoint cells keep their means; only the interior slides.
            let (first, last_pt) = (points[0].clone(), points[last].clone());
            points = redistributed;
            points[0] = first;
            points[last] = last_pt;
        }
    }
    Ok(HastieCurve {
        points,
        empty_cells,
    })
}
