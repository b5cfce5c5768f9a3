//! A small learned score model and its training loop.
//!
//! The network is a plain multilayer perceptron with tanh hidden units that
//! maps (x, t) directly to an estimate of the score of the interpolation
//! marginal. Training minimizes the alpha-weighted denoising objective
//!
//!   E || alpha_t s_hat(x_t, t) + x0 ||^2,   x_t = alpha_t x0 + beta_t x1,
//!
//! whose minimizer is the exact score s(x, t) = -E[x0 | x_t = x] / alpha_t;
//! the alpha^2 weighting keeps the target bounded where the bare score
//! diverges, so every time contributes a comparable gradient.
//!
//! Training is bitwise deterministic for a fixed seed: batches are drawn
//! sequentially from a counter-based generator, per-sample gradients are
//! computed in parallel but reduced in index order, and Adam updates walk
//! the parameter tensors in a fixed order.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{velocity_from_score, FieldOracle, OracleKind};
use crate::mixture::GaussianMixture;
use crate::schedule::Schedule;

/// Checkpoint format revision written into saved models.
const CHECKPOINT_VERSION: u32 = 1;

/// Multilayer perceptron scoring (x, t) pairs.
#[derive(Debug, Clone)]
pub struct MlpScoreModel {
    dim: usize,
    hidden: Vec<usize>,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    trained: bool,
}

impl MlpScoreModel {
    /// Fresh network with the given hidden widths; weights start at
    /// Xavier-scaled normals drawn from `seed`.
    pub fn new(dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("model dimension must be positive".into()));
        }
        if hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        let mut sizes = vec![dim + 1];
        sizes.extend_from_slice(hidden);
        sizes.push(dim);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (2.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(DMatrix::from_fn(fan_out, fan_in, |_, _| {
                scale * rng.sample::<f64, _>(StandardNormal)
            }));
            biases.push(DVector::zeros(fan_out));
        }
        Ok(Self {
            dim,
            hidden: hidden.to_vec(),
            weights,
            biases,
            trained: false,
        })
    }

    /// Desk-scale default architecture, large enough for the
    /// low-dimensional benchmarks.
    pub fn with_default_hidden(dim: usize, seed: u64) -> Result<Self> {
        Self::new(dim, &[64, 128, 64], seed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn input(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        let mut a = DVector::zeros(self.dim + 1);
        a.rows_mut(0, self.dim).copy_from(x);
        a[self.dim] = t;
        a
    }

    /// Estimated score at (t, x).
    pub fn score(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        let mut a = self.input(t, x);
        let last = self.weights.len() - 1;
        for l in 0..=last {
            a = &self.weights[l] * a + &self.biases[l];
            if l < last {
                a.apply(|v| *v = v.tanh());
            }
        }
        a
    }

    /// Forward pass keeping every activation for backpropagation.
    fn forward_cached(&self, t: f64, x: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(self.input(t, x));
        let last = self.weights.len() - 1;
        for l in 0..=last {
            let mut z = &self.weights[l] * acts.last().unwrap() + &self.biases[l];
            if l < last {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    /// Gradient of 0.5 * ||alpha out + x0||^2 for one sample, plus the
    /// unhalved loss value.
    fn sample_gradient(
        &self,
        t: f64,
        x: &DVector<f64>,
        x0: &DVector<f64>,
        alpha: f64,
    ) -> (Gradients, f64) {
        let acts = self.forward_cached(t, x);
        let out = acts.last().unwrap();
        let residual = out * alpha + x0;
        let loss = residual.norm_squared();
        let mut delta = residual * alpha;
        let mut d_weights = vec![DMatrix::zeros(0, 0); self.weights.len()];
        let mut d_biases = vec![DVector::zeros(0); self.biases.len()];
        for l in (0..self.weights.len()).rev() {
            d_weights[l] = &delta * acts[l].transpose();
            d_biases[l] = delta.clone();
            if l > 0 {
                let mut back = self.weights[l].transpose() * delta;
                back.zip_apply(&acts[l], |d, a| *d *= 1.0 - a * a);
                delta = back;
            }
        }
        (
            Gradients {
                weights: d_weights,
                biases: d_biases,
            },
            loss,
        )
    }

    pub fn to_json(&self) -> String {
        let wire = CheckpointWire {
            format_version: CHECKPOINT_VERSION,
            dim: self.dim,
            hidden: self.hidden.clone(),
            trained: self.trained,
            weights: self
                .weights
                .iter()
                .map(|w| {
                    w.row_iter()
                        .map(|r| r.iter().cloned().collect())
                        .collect()
                })
                .collect(),
            biases: self.biases.iter().map(|b| b.iter().cloned().collect()).collect(),
        };
        serde_json::to_string_pretty(&wire).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: CheckpointWire = serde_json::from_str(text)?;
        if wire.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
                wire.format_version
            )));
        }
        let mut model = Self::new(wire.dim, &wire.hidden, 0)?;
        if wire.weights.len() != model.weights.len() || wire.biases.len() != model.biases.len() {
            return Err(Error::Config("checkpoint layer count mismatch".into()));
        }
        for (l, rows) in wire.weights.iter().enumerate() {
            let (nr, nc) = model.weights[l].shape();
            if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
                return Err(Error::Config(format!("checkpoint weight {l} has wrong shape")));
            }
            model.weights[l] =
                DMatrix::from_fn(nr, nc, |i, j| rows[i][j]);
        }
        for (l, vals) in wire.biases.iter().enumerate() {
            if vals.len() != model.biases[l].len() {
                return Err(Error::Config(format!("checkpoint bias {l} has wrong shape")));
            }
            model.biases[l] = DVector::from_vec(vals.clone());
        }
        model.trained = wire.trained;
        Ok(model)
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct CheckpointWire {
    format_version: u32,
    dim: usize,
    hidden: Vec<usize>,
    trained: bool,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

struct Gradients {
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
}

/// Denoising training settings.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Training times are drawn uniformly from [time_floor, 1].
    pub time_floor: f64,
    /// The learning rate decays along a cosine from `learning_rate` to
    /// `learning_rate * final_lr_fraction`, shrinking the stochastic
    /// stationary noise of the final iterate.
    pub final_lr_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch_size: 128,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            time_floor: 1e-3,
            final_lr_fraction: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.time_floor >= 0.0 && self.time_floor < 1.0) {
            return Err(Error::Config("time_floor must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::Config("final_lr_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Mean batch loss per iteration.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub losses: Vec<f64>,
}

struct AdamState {
    m_w: Vec<DMatrix<f64>>,
    v_w: Vec<DMatrix<f64>>,
    m_b: Vec<DVector<f64>>,
    v_b: Vec<DVector<f64>>,
    step: usize,
}

impl AdamState {
    fn new(model: &MlpScoreModel) -> Self {
        Self {
            m_w: model.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            v_w: model.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            m_b: model.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
            v_b: model.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
            step: 0,
        }
    }
}

fn adam_update(
    theta: &mut f64,
    g: f64,
    m: &mut f64,
    v: &mut f64,
    cfg: &TrainConfig,
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    *m = cfg.adam_beta1 * *m + (1.0 - cfg.adam_beta1) * g;
    *v = cfg.adam_beta2 * *v + (1.0 - cfg.adam_beta2) * g * g;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    *theta -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
}

/// Trains the model against the exact interpolation marginals of a target
/// mixture under the given schedule. Deterministic for a fixed config.
pub fn train_score_model(
    model: &mut MlpScoreModel,
    mixture: &GaussianMixture,
    schedule: Schedule,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if mixture.dim() != model.dim {
        return Err(Error::Config(format!(
            "mixture dimension {} does not match model dimension {}",
            mixture.dim(),
            model.dim
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model);
    let mut losses = Vec::with_capacity(cfg.iterations);
    let d = model.dim;

    for iteration in 0..cfg.iterations {
        // Draw the whole batch sequentially so the random stream is
        // independent of how the gradient work is scheduled.
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let t = rng.gen_range(cfg.time_floor..=1.0);
            let x0 = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x1 = mixture.sample(1, &mut rng).pop().unwrap();
            let alpha = schedule.alpha(t);
            let beta = schedule.beta(t);
            let xt = &x0 * alpha + x1 * beta;
            batch.push((t, xt, x0, alpha));
        }
        let results: Vec<(Gradients, f64)> = batch
            .par_iter()
            .map(|(t, xt, x0, alpha)| model.sample_gradient(*t, xt, x0, *alpha))
            .collect();

        let mut mean_loss = 0.0;
        let scale = 1.0 / cfg.batch_size as f64;
        let mut g_w: Vec<DMatrix<f64>> = model
            .weights
            .iter()
            .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
            .collect();
        let mut g_b: Vec<DVector<f64>> =
            model.biases.iter().map(|b| DVector::zeros(b.len())).collect();
        for (grad, loss) in &results {
            mean_loss += loss * scale;
            for l in 0..g_w.len() {
                g_w[l] += &grad.weights[l] * scale;
                g_b[l] += &grad.biases[l] * scale;
            }
        }
        if !mean_loss.is_finite() {
            return Err(Error::TrainingDiverged { iteration });
        }
        losses.push(mean_loss);

        adam.step += 1;
        let bc1 = 1.0 - cfg.adam_beta1.powi(adam.step as i32);
        let bc2 = 1.0 - cfg.adam_beta2.powi(adam.step as i32);
        let progress = iteration as f64 / (cfg.iterations - 1).max(1) as f64;
        let lr_final = cfg.learning_rate * cfg.final_lr_fraction;
        let lr = lr_final
            + (cfg.learning_rate - lr_final)
                * 0.5
                * (1.0 + (std::f64::consts::PI * progress).cos());
        for l in 0..model.weights.len() {
            for idx in 0..model.weights[l].len() {
                adam_update(
                    &mut model.weights[l][idx],
                    g_w[l][idx],
                    &mut adam.m_w[l][idx],
                    &mut adam.v_w[l][idx],
                    cfg,
                    lr,
                    bc1,
                    bc2,
                );
            }
            for idx in 0..model.biases[l].len() {
                adam_update(
                    &mut model.biases[l][idx],
                    g_b[l][idx],
                    &mut adam.m_b[l][idx],
                    &mut adam.v_b[l][idx],
                    cfg,
                    lr,
                    bc1,
                    bc2,
                );
            }
        }
    }
    if cfg.iterations > 0 {
        model.trained = true;
    }
    Ok(TrainReport { losses })
}

/// Field oracle backed by a trained score network. The score is the network
/// output; the velocity comes from the score-velocity identity with the
/// evaluation time clamped away from the endpoints, where the conversion
/// coefficients are singular.
pub struct LearnedScoreOracle {
    model: MlpScoreModel,
    schedule: Schedule,
    time_clamp: f64,
}

impl LearnedScoreOracle {
    pub fn new(model: MlpScoreModel, schedule: Schedule) -> Result<Self> {
        if !model.is_trained() {
            return Err(Error::Config(
                "refusing to build a field oracle from an untrained model".into(),
            ));
        }
        Ok(Self {
            model,
            schedule,
            time_clamp: 1e-2,
        })
    }

    pub fn model(&self) -> &MlpScoreModel {
        &self.model
    }
}

impl FieldOracle for LearnedScoreOracle {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn kind(&self) -> OracleKind {
        OracleKind::LearnedNet
    }

    fn velocity(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        let tc = t.clamp(self.time_clamp, 1.0 - self.time_clamp);
        let s = self.model.score(tc, x);
        velocity_from_score(self.schedule, tc, x, &s)
            .expect("conversion is regular away from the clamped endpoints")
    }

    fn score(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.model.score(t.clamp(self.time_clamp, 1.0), x)
    }
}

/// One row of the score accuracy curve.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ScoreErrorPoint {
    pub t: f64,
    pub mean_relative_error: f64,
    /// Evaluation points dropped because the exact score norm fell below
    /// the degeneracy cutoff.
    pub n_excluded: usize,
}

/// Mean relative score error of `approx` against the exact mixture score at
/// each requested time, evaluated on `n_samples` draws from the exact
/// interpolation marginal.
pub fn relative_score_error_curve(
    approx: &dyn FieldOracle,
    mixture: &GaussianMixture,
    schedule: Schedule,
    times: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<ScoreErrorPoint>> {
    if n_samples == 0 {
        return Err(Error::Config("need at least one evaluation sample".into()));
    }
    if approx.dim() != mixture.dim() {
        return Err(Error::Config(format!(
            "oracle dimension {} does not match mixture dimension {}",
            approx.dim(),
            mixture.dim()
        )));
    }
    let exact = crate::fields::AnalyticGmmOracle::new(mixture.clone(), schedule);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        Schedule::check_time(t)?;
        let marginal = mixture.marginal_at(schedule, t)?;
        let points = marginal.sample(n_samples, &mut rng);
        let mut total = 0.0;
        let mut kept = 0usize;
        let mut excluded = 0usize;
        for x in &points {
            let s_exact = exact.score(t, x);
            let norm = s_exact.norm();
            if norm < 1e-12 {
                excluded += 1;
                continue;
            }
            total += (approx.score(t, x) - s_exact).norm() / norm;
            kept += 1;
        }
        if kept == 0 {
            return Err(Error::Domain(format!(
                "every evaluation point at t = {t} had a degenerate exact score"
            )));
        }
        out.push(ScoreErrorPoint {
            t,
            mean_relative_error: total / kept as f64,
            n_excluded: excluded,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut model = MlpScoreModel::new(2, &[8], 42).unwrap();
        let t = 0.37;
        let x = dvector![0.4, -1.1];
        let x0 = dvector![0.9, 0.2];
        let alpha = 0.63;
        let (grads, _) = model.sample_gradient(t, &x, &x0, alpha);
        let h = 1e-5;
        let loss_at = |m: &MlpScoreModel| {
            let out = m.score(t, &x);
            (out * alpha + &x0).norm_squared()
        };
        for l in 0..model.weights.len() {
            for idx in 0..model.weights[l].len() {
                let orig = model.weights[l][idx];
                model.weights[l][idx] = orig + h;
                let plus = loss_at(&model);
                model.weights[l][idx] = orig - h;
                let minus = loss_at(&model);
                model.weights[l][idx] = orig;
                let fd = (plus - minus) / (2.0 * h);
                // sample_gradient differentiates the halved loss.
                let analytic = 2.0 * grads.weights[l][idx];
                assert!(
                    (analytic - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                    "weight[{l}][{idx}]: analytic {analytic} vs fd {fd}"
                );
            }
            for idx in 0..model.biases[l].len() {
                let orig = model.biases[l][idx];
                model.biases[l][idx] = orig + h;
                let plus = loss_at(&model);
                model.biases[l][idx] = orig - h;
                let minus = loss_at(&model);
                model.biases[l][idx] = orig;
                let fd = (plus - minus) / (2.0 * h);
                let analytic = 2.0 * grads.biases[l][idx];
                assert!(
                    (analytic - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                    "bias[{l}][{idx}]: analytic {analytic} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let mixture = GaussianMixture::standard_normal(2);
        let cfg = TrainConfig {
            iterations: 30,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let run = || {
            let mut model = MlpScoreModel::new(2, &[12, 12], 7).unwrap();
            let report =
                train_score_model(&mut model, &mixture, Schedule::Linear, &cfg).unwrap();
            (model, report)
        };
        let (m1, r1) = run();
        let (m2, r2) = run();
        assert_eq!(r1.losses, r2.losses);
        for (a, b) in m1.weights.iter().zip(&m2.weights) {
            assert_eq!(a, b);
        }
        for (a, b) in m1.biases.iter().zip(&m2.biases) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn untrained_models_are_flagged_and_rejected() {
        let mixture = GaussianMixture::standard_normal(1);
        let mut model = MlpScoreModel::new(1, &[4], 0).unwrap();
        let cfg = TrainConfig {
            iterations: 0,
            ..TrainConfig::default()
        };
        train_score_model(&mut model, &mixture, Schedule::Linear, &cfg).unwrap();
        assert!(!model.is_trained());
        assert!(LearnedScoreOracle::new(model, Schedule::Linear).is_err());
    }

    // Standard normal target in one dimension: the marginal score is
    // -x / (alpha^2 + beta^2), which a small network should fit well at
    // mid-trajectory.
    #[test]
    fn trained_model_fits_the_standard_normal_score() {
        let mixture = GaussianMixture::standard_normal(1);
        let mut model = MlpScoreModel::new(1, &[24, 24], 3).unwrap();
        let cfg = TrainConfig {
            iterations: 4000,
            batch_size: 128,
            learning_rate: 2e-3,
            seed: 1,
            ..TrainConfig::default()
        };
        let report = train_score_model(&mut model, &mixture, Schedule::Linear, &cfg).unwrap();
        let early: f64 = report.losses[..50].iter().sum::<f64>() / 50.0;
        let late: f64 = report.losses[report.losses.len() - 50..].iter().sum::<f64>() / 50.0;
        assert!(late < early, "loss did not decrease: {early} -> {late}");

        let t = 0.5;
        let var = 0.5;
        // Typical score magnitude E|s| under the marginal itself.
        let typical = (2.0 / (std::f64::consts::PI * var)).sqrt();
        for &x in &[-1.5, -0.7, 0.0, 0.4, 1.2] {
            let exact = -x / var;
            let got = model.score(t, &dvector![x])[0];
            let denom = exact.abs().max(typical);
            assert!(
                (got - exact).abs() / denom < 0.1,
                "score at {x}: got {got}, exact {exact}"
            );
        }
    }

    #[test]
    fn checkpoints_round_trip_exactly() {
        let mixture = GaussianMixture::standard_normal(2);
        let mut model = MlpScoreModel::new(2, &[6, 5], 9).unwrap();
        let cfg = TrainConfig {
            iterations: 10,
            batch_size: 8,
            ..TrainConfig::default()
        };
        train_score_model(&mut model, &mixture, Schedule::Ou, &cfg).unwrap();
        let text = model.to_json();
        let loaded = MlpScoreModel::from_json(&text).unwrap();
        assert!(loaded.is_trained());
        let x = dvector![0.3, -0.8];
        assert_eq!(model.score(0.42, &x), loaded.score(0.42, &x));
    }

    #[test]
    fn checkpoint_rejects_unknown_version() {
        let model = MlpScoreModel::new(1, &[3], 0).unwrap();
        let text = model.to_json().replace("\"format_version\": 1", "\"format_version\": 99");
        assert!(MlpScoreModel::from_json(&text).is_err());
    }

    #[test]
    fn exact_oracle_has_zero_error_curve() {
        let mixture = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![dvector![2.0], dvector![-2.0]],
            vec![nalgebra::dmatrix![0.5], nalgebra::dmatrix![0.5]],
        )
        .unwrap();
        let exact = crate::fields::AnalyticGmmOracle::new(mixture.clone(), Schedule::Trigonometric);
        let curve = relative_score_error_curve(
            &exact,
            &mixture,
            Schedule::Trigonometric,
            &[0.2, 0.5, 0.8],
            500,
            13,
        )
        .unwrap();
        for p in &curve {
            assert_eq!(p.mean_relative_error, 0.0);
        }
    }
}
