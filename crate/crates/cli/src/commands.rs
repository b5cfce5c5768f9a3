//! Implementations behind the command-line verbs.

use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use scorepath_core::io::{
    read_string_snapshot, write_diagnostics, write_error_curve, write_json, write_likelihoods,
    write_string_snapshot, write_walkers,
};
use scorepath_core::{
    encode_endpoints, frozen_mep_string, hastie_principal_curve, init_string_geodesic,
    locate_saddle_2d, log_likelihood, make_schedule, preset, relative_score_error_curve,
    run_finite_temperature_string, run_string, sample_tempered, train_score_model,
    AnalyticGmmOracle, DivergenceMode, Error, FrozenMepConfig, GammaSchedule, GaussianMixture,
    GridSpec, HastieConfig, LearnedScoreOracle, MlpScoreModel, OdeMethod, Quench, Regime,
    RegimeConfig, Result, SaddleOutcome, SplineKind, StepperConfig, StringState, TrainConfig,
};

use crate::config::{
    LikelihoodConfig, OracleHastieConfig, OracleMepConfig, SaddleConfig, ScoreBenchmarkConfig,
    StringRunConfig,
};

fn parse_method(name: &str) -> Result<OdeMethod> {
    match name {
        "euler" => Ok(OdeMethod::Euler),
        "heun" => Ok(OdeMethod::Heun),
        other => Err(Error::Config(format!(
            "unknown method '{other}' (expected euler or heun)"
        ))),
    }
}

fn parse_spline(name: &str) -> Result<SplineKind> {
    match name {
        "linear" => Ok(SplineKind::Linear),
        "cubic" => Ok(SplineKind::Cubic),
        other => Err(Error::Config(format!(
            "unknown spline '{other}' (expected linear or cubic)"
        ))),
    }
}

fn parse_quench(name: &str) -> Result<Quench> {
    match name {
        "hard" => Ok(Quench::HardWindow),
        "ramp" => Ok(Quench::LinearRamp),
        other => Err(Error::Config(format!(
            "unknown quench '{other}' (expected hard or ramp)"
        ))),
    }
}

fn gamma_schedule(gamma: f64, window: (f64, f64), quench: &str) -> Result<GammaSchedule> {
    if gamma == 0.0 {
        return Ok(GammaSchedule::zero());
    }
    let schedule = GammaSchedule {
        base: gamma,
        window,
        quench: parse_quench(quench)?,
    };
    schedule.validate()?;
    Ok(schedule)
}

/// Data-space endpoints: explicit coordinates when given, otherwise the
/// preset's first two component means.
fn data_endpoints(
    mixture: &GaussianMixture,
    a: &Option<Vec<f64>>,
    b: &Option<Vec<f64>>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let from_vec = |v: &Vec<f64>| -> Result<DVector<f64>> {
        if v.len() != mixture.dim() {
            return Err(Error::Config(format!(
                "endpoint has dimension {}, preset has {}",
                v.len(),
                mixture.dim()
            )));
        }
        Ok(DVector::from_vec(v.clone()))
    };
    let default_mean = |k: usize| -> Result<DVector<f64>> {
        if mixture.n_components() < 2 {
            return Err(Error::Config(
                "preset has a single component; pass explicit endpoints".into(),
            ));
        }
        Ok(mixture.means()[k].clone())
    };
    let pa = match a {
        Some(v) => from_vec(v)?,
        None => default_mean(0)?,
    };
    let pb = match b {
        Some(v) => from_vec(v)?,
        None => default_mean(1)?,
    };
    Ok((pa, pb))
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

pub fn string_run(cfg: &StringRunConfig, out: &Path) -> Result<()> {
    let mixture = preset(&cfg.preset, cfg.dim)?;
    let schedule = make_schedule(&cfg.schedule)?;
    let oracle = AnalyticGmmOracle::new(mixture.clone(), schedule);
    let spline = parse_spline(&cfg.spline)?;
    let regime = RegimeConfig {
        regime: Regime::from_name(&cfg.regime)?,
        gamma: gamma_schedule(cfg.gamma, cfg.gamma_window, &cfg.quench)?,
        temperature: cfg.temperature,
        eta: cfg.eta,
        spline,
    };
    let init = match &cfg.input {
        Some(path) => read_string_snapshot(Path::new(path))?,
        None => {
            let (a, b) = data_endpoints(&mixture, &cfg.endpoint_a, &cfg.endpoint_b)?;
            let (z0, z1) = encode_endpoints(&oracle, &a, &b, cfg.encode_steps)?;
            StringState::new(
                init_string_geodesic(&z0, &z1, cfg.images, spline)?,
                cfg.t_start,
            )?
        }
    };
    let stepper = StepperConfig {
        method: parse_method(&cfg.method)?,
        n_steps: cfg.n_steps,
        t_start: cfg.t_start,
        t_end: cfg.t_end,
        seed: cfg.seed,
        timestep_safety: cfg.timestep_safety,
    };

    let string_path = out.join("string.csv");
    let diag_path = out.join("diagnostics.csv");
    if regime.regime == Regime::PrincipalCurve {
        let run = run_finite_temperature_string(&oracle, init, &regime, &stepper)?;
        write_string_snapshot(&string_path, &run.state)?;
        write_diagnostics(&diag_path, &run.diagnostics)?;
        let walker_path = out.join("walkers.csv");
        write_walkers(&walker_path, &run.ensemble)?;
        announce(&walker_path);
    } else {
        let run = run_string(&oracle, init, &regime, &stepper)?;
        write_string_snapshot(&string_path, &run.state)?;
        write_diagnostics(&diag_path, &run.diagnostics)?;
    }
    announce(&string_path);
    announce(&diag_path);
    crate::config::write_manifest(out, "string-run", cfg)
}

/// Reads evaluation points from any CSV carrying x0,x1,... columns (extra
/// columns such as image indices or times are ignored).
fn read_points_csv(path: &Path) -> Result<Vec<DVector<f64>>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut coord_cols = Vec::new();
    for dim in 0.. {
        match headers.iter().position(|h| h == format!("x{dim}")) {
            Some(col) => coord_cols.push(col),
            None => break,
        }
    }
    if coord_cols.is_empty() {
        return Err(Error::MalformedRow {
            line: 1,
            what: "no x0,x1,... columns in header".into(),
        });
    }
    let mut points = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let line = k + 2;
        let mut coords = Vec::with_capacity(coord_cols.len());
        for &col in &coord_cols {
            let field = record.get(col).ok_or(Error::MalformedRow {
                line,
                what: "row is shorter than the header".into(),
            })?;
            coords.push(field.parse::<f64>().map_err(|_| Error::MalformedRow {
                line,
                what: "coordinate is not a number".into(),
            })?);
        }
        points.push(DVector::from_vec(coords));
    }
    if points.is_empty() {
        return Err(Error::MalformedRow {
            line: 2,
            what: "no evaluation points in file".into(),
        });
    }
    Ok(points)
}

pub fn likelihood(cfg: &LikelihoodConfig, out: &Path) -> Result<()> {
    let mixture = preset(&cfg.preset, cfg.dim)?;
    let schedule = make_schedule(&cfg.schedule)?;
    let oracle = AnalyticGmmOracle::new(mixture.clone(), schedule);
    let points = match &cfg.input {
        Some(path) => {
            let pts = read_points_csv(Path::new(path))?;
            if pts[0].len() != cfg.dim {
                return Err(Error::Config(format!(
                    "input points have dimension {}, config says {}",
                    pts[0].len(),
                    cfg.dim
                )));
            }
            pts
        }
        None => {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            mixture.sample(cfg.n_points, &mut rng)
        }
    };
    let mode = match cfg.divergence.as_str() {
        "exact" => DivergenceMode::Exact,
        "hutchinson" => DivergenceMode::Hutchinson { probes: cfg.probes },
        other => {
            return Err(Error::Config(format!(
                "unknown divergence '{other}' (expected exact or hutchinson)"
            )))
        }
    };
    let stepper = StepperConfig {
        method: parse_method(&cfg.method)?,
        n_steps: cfg.n_steps,
        seed: cfg.seed,
        ..StepperConfig::default()
    };
    let mut values = Vec::with_capacity(points.len());
    for x in &points {
        values.push(log_likelihood(&oracle, x, &stepper, mode)?.log_density);
    }
    let path = out.join("likelihood.csv");
    write_likelihoods(&path, &values)?;
    announce(&path);
    crate::config::write_manifest(out, "likelihood", cfg)
}

pub fn score_benchmark(cfg: &ScoreBenchmarkConfig, out: &Path) -> Result<()> {
    let mixture = preset(&cfg.preset, cfg.dim)?;
    let schedule = make_schedule(&cfg.schedule)?;
    let mut model = MlpScoreModel::new(cfg.dim, &cfg.hidden, cfg.seed)?;
    let train_cfg = TrainConfig {
        iterations: cfg.iterations,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        seed: cfg.seed,
        time_floor: cfg.time_floor,
        final_lr_fraction: cfg.final_lr_fraction,
        ..TrainConfig::default()
    };
    train_score_model(&mut model, &mixture, schedule, &train_cfg)?;
    let model_path = out.join("model.json");
    scorepath_core::io::write_atomic(&model_path, model.to_json().as_bytes())?;
    let learned = LearnedScoreOracle::new(model, schedule)?;
    let curve = relative_score_error_curve(
        &learned,
        &mixture,
        schedule,
        &cfg.eval_times,
        cfg.n_eval_samples,
        cfg.seed.wrapping_add(1),
    )?;
    let curve_path = out.join("error_curve.csv");
    write_error_curve(&curve_path, &curve)?;
    announce(&model_path);
    announce(&curve_path);
    crate::config::write_manifest(out, "score-benchmark", cfg)
}

/// JSON form of the saddle search outcome.
#[derive(Debug, Serialize, Deserialize)]
pub struct SaddleReport {
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_density: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merge_level: Option<f64>,
}

pub fn oracle_saddle(cfg: &SaddleConfig, out: &Path) -> Result<()> {
    if cfg.dim != 2 {
        return Err(Error::Config(
            "the saddle search scans a plane; only dim = 2 is supported".into(),
        ));
    }
    let mixture = preset(&cfg.preset, 2)?;
    if mixture.n_components() < 2 {
        return Err(Error::Config(
            "need two components to search for a barrier between".into(),
        ));
    }
    let grid = GridSpec::new(
        [cfg.grid_min.0, cfg.grid_min.1],
        [cfg.grid_max.0, cfg.grid_max.1],
        [cfg.grid_n.0, cfg.grid_n.1],
    )?;
    let logp = |x: f64, y: f64| mixture.log_density(&DVector::from_vec(vec![x, y]));
    let means = mixture.means();
    let a = [means[0][0], means[0][1]];
    let b = [means[1][0], means[1][1]];
    let outcome = locate_saddle_2d(&logp, &grid, a, b, cfg.min_barrier_depth)?;
    let report = match outcome {
        SaddleOutcome::Saddle { point, log_density } => SaddleReport {
            outcome: "saddle".to_string(),
            point: Some(point.iter().cloned().collect()),
            log_density: Some(log_density),
            merge_level: None,
        },
        SaddleOutcome::NoBarrier { merge_level } => SaddleReport {
            outcome: "no_barrier".to_string(),
            point: None,
            log_density: None,
            merge_level: Some(merge_level),
        },
    };
    let path = out.join("saddle.json");
    write_json(&path, &report)?;
    announce(&path);
    crate::config::write_manifest(out, "oracle-saddle", cfg)
}

/// Straight path between the component means with an optional sine bulge
/// on the second coordinate.
fn straight_init(
    mixture: &GaussianMixture,
    n_images: usize,
    bulge: f64,
) -> Result<Vec<DVector<f64>>> {
    if mixture.n_components() < 2 {
        return Err(Error::Config(
            "need two components to span a path between".into(),
        ));
    }
    let a = &mixture.means()[0];
    let b = &mixture.means()[1];
    Ok((0..n_images)
        .map(|i| {
            let f = i as f64 / (n_images - 1) as f64;
            let mut p = a * (1.0 - f) + b * f;
            if p.len() > 1 {
                p[1] += bulge * (std::f64::consts::PI * f).sin();
            }
            p
        })
        .collect())
}

pub fn oracle_mep(cfg: &OracleMepConfig, out: &Path) -> Result<()> {
    let mixture = preset(&cfg.preset, cfg.dim)?;
    let oracle = AnalyticGmmOracle::new(mixture.clone(), make_schedule("linear")?);
    let score = |x: &DVector<f64>| scorepath_core::FieldOracle::score(&oracle, 1.0, x);
    let init = straight_init(&mixture, cfg.images, cfg.bulge)?;
    let relax_cfg = FrozenMepConfig {
        step_size: cfg.step_size,
        max_steps: cfg.max_steps,
        tol: cfg.tol,
    };
    let path = frozen_mep_string(&score, &init, &relax_cfg)?;
    let csv_path = out.join("oracle_mep.csv");
    write_string_snapshot(&csv_path, &StringState::new(path, 1.0)?)?;
    announce(&csv_path);
    crate::config::write_manifest(out, "oracle-mep", cfg)
}

/// JSON summary companion to the principal-curve CSV.
#[derive(Debug, Serialize, Deserialize)]
pub struct HastieSummary {
    pub n_samples: usize,
    pub empty_cells: Vec<usize>,
}

pub fn oracle_hastie(cfg: &OracleHastieConfig, out: &Path) -> Result<()> {
    let mixture = preset(&cfg.preset, cfg.dim)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let samples = sample_tempered(&mixture, cfg.temperature, cfg.n_samples, &mut rng)?;
    let init = straight_init(&mixture, cfg.images, 0.0)?;
    let hastie_cfg = HastieConfig {
        n_iterations: cfg.iterations,
        pin_endpoints: cfg.pin_endpoints,
        smoothing: cfg.smoothing,
    };
    let curve = hastie_principal_curve(&samples, &init, &hastie_cfg)?;
    let csv_path = out.join("hastie.csv");
    write_string_snapshot(&csv_path, &StringState::new(curve.points, 1.0)?)?;
    let summary_path = out.join("hastie_summary.json");
    write_json(
        &summary_path,
        &HastieSummary {
            n_samples: cfg.n_samples,
            empty_cells: curve.empty_cells,
        },
    )?;
    announce(&csv_path);
    announce(&summary_path);
    crate::config::write_manifest(out, "oracle-hastie", cfg)
}
