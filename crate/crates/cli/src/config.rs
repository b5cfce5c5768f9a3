//! Run configurations, their JSON form, and the run manifest.
//!
//! Every command resolves its settings in three layers: built-in defaults,
//! then an optional `--config` JSON file, then individual command-line
//! flags. The fully resolved configuration is written back out as
//! `manifest.json`; feeding that manifest to `--config` reproduces the run
//! bit for bit. `--config` accepts either a bare configuration object or a
//! whole manifest.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use scorepath_core::io::{read_json, write_json};
use scorepath_core::{Error, Result};

/// Record of a resolved run, written next to the artifacts.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest<T> {
    pub tool_version: String,
    pub command: String,
    pub config: T,
}

pub fn write_manifest<T: Serialize>(out_dir: &Path, command: &str, config: &T) -> Result<()> {
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config,
    };
    write_json(&out_dir.join("manifest.json"), &manifest)
}

/// Loads a configuration, unwrapping a manifest when one is supplied.
pub fn load_config<T: DeserializeOwned>(path: &Path, command: &str) -> Result<T> {
    let value: serde_json::Value = read_json(path)?;
    if let Some(obj) = value.as_object() {
        if obj.contains_key("config") && obj.contains_key("command") {
            let declared = obj["command"].as_str().unwrap_or("");
            if declared != command {
                return Err(Error::Config(format!(
                    "manifest was produced by `{declared}`, not `{command}`"
                )));
            }
            return Ok(serde_json::from_value(obj["config"].clone())?);
        }
    }
    Ok(serde_json::from_value(value)?)
}

/// String evolution across the interpolation time span.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StringRunConfig {
    pub preset: String,
    pub dim: usize,
    pub schedule: String,
    /// transport, mep, or principal_curve.
    pub regime: String,
    /// Base noise amplitude; 0 disables the score term entirely.
    pub gamma: f64,
    /// Active window of the noise schedule.
    pub gamma_window: (f64, f64),
    /// Window shape outside the active region: "hard" or "ramp".
    pub quench: String,
    pub temperature: f64,
    /// Walker-average relaxation rate (principal_curve only).
    pub eta: f64,
    /// Number of images on the string, endpoints included.
    pub images: usize,
    pub n_steps: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Backward-flow steps used to encode the data-space endpoints.
    pub encode_steps: usize,
    /// Endpoint integrator: "euler" or "heun".
    pub method: String,
    /// Reparametrization interpolant: "linear" or "cubic".
    pub spline: String,
    pub timestep_safety: f64,
    pub seed: u64,
    /// Data-space endpoints; the preset's first two component means when
    /// absent.
    pub endpoint_a: Option<Vec<f64>>,
    pub endpoint_b: Option<Vec<f64>>,
    /// Resume from a string snapshot instead of the geodesic initializer;
    /// the snapshot time must equal t_start.
    pub input: Option<String>,
}

impl Default for StringRunConfig {
    fn default() -> Self {
        Self {
            preset: "appendix_c".to_string(),
            dim: 2,
            schedule: "linear".to_string(),
            regime: "transport".to_string(),
            gamma: 0.0,
            gamma_window: (0.1, 0.95),
            quench: "hard".to_string(),
            temperature: 0.0,
            eta: 0.2,
            images: 31,
            n_steps: 400,
            t_start: 0.0,
            t_end: 1.0,
            encode_steps: 400,
            method: "euler".to_string(),
            spline: "linear".to_string(),
            timestep_safety: 0.1,
            seed: 0,
            endpoint_a: None,
            endpoint_b: None,
            input: None,
        }
    }
}

/// Exact log likelihoods through the backward probability flow.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LikelihoodConfig {
    pub preset: String,
    pub dim: usize,
    pub schedule: String,
    /// Points drawn from the target when no input file is given.
    pub n_points: usize,
    pub n_steps: usize,
    /// "euler" or "heun".
    pub method: String,
    /// "exact" or "hutchinson".
    pub divergence: String,
    pub probes: usize,
    pub seed: u64,
    /// CSV of evaluation points (any file with x0,x1,... columns).
    pub input: Option<String>,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        Self {
            preset: "appendix_c".to_string(),
            dim: 2,
            schedule: "linear".to_string(),
            n_points: 100,
            n_steps: 1000,
            method: "heun".to_string(),
            divergence: "exact".to_string(),
            probes: 8,
            seed: 0,
            input: None,
        }
    }
}

/// Train the score network on a preset and measure its error curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreBenchmarkConfig {
    pub preset: String,
    pub dim: usize,
    pub schedule: String,
    pub hidden: Vec<usize>,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub time_floor: f64,
    pub final_lr_fraction: f64,
    pub eval_times: Vec<f64>,
    pub n_eval_samples: usize,
    pub seed: u64,
}

impl Default for ScoreBenchmarkConfig {
    fn default() -> Self {
        Self {
            preset: "appendix_c".to_string(),
            dim: 2,
            schedule: "linear".to_string(),
            hidden: vec![64, 128, 64],
            iterations: 3000,
            batch_size: 128,
            learning_rate: 1e-3,
            time_floor: 1e-3,
            final_lr_fraction: 0.05,
            eval_times: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99],
            n_eval_samples: 2000,
            seed: 0,
        }
    }
}

/// Brute-force saddle search on the target density plane.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaddleConfig {
    pub preset: String,
    pub dim: usize,
    pub grid_min: (f64, f64),
    pub grid_max: (f64, f64),
    pub grid_n: (usize, usize),
    pub min_barrier_depth: f64,
}

impl Default for SaddleConfig {
    fn default() -> Self {
        Self {
            preset: "appendix_c".to_string(),
            dim: 2,
            grid_min: (-8.0, -6.0),
            grid_max: (8.0, 6.0),
            grid_n: (321, 241),
            min_barrier_depth: 1e-6,
        }
    }
}

/// Frozen-landscape relaxation between the preset's component means.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleMepConfig {
    pub preset: String,
    pub dim: usize,
    pub images: usize,
    pub step_size: f64,
    pub max_steps: usize,
    pub tol: f64,
    /// Sine bulge amplitude on the second coordinate of the initial path,
    /// useful to break out of symmetric unstable configurations.
    pub bulge: f64,
}

impl Default for OracleMepConfig {
    fn default() -> Self {
        Self {
            preset: "appendix_c".to_string(),
            dim: 2,
            images: 31,
            step_size: 0.02,
            max_steps: 200_000,
            tol: 1e-10,
            bulge: 0.0,
        }
    }
}

/// Batch principal curve on samples from the (optionally tempered) target.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleHastieConfig {
    pub preset: String,
    pub dim: usize,
    pub temperature: f64,
    pub n_samples: usize,
    pub images: usize,
    pub iterations: usize,
    pub smoothing: f64,
    pub pin_endpoints: bool,
    pub seed: u64,
}

impl Default for OracleHastieConfig {
    fn default() -> Self {
        Self {
            preset: "appendix_c".to_string(),
            dim: 2,
            temperature: 1.0,
            n_samples: 100_000,
            images: 31,
            iterations: 100,
            smoothing: 0.25,
            pin_endpoints: true,
            seed: 0,
        }
    }
}
