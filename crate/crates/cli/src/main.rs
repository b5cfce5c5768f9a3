//! Command-line driver.
//!
//! Settings resolve as defaults < `--config` file < flags, and every run
//! writes a `manifest.json` holding the fully resolved configuration; that
//! manifest can be passed back through `--config` to reproduce the run bit
//! for bit. Exit codes: 0 success, 2 configuration problems, 3 runtime
//! failures.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use scorepath_core::{Error, Result};

use config::{
    load_config, LikelihoodConfig, OracleHastieConfig, OracleMepConfig, SaddleConfig,
    ScoreBenchmarkConfig, StringRunConfig,
};

#[derive(Parser)]
#[command(
    name = "scorepath",
    version,
    about = "Transition paths, strings, and principal curves through \
             time-dependent generative-model landscapes"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve a string of images across the interpolation time span.
    StringRun(StringRunArgs),
    /// Log likelihoods through the backward probability flow.
    Likelihood(LikelihoodArgs),
    /// Train the score network on a preset and measure its error curve.
    ScoreBenchmark(ScoreBenchmarkArgs),
    /// Brute-force reference constructions on the target density.
    #[command(subcommand)]
    Oracle(OracleCmd),
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Grid search for the density saddle between the two basins.
    Saddle(SaddleArgs),
    /// Frozen-landscape minimum energy path between the component means.
    Mep(MepArgs),
    /// Batch principal curve on samples from the target.
    Hastie(HastieArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file (a bare config or a previous manifest).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Benchmark preset name.
    #[arg(long)]
    preset: Option<String>,
    /// Ambient dimension.
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args)]
struct StringRunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// transport, mep, or principal_curve.
    #[arg(long)]
    regime: Option<String>,
    /// Base noise amplitude.
    #[arg(long)]
    gamma: Option<f64>,
    /// Sampling temperature (principal_curve).
    #[arg(long)]
    temperature: Option<f64>,
    /// Number of images on the string, endpoints included.
    #[arg(long)]
    images: Option<usize>,
    /// Walker-average relaxation rate (principal_curve).
    #[arg(long)]
    eta: Option<f64>,
    /// Number of time steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Start time (must match the input snapshot when resuming).
    #[arg(long)]
    t_start: Option<f64>,
    /// Final time.
    #[arg(long)]
    t_end: Option<f64>,
    /// Interpolation schedule: linear, trigonometric, or ou.
    #[arg(long)]
    schedule: Option<String>,
    /// Reparametrization interpolant: linear or cubic.
    #[arg(long)]
    spline: Option<String>,
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Resume from a string snapshot CSV.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct LikelihoodArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of points sampled from the target when no input is given.
    #[arg(long)]
    n_points: Option<usize>,
    /// Number of backward integration steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Divergence mode: exact or hutchinson.
    #[arg(long)]
    divergence: Option<String>,
    /// Probe count for the hutchinson estimator.
    #[arg(long)]
    probes: Option<usize>,
    /// Interpolation schedule.
    #[arg(long)]
    schedule: Option<String>,
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV of evaluation points (x0,x1,... columns).
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreBenchmarkArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Training iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Interpolation schedule.
    #[arg(long)]
    schedule: Option<String>,
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SaddleArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct MepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of images on the path.
    #[arg(long)]
    images: Option<usize>,
    /// Relaxation step size.
    #[arg(long)]
    step_size: Option<f64>,
    /// Iteration budget.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Sine bulge amplitude of the initial path.
    #[arg(long)]
    bulge: Option<f64>,
}

#[derive(Args)]
struct HastieArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of target samples.
    #[arg(long)]
    n_samples: Option<usize>,
    /// Number of curve points.
    #[arg(long)]
    images: Option<usize>,
    /// Batch iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Sampling temperature.
    #[arg(long)]
    temperature: Option<f64>,
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn apply<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn resolve<T: serde::de::DeserializeOwned + Default>(
    common: &CommonArgs,
    command: &str,
) -> Result<T> {
    match &common.config {
        Some(path) => load_config(path, command),
        None => Ok(T::default()),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::StringRun(args) => {
            let mut cfg: StringRunConfig = resolve(&args.common, "string-run")?;
            apply(&mut cfg.preset, args.common.preset);
            apply(&mut cfg.dim, args.common.dim);
            apply(&mut cfg.regime, args.regime);
            apply(&mut cfg.gamma, args.gamma);
            apply(&mut cfg.temperature, args.temperature);
            apply(&mut cfg.images, args.images);
            apply(&mut cfg.eta, args.eta);
            apply(&mut cfg.n_steps, args.steps);
            apply(&mut cfg.t_start, args.t_start);
            apply(&mut cfg.t_end, args.t_end);
            apply(&mut cfg.schedule, args.schedule);
            apply(&mut cfg.spline, args.spline);
            apply(&mut cfg.seed, args.seed);
            apply(
                &mut cfg.input,
                args.input.map(|p| Some(p.display().to_string())),
            );
            commands::string_run(&cfg, &args.common.out)
        }
        Cmd::Likelihood(args) => {
            let mut cfg: LikelihoodConfig = resolve(&args.common, "likelihood")?;
            apply(&mut cfg.preset, args.common.preset);
            apply(&mut cfg.dim, args.common.dim);
            apply(&mut cfg.n_points, args.n_points);
            apply(&mut cfg.n_steps, args.steps);
            apply(&mut cfg.divergence, args.divergence);
            apply(&mut cfg.probes, args.probes);
            apply(&mut cfg.schedule, args.schedule);
            apply(&mut cfg.seed, args.seed);
            apply(
                &mut cfg.input,
                args.input.map(|p| Some(p.display().to_string())),
            );
            commands::likelihood(&cfg, &args.common.out)
        }
        Cmd::ScoreBenchmark(args) => {
            let mut cfg: ScoreBenchmarkConfig = resolve(&args.common, "score-benchmark")?;
            apply(&mut cfg.preset, args.common.preset);
            apply(&mut cfg.dim, args.common.dim);
            apply(&mut cfg.iterations, args.iterations);
            apply(&mut cfg.schedule, args.schedule);
            apply(&mut cfg.seed, args.seed);
            commands::score_benchmark(&cfg, &args.common.out)
        }
        Cmd::Oracle(OracleCmd::Saddle(args)) => {
            let mut cfg: SaddleConfig = resolve(&args.common, "oracle-saddle")?;
            apply(&mut cfg.preset, args.common.preset);
            apply(&mut cfg.dim, args.common.dim);
            commands::oracle_saddle(&cfg, &args.common.out)
        }
        Cmd::Oracle(OracleCmd::Mep(args)) => {
            let mut cfg: OracleMepConfig = resolve(&args.common, "oracle-mep")?;
            apply(&mut cfg.preset, args.common.preset);
            apply(&mut cfg.dim, args.common.dim);
            apply(&mut cfg.images, args.images);
            apply(&mut cfg.step_size, args.step_size);
            apply(&mut cfg.max_steps, args.max_steps);
            apply(&mut cfg.bulge, args.bulge);
            commands::oracle_mep(&cfg, &args.common.out)
        }
        Cmd::Oracle(OracleCmd::Hastie(args)) => {
            let mut cfg: OracleHastieConfig = resolve(&args.common, "oracle-hastie")?;
            apply(&mut cfg.preset, args.common.preset);
            apply(&mut cfg.dim, args.common.dim);
            apply(&mut cfg.n_samples, args.n_samples);
            apply(&mut cfg.images, args.images);
            apply(&mut cfg.iterations, args.iterations);
            apply(&mut cfg.temperature, args.temperature);
            apply(&mut cfg.seed, args.seed);
            commands::oracle_hastie(&cfg, &args.common.out)
        }
    }
}

fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) | Error::Json(_) | Error::MalformedRow { .. } => 2,
        _ => 3,
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
