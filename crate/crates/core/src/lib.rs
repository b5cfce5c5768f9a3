//! Pathways through the time-dependent landscapes of generative diffusion
//! and flow models.
//!
//! The library evolves discretized curves ("strings") of images through the
//! family of densities rho_t induced by a stochastic interpolation between
//! a standard normal at t = 0 and a target distribution at t = 1. Depending
//! on the chosen regime the converged string is a transported geodesic, a
//! minimum energy path of the final energy -log rho_1, or a finite
//! temperature principal curve. Exact Gaussian-mixture targets provide
//! closed-form velocity and score fields against which everything here is
//! verified end to end.

pub mod error;
pub mod fields;
pub mod integrate;
pub mod io;
pub mod liegroup;
pub mod mixture;
pub mod oracles;
pub mod presets;
pub mod reparam;
pub mod schedule;
pub mod scorenet;
pub mod stats;
pub mod string;
pub mod walkers;

pub use error::{Error, Result};
pub use fields::{AnalyticGmmOracle, FieldOracle, FnOracle, OracleKind};
pub use integrate::{
    integrate_ode, integrate_sde, log_likelihood, DivergenceMode, GammaSchedule, OdeMethod,
    Quench, StepperConfig, Trajectory,
};
pub use liegroup::{
    reparametrize_se3, reparametrize_so3, RigidMotion, Rotation, Se3Reparam, So3Reparam,
};
pub use mixture::GaussianMixture;
pub use oracles::{
    frozen_mep_string, hastie_principal_curve, locate_saddle_2d, FrozenMepConfig, GridSpec,
    HastieConfig, HastieCurve, SaddleOutcome,
};
pub use presets::{benchmark_pair, preset, PRESET_NAMES};
pub use reparam::{arc_length, chord_lengths, chord_spread, EuclideanReparam, Resampler, SplineKind};
pub use schedule::{make_schedule, Schedule};
pub use scorenet::{
    relative_score_error_curve, train_score_model, LearnedScoreOracle, MlpScoreModel,
    ScoreErrorPoint, TrainConfig, TrainReport,
};
pub use string::{
    encode_endpoints, init_string_geodesic, mep_residual, run_string, string_step, Regime,
    RegimeConfig, StringDiagnostics, StringRun, StringState,
};
pub use walkers::{
    run_finite_temperature_string, sample_tempered, self_consistency_residual, CellOccupancy,
    FiniteTempRun, WalkerEnsemble,
};
