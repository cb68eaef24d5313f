//! Batch experiment harness for the gHMC laboratory.
//!
//! An experiment is described by an [`ExperimentSpec`] (one TOML or JSON
//! file, overridable from the command line) and run by [`run_experiment`],
//! which evaluates every grid cell in parallel and writes one directory:
//!
//! * `spec.resolved.json`: the spec after defaults and overrides;
//! * `records.jsonl`: per-cell detail rows (chain iterates, exact-law
//!   trajectories, per-point checks); the first line is a header;
//! * `summary.csv`: one row per cell, preceded by a `#` header line;
//! * `report.json`: per-cell details, aggregate fits and assertions;
//! * `data_dictionary.json`: the meaning of every column and field.
//!
//! Every artifact carries the schema version, the code version, the RNG
//! metadata and the resolved spec.

pub mod artifacts;
pub mod experiments;
pub mod spec;

use thiserror::Error;

pub use experiments::{run_experiment, RunOutcome};
pub use spec::{ExperimentKind, ExperimentSpec, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Potential(#[from] ghmc_core::potentials::PotentialError),
    #[error(transparent)]
    Sampler(#[from] ghmc_core::sampler::SamplerError),
    #[error(transparent)]
    Integrator(#[from] ghmc_core::integrator::IntegratorError),
    #[error(transparent)]
    Gaussian(#[from] ghmc_core::gaussian_exact::GaussianError),
    #[error(transparent)]
    Bounds(#[from] ghmc_core::bounds::BoundsError),
    #[error(transparent)]
    Diagnostics(#[from] ghmc_core::diagnostics::DiagnosticsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
