//! Batch simulation harness for the SE₂(3) LQR quadrotor controller.
//!
//! Wraps the control library in reproducible experiments: single scenario
//! runs, the initial-heading sweep, the parametric-uncertainty study, and
//! seeded Monte-Carlo batches, with CSV artifacts and a config-echo manifest
//! next to every result.

use std::path::PathBuf;
use thiserror::Error;

pub mod config;
pub mod experiments;
pub mod output;
pub mod scenario;

pub use config::{RunConfig, ScenarioConfig, VariantArg};
pub use scenario::{compute_rmse, run_scenario, TrialResult};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Params(#[from] se23_control::dynamics::ParamError),
    #[error(transparent)]
    Flatness(#[from] se23_control::flatness::FlatnessError),
    #[error(transparent)]
    Lqr(#[from] se23_control::lqr::LqrError),
    #[error("RMSE of an empty error series is undefined")]
    EmptySeries,
    #[error("trial {index} failed: {source}")]
    Trial {
        index: usize,
        source: Box<HarnessError>,
    },
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}
