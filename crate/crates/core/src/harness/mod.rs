//! Experiment harness behind the `forest-tune` CLI: synthetic data, stability
//! histograms, `(n_trees, max_depth)` sweeps and Bayesian tuning runs against
//! the no-optimisation baseline.

mod config;
mod output;
mod stability;
mod sweep;
mod synthetic;
mod tune;

use thiserror::Error;

use crate::bayesopt::BayesOptError;
use crate::dataset::DatasetError;
use crate::objective::ObjectiveError;

pub use config::{
    CsvSource, DatasetSource, Overrides, RunConfig, StabilitySettings, SweepSettings,
    SyntheticSpec,
};
pub use stability::{cmd_stability, run_stability, DeltaHistogram, StabilityRow, HISTOGRAM_BINS};
pub use sweep::{cmd_sweep, run_sweep, write_sweep, Cell, SweepGrid};
pub use synthetic::{cmd_generate, generate_synthetic};
pub use tune::{cmd_tune, run_tune, write_tune, TuneReport, TuneRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] DatasetError),
    #[error("evaluation error: {0}")]
    Evaluation(#[from] ObjectiveError),
    #[error("optimizer error: {0}")]
    Optimizer(#[from] BayesOptError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit code: 2 config, 3 data, 4 evaluation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Evaluation(_) | Self::Optimizer(_) | Self::Output { .. } => 4,
        }
    }
}
