//! Bayesian optimisation of the trade-off loss over `(n_trees, max_depth,
//! train_proportion)`.
//!
//! The surrogate is a Gaussian process with an ARD Matérn-5/2 kernel fitted
//! on the unit cube, and candidates are scored by closed-form expected
//! improvement. Integer coordinates are relaxed to the continuum and rounded
//! at evaluation time.

mod acquisition;
mod gp;
mod optimizer;
mod space;

use thiserror::Error;

pub use acquisition::{expected_improvement, improvement_closed_form};
pub use gp::{fit_surrogate, fit_surrogate_with, GpConfig, KernelParams, SurrogateState};
pub use optimizer::{
    optimize, suggest_next, OptimizeConfig, OptimizeOutcome, Phase, Scored, TraceEntry,
    CANDIDATE_POINTS, REFINEMENT_STEPS,
};
pub use space::{halton, Observation, ParameterSpace, DIM};

#[derive(Debug, Error)]
pub enum BayesOptError {
    #[error("the surrogate needs at least one observation")]
    NoObservations,
    #[error("observation value {0} is not finite")]
    NonFiniteValue(f64),
    #[error("observation point {0:?} lies outside the unit cube")]
    PointOutsideCube([f64; DIM]),
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),
    #[error("kernel matrix is not positive definite even with noise {0}")]
    NotPositiveDefinite(f64),
    #[error("n_init must be at least 1")]
    NoInitialDesign,
    #[error("every evaluation failed; last error: {0}")]
    AllEvaluationsFailed(String),
}
