//! End-to-end evaluation of one parameter setting and the linear trade-off
//! loss `beta * RMSPD + gamma * runtime - alpha * AUC`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, DatasetError, SplitDataset};
use crate::forest::{self, ForestError, ForestParams};
use crate::metrics::{self, MetricsError, PredictionMatrix};
use crate::scalar::Scalar;
use crate::seeding::{self, tags};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("loss inputs must be finite (auc {auc}, rmspd {rmspd}, runtime {runtime})")]
    NonFinite { auc: f64, rmspd: f64, runtime: f64 },
    #[error("weights must be finite and non-negative, got ({alpha}, {beta}, {gamma})")]
    InvalidWeights { alpha: f64, beta: f64, gamma: f64 },
    #[error("evaluation needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("validation labels contain a single class; AUC is undefined")]
    SingleClassValidation,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Trade-off weights for AUC (`alpha`), RMSPD (`beta`) and runtime (`gamma`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, ObjectiveError> {
        let weights = Self { alpha, beta, gamma };
        weights.validate()?;
        Ok(weights)
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let ok = [self.alpha, self.beta, self.gamma]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(ObjectiveError::InvalidWeights {
                alpha: self.alpha,
                beta: self.beta,
                gamma: self.gamma,
            })
        }
    }
}

/// Where the runtime term comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CostMode {
    /// Mean training wall time per run, in seconds.
    #[default]
    #[serde(rename = "wall")]
    WallClock,
    /// [`forest::training_cost`] model units; reproducible across machines.
    #[serde(rename = "model")]
    Deterministic,
}

/// Metrics and loss for one parameter setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    /// Mean of the per-run validation AUCs.
    pub auc: f64,
    pub rmspd: f64,
    /// Mean per-run training time: seconds, or model units in deterministic mode.
    pub runtime_seconds: f64,
    pub loss: f64,
    pub n_trees: usize,
    /// `null` for unlimited depth.
    pub max_depth: Option<usize>,
    pub train_proportion: f64,
    pub runs: usize,
}

impl EvaluationResult {
    pub fn params(&self) -> ForestParams {
        ForestParams::new(self.n_trees, self.max_depth, self.train_proportion)
    }

    /// Re-scores the same metrics under other weights.
    pub fn reweighted(&self, weights: &LossWeights) -> Result<Self, ObjectiveError> {
        Ok(Self {
            loss: loss(weights, self.auc, self.rmspd, self.runtime_seconds)?,
            ..self.clone()
        })
    }
}

/// `beta * rmspd + gamma * runtime - alpha * auc`.
pub fn loss(weights: &LossWeights, auc: f64, rmspd: f64, runtime: f64) -> Result<f64, ObjectiveError> {
    if !(auc.is_finite() && rmspd.is_finite() && runtime.is_finite()) {
        return Err(ObjectiveError::NonFinite { auc, rmspd, runtime });
    }
    weights.validate()?;
    Ok(weights.beta * rmspd + weights.gamma * runtime - weights.alpha * auc)
}

/// How per-run random streams are seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RunSeeding {
    /// Run `r` uses streams derived from `(seed, r)`.
    #[default]
    Independent,
    /// Every run reuses run 0's streams, so all runs are identical.
    Shared,
}

/// Validation predictions and per-run measurements from `R` retrainings.
#[derive(Debug, Clone)]
pub struct RunSet<T> {
    pub predictions: PredictionMatrix<T>,
    pub aucs: Vec<f64>,
    pub runtimes: Vec<f64>,
}

struct RunOutcome<T> {
    predictions: Vec<T>,
    auc: f64,
    runtime: f64,
}

/// Seed for run `r`'s training subsample.
pub fn subsample_seed(seed: u64, run: usize) -> u64 {
    seeding::derive(seed, &[run as u64, tags::SUBSAMPLE])
}

/// Seed for run `r`'s forest.
pub fn forest_seed(seed: u64, run: usize) -> u64 {
    seeding::derive(seed, &[run as u64, tags::FOREST])
}

/// Retrains from scratch `runs` times and predicts the full validation half.
///
/// In wall-clock mode runs execute one after another so that each timing
/// covers a single training; in deterministic mode they run in parallel.
pub fn collect_runs<T: Scalar>(
    data: &SplitDataset<T>,
    params: &ForestParams,
    runs: usize,
    seed: u64,
    cost_mode: CostMode,
    seeding: RunSeeding,
) -> Result<RunSet<T>, ObjectiveError> {
    params.validate()?;
    if runs == 0 {
        return Err(ObjectiveError::TooFewRuns(runs));
    }
    if !data.validation.has_both_classes() {
        return Err(ObjectiveError::SingleClassValidation);
    }
    let one_run = |r: usize| -> Result<RunOutcome<T>, ObjectiveError> {
        let stream = match seeding {
            RunSeeding::Independent => r,
            RunSeeding::Shared => 0,
        };
        let train = dataset::subsample(&data.train, params.train_proportion, subsample_seed(seed, stream))?;
        let started = Instant::now();
        let forest = forest::train_forest(&train, params, forest_seed(seed, stream))?;
        let elapsed = started.elapsed().as_secs_f64();
        let runtime = match cost_mode {
            CostMode::WallClock => elapsed,
            CostMode::Deterministic => forest::training_cost(train.n_rows(), params),
        };
        let predictions = forest::predict_proba(&forest, &data.validation.features)?;
        let auc = metrics::auc(&predictions, &data.validation.labels)?;
        Ok(RunOutcome {
            predictions,
            auc,
            runtime,
        })
    };
    let outcomes: Vec<RunOutcome<T>> = match cost_mode {
        CostMode::WallClock => (0..runs).map(one_run).collect::<Result<_, _>>()?,
        CostMode::Deterministic => (0..runs).into_par_iter().map(one_run).collect::<Result<_, _>>()?,
    };
    let mut rows = Vec::with_capacity(runs);
    let mut aucs = Vec::with_capacity(runs);
    let mut runtimes = Vec::with_capacity(runs);
    for outcome in outcomes {
        rows.push(outcome.predictions);
        aucs.push(outcome.auc);
        runtimes.push(outcome.runtime);
    }
    Ok(RunSet {
        predictions: PredictionMatrix::from_runs(rows)?,
        aucs,
        runtimes,
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Evaluates one parameter setting over `runs` independent retrainings.
pub fn evaluate_params<T: Scalar>(
    data: &SplitDataset<T>,
    params: &ForestParams,
    runs: usize,
    weights: &LossWeights,
    seed: u64,
    cost_mode: CostMode,
) -> Result<EvaluationResult, ObjectiveError> {
    if runs < 2 {
        return Err(ObjectiveError::TooFewRuns(runs));
    }
    weights.validate()?;
    let set = collect_runs(data, params, runs, seed, cost_mode, RunSeeding::Independent)?;
    let auc = mean(&set.aucs);
    let rmspd = metrics::rmspd(&set.predictions)?;
    let runtime_seconds = mean(&set.runtimes);
    Ok(EvaluationResult {
        auc,
        rmspd,
        runtime_seconds,
        loss: loss(weights, auc, rmspd, runtime_seconds)?,
        n_trees: params.n_trees,
        max_depth: params.max_depth,
        train_proportion: params.train_proportion,
        runs,
    })
}
