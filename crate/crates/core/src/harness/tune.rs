use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::output::{csv_text, depth_label, ensure_dir, write_json, write_text};
use super::HarnessError;
use crate::bayesopt::{self, TraceEntry};
use crate::dataset::SplitDataset;
use crate::forest::ForestParams;
use crate::objective::{self, CostMode, EvaluationResult, LossWeights};

/// One report line: the baseline forest or a tuned setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    /// `"baseline"` or `"tuned"`.
    pub kind: String,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub n_trees: usize,
    /// `null` for unlimited depth.
    pub max_depth: Option<usize>,
    pub train_proportion: f64,
    pub auc: f64,
    pub rmspd: f64,
    pub runtime: f64,
    pub loss: f64,
    /// Baseline metrics scored with this row's weights.
    pub baseline_loss: f64,
    pub evaluations: usize,
}

impl TuneRow {
    fn new(kind: &str, weights: &LossWeights, result: &EvaluationResult, baseline_loss: f64, evaluations: usize) -> Self {
        Self {
            kind: kind.to_owned(),
            alpha: weights.alpha,
            beta: weights.beta,
            gamma: weights.gamma,
            n_trees: result.n_trees,
            max_depth: result.max_depth,
            train_proportion: result.train_proportion,
            auc: result.auc,
            rmspd: result.rmspd,
            runtime: result.runtime_seconds,
            loss: result.loss,
            baseline_loss,
            evaluations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub seed: u64,
    pub cost_mode: CostMode,
    pub runs: usize,
    pub rows: Vec<TuneRow>,
    /// Evaluation trace of each weight set, in row order.
    #[serde(skip)]
    pub traces: Vec<Vec<TraceEntry<EvaluationResult>>>,
    /// Set when the run stopped early; the rows so far are still valid.
    pub error: Option<String>,
}

impl TuneReport {
    pub fn new(config: &RunConfig) -> Result<Self, HarnessError> {
        Ok(Self {
            seed: config.seed()?,
            cost_mode: config.cost_mode,
            runs: config.runs,
            rows: Vec::new(),
            traces: Vec::new(),
            error: None,
        })
    }

    pub fn baseline(&self) -> Option<&TuneRow> {
        self.rows.iter().find(|r| r.kind == "baseline")
    }

    pub fn tuned(&self) -> impl Iterator<Item = &TuneRow> {
        self.rows.iter().filter(|r| r.kind == "tuned")
    }
}

/// Evaluates the baseline forest (10 trees, unlimited depth, all training
/// rows) and then tunes once per weight set, appending rows to `report` as
/// they complete. Every evaluation uses the master seed, so settings are
/// compared on common random streams.
pub fn run_tune(config: &RunConfig, data: &SplitDataset<f64>, report: &mut TuneReport) -> Result<(), HarnessError> {
    let seed = config.seed()?;
    let baseline = objective::evaluate_params(
        data,
        &ForestParams::baseline(),
        config.runs,
        &config.weights[0],
        seed,
        config.cost_mode,
    )?;
    report
        .rows
        .push(TuneRow::new("baseline", &config.weights[0], &baseline, baseline.loss, 1));

    let opt_config = config.optimize_config()?;
    for (k, weights) in config.weights.iter().enumerate() {
        let evaluator =
            |p: &ForestParams| objective::evaluate_params(data, p, config.runs, weights, seed, config.cost_mode);
        let outcome = bayesopt::optimize(evaluator, &config.space, &opt_config)?;
        let baseline_loss = baseline.reweighted(weights)?.loss;
        log::info!(
            "weights {k}: tuned loss {:.5} vs baseline {:.5}",
            outcome.best.loss,
            baseline_loss
        );
        report.rows.push(TuneRow::new(
            "tuned",
            weights,
            &outcome.best,
            baseline_loss,
            outcome.trace.len(),
        ));
        report.traces.push(outcome.trace);
    }
    Ok(())
}

/// Writes `report.csv`, `report.json` and one `trace_<k>.json` per completed
/// weight set.
pub fn write_tune(report: &TuneReport, dir: &Path) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    let header = [
        "kind",
        "alpha",
        "beta",
        "gamma",
        "n_trees",
        "max_depth",
        "train_proportion",
        "auc",
        "rmspd",
        "runtime",
        "loss",
        "baseline_loss",
    ]
    .map(String::from);
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.kind.clone(),
                r.alpha.to_string(),
                r.beta.to_string(),
                r.gamma.to_string(),
                r.n_trees.to_string(),
                depth_label(r.max_depth),
                r.train_proportion.to_string(),
                r.auc.to_string(),
                r.rmspd.to_string(),
                r.runtime.to_string(),
                r.loss.to_string(),
                r.baseline_loss.to_string(),
            ]
        })
        .collect();
    write_text(&dir.join("report.csv"), &csv_text(&header, &rows))?;
    write_json(&dir.join("report.json"), report)?;
    for (k, trace) in report.traces.iter().enumerate() {
        write_json(&dir.join(format!("trace_{k}.json")), trace)?;
    }
    Ok(())
}

/// Runs the tuning experiment. On failure the rows completed so far are
/// still written before the error is returned.
pub fn cmd_tune(config: &RunConfig) -> Result<TuneReport, HarnessError> {
    config.validate()?;
    let data = config.load_data()?;
    let mut report = TuneReport::new(config)?;
    let outcome = run_tune(config, &data, &mut report);
    if let Err(e) = &outcome {
        report.error = Some(e.to_string());
    }
    write_tune(&report, &config.output_dir)?;
    outcome.map(|()| report)
}
