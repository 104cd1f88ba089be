use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::output::{csv_text, ensure_dir, write_json, write_text};
use super::HarnessError;
use crate::dataset::SplitDataset;
use crate::forest::ForestParams;
use crate::metrics;
use crate::objective::{self, CostMode, ObjectiveError, RunSeeding};

pub const HISTOGRAM_BINS: usize = 64;

/// Counts of prediction deltas in equal-width bins over `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaHistogram {
    pub counts: Vec<u64>,
}

impl DeltaHistogram {
    pub fn from_deltas(deltas: &[f64]) -> Self {
        let mut counts = vec![0u64; HISTOGRAM_BINS];
        for &d in deltas {
            let pos = (d + 1.0) / 2.0 * HISTOGRAM_BINS as f64;
            let bin = (pos.floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
            counts[bin] += 1;
        }
        Self { counts }
    }

    pub fn bin_edges(bin: usize) -> (f64, f64) {
        let width = 2.0 / HISTOGRAM_BINS as f64;
        (-1.0 + bin as f64 * width, -1.0 + (bin + 1) as f64 * width)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn to_csv(&self) -> String {
        let header = ["bin_lo", "bin_hi", "count"].map(String::from);
        let rows: Vec<Vec<String>> = self
            .counts
            .iter()
            .enumerate()
            .map(|(b, c)| {
                let (lo, hi) = Self::bin_edges(b);
                vec![lo.to_string(), hi.to_string(), c.to_string()]
            })
            .collect();
        csv_text(&header, &rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub n_trees: usize,
    pub max_depth: usize,
    pub train_proportion: f64,
    pub runs: usize,
    pub mspd: f64,
    pub rmspd: f64,
    pub mean_variance: f64,
    pub upper_bound: f64,
    pub mean_delta: f64,
    pub n_deltas: usize,
    pub histogram: DeltaHistogram,
}

/// Retrains each forest size `runs` times on the training half and
/// histograms the pairwise validation-prediction deltas.
pub fn run_stability(config: &RunConfig, data: &SplitDataset<f64>) -> Result<Vec<StabilityRow>, HarnessError> {
    let seed = config.seed()?;
    let s = &config.stability;
    let seeding = if s.shared_seed {
        RunSeeding::Shared
    } else {
        RunSeeding::Independent
    };
    let mut rows = Vec::with_capacity(s.n_trees.len());
    for &n_trees in &s.n_trees {
        let params = ForestParams::new(n_trees, Some(s.max_depth), s.train_proportion);
        // Timing is not reported here, so runs may train in parallel.
        let set = objective::collect_runs(data, &params, s.runs, seed, CostMode::Deterministic, seeding)?;
        let report = metrics::stability_report(&set.predictions).map_err(ObjectiveError::from)?;
        let deltas = metrics::prediction_deltas(&set.predictions);
        let mean_delta = deltas.iter().sum::<f64>() / deltas.len() as f64;
        log::info!("stability: {n_trees} trees, rmspd {:.5}", report.rmspd);
        rows.push(StabilityRow {
            n_trees,
            max_depth: s.max_depth,
            train_proportion: s.train_proportion,
            runs: s.runs,
            mspd: report.mspd,
            rmspd: report.rmspd,
            mean_variance: report.mean_variance,
            upper_bound: report.upper_bound,
            mean_delta,
            n_deltas: deltas.len(),
            histogram: DeltaHistogram::from_deltas(&deltas),
        });
    }
    Ok(rows)
}

/// Runs the stability experiment and writes `histogram_<n_trees>.csv`,
/// `report.csv` and `report.json` to the output directory.
pub fn cmd_stability(config: &RunConfig) -> Result<Vec<StabilityRow>, HarnessError> {
    config.validate()?;
    let data = config.load_data()?;
    let rows = run_stability(config, &data)?;
    let dir = &config.output_dir;
    ensure_dir(dir)?;
    for row in &rows {
        write_text(&dir.join(format!("histogram_{}.csv", row.n_trees)), &row.histogram.to_csv())?;
    }
    let header = [
        "n_trees",
        "max_depth",
        "train_proportion",
        "runs",
        "mspd",
        "rmspd",
        "mean_variance",
        "upper_bound",
        "mean_delta",
        "n_deltas",
    ]
    .map(String::from);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n_trees.to_string(),
                r.max_depth.to_string(),
                r.train_proportion.to_string(),
                r.runs.to_string(),
                r.mspd.to_string(),
                r.rmspd.to_string(),
                r.mean_variance.to_string(),
                r.upper_bound.to_string(),
                r.mean_delta.to_string(),
                r.n_deltas.to_string(),
            ]
        })
        .collect();
    write_text(&dir.join("report.csv"), &csv_text(&header, &table))?;
    write_json(&dir.join("report.json"), &rows)?;
    Ok(rows)
}
