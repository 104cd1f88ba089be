use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::output::{csv_text, ensure_dir, write_json, write_text};
use super::HarnessError;
use crate::dataset::SplitDataset;
use crate::forest::ForestParams;
use crate::objective::{self, CostMode, EvaluationResult, LossWeights};
use crate::seeding::{self, tags};

/// One `(n_trees, max_depth)` grid cell. `losses[k]` is the loss under the
/// k-th weight setting; a failed cell has no result and carries the error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n_trees: usize,
    pub max_depth: usize,
    pub result: Option<EvaluationResult>,
    pub losses: Vec<f64>,
    pub error: Option<String>,
}

/// Complete grid, row-major over `n_trees` then `max_depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub train_proportion: f64,
    pub repetitions: usize,
    pub weights: Vec<LossWeights>,
    pub cells: Vec<Cell>,
}

impl SweepGrid {
    pub fn cell(&self, tree_index: usize, depth_index: usize) -> &Cell {
        &self.cells[tree_index * self.max_depth.len() + depth_index]
    }

    fn arg_best(&self, key: impl Fn(&Cell) -> Option<f64>) -> Option<(usize, usize)> {
        let mut best: Option<(f64, &Cell)> = None;
        for cell in &self.cells {
            if let Some(v) = key(cell) {
                if best.is_none_or(|(b, _)| v < b) {
                    best = Some((v, cell));
                }
            }
        }
        best.map(|(_, c)| (c.n_trees, c.max_depth))
    }

    /// `(n_trees, max_depth)` of the lowest loss under weight set `k`. Ties
    /// keep the first cell in row-major order.
    pub fn argmin_loss(&self, k: usize) -> Option<(usize, usize)> {
        self.arg_best(|c| c.result.as_ref().map(|_| c.losses[k]))
    }

    pub fn argmax_auc(&self) -> Option<(usize, usize)> {
        self.arg_best(|c| c.result.as_ref().map(|r| -r.auc))
    }

    pub fn argmin_rmspd(&self) -> Option<(usize, usize)> {
        self.arg_best(|c| c.result.as_ref().map(|r| r.rmspd))
    }

    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.result.is_none()).count()
    }

    fn heatmap(&self, value: impl Fn(&Cell) -> Option<f64>) -> String {
        let mut header = vec!["n_trees".to_owned()];
        header.extend(self.max_depth.iter().map(|d| format!("depth_{d}")));
        let rows: Vec<Vec<String>> = self
            .n_trees
            .iter()
            .enumerate()
            .map(|(i, nt)| {
                let mut row = vec![nt.to_string()];
                row.extend((0..self.max_depth.len()).map(|j| {
                    value(self.cell(i, j)).map_or_else(|| "failed".to_owned(), |v| v.to_string())
                }));
                row
            })
            .collect();
        csv_text(&header, &rows)
    }
}

fn cell_seed(seed: u64, n_trees: usize, max_depth: usize) -> u64 {
    seeding::derive(seed, &[tags::CELL, n_trees as u64, max_depth as u64])
}

fn evaluate_cell(
    data: &SplitDataset<f64>,
    n_trees: usize,
    max_depth: usize,
    config: &RunConfig,
    seed: u64,
) -> Cell {
    let g = &config.sweep;
    let params = ForestParams::new(n_trees, Some(max_depth), g.train_proportion);
    let outcome = objective::evaluate_params(
        data,
        &params,
        g.repetitions,
        &config.weights[0],
        cell_seed(seed, n_trees, max_depth),
        config.cost_mode,
    )
    .and_then(|result| {
        let losses = config
            .weights
            .iter()
            .map(|w| result.reweighted(w).map(|r| r.loss))
            .collect::<Result<Vec<f64>, _>>()?;
        Ok((result, losses))
    });
    match outcome {
        Ok((result, losses)) => Cell {
            n_trees,
            max_depth,
            result: Some(result),
            losses,
            error: None,
        },
        Err(e) => {
            log::warn!("sweep cell ({n_trees}, {max_depth}) failed: {e}");
            Cell {
                n_trees,
                max_depth,
                result: None,
                losses: Vec::new(),
                error: Some(e.to_string()),
            }
        }
    }
}

/// Evaluates every grid cell. Cells run in parallel in deterministic cost
/// mode and one at a time under wall-clock timing.
pub fn run_sweep(config: &RunConfig, data: &SplitDataset<f64>) -> Result<SweepGrid, HarnessError> {
    let seed = config.seed()?;
    let g = &config.sweep;
    let coords: Vec<(usize, usize)> = g
        .n_trees
        .iter()
        .flat_map(|&nt| g.max_depth.iter().map(move |&d| (nt, d)))
        .collect();
    let cells: Vec<Cell> = match config.cost_mode {
        CostMode::Deterministic => coords
            .par_iter()
            .map(|&(nt, d)| evaluate_cell(data, nt, d, config, seed))
            .collect(),
        CostMode::WallClock => coords
            .iter()
            .map(|&(nt, d)| evaluate_cell(data, nt, d, config, seed))
            .collect(),
    };
    Ok(SweepGrid {
        n_trees: g.n_trees.clone(),
        max_depth: g.max_depth.clone(),
        train_proportion: g.train_proportion,
        repetitions: g.repetitions,
        weights: config.weights.clone(),
        cells,
    })
}

#[derive(Serialize)]
struct Best {
    n_trees: usize,
    max_depth: usize,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    grid: &'a SweepGrid,
    argmin_loss: Vec<Option<Best>>,
    argmax_auc: Option<Best>,
    argmin_rmspd: Option<Best>,
    failed_cells: usize,
}

fn best(at: Option<(usize, usize)>) -> Option<Best> {
    at.map(|(n_trees, max_depth)| Best { n_trees, max_depth })
}

/// Writes `heatmap_{auc,rmspd,runtime}.csv`, one `heatmap_loss_<k>.csv` per
/// weight set, the long-form `report.csv` and `report.json`.
pub fn write_sweep(grid: &SweepGrid, dir: &Path) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    write_text(&dir.join("heatmap_auc.csv"), &grid.heatmap(|c| c.result.as_ref().map(|r| r.auc)))?;
    write_text(&dir.join("heatmap_rmspd.csv"), &grid.heatmap(|c| c.result.as_ref().map(|r| r.rmspd)))?;
    write_text(
        &dir.join("heatmap_runtime.csv"),
        &grid.heatmap(|c| c.result.as_ref().map(|r| r.runtime_seconds)),
    )?;
    for k in 0..grid.weights.len() {
        write_text(
            &dir.join(format!("heatmap_loss_{k}.csv")),
            &grid.heatmap(|c| c.result.as_ref().map(|_| c.losses[k])),
        )?;
    }

    let mut header: Vec<String> = ["n_trees", "max_depth", "train_proportion", "auc", "rmspd", "runtime"]
        .map(String::from)
        .to_vec();
    header.extend((0..grid.weights.len()).map(|k| format!("loss_{k}")));
    header.push("status".into());
    let rows: Vec<Vec<String>> = grid
        .cells
        .iter()
        .map(|c| {
            let mut row = vec![
                c.n_trees.to_string(),
                c.max_depth.to_string(),
                grid.train_proportion.to_string(),
            ];
            match &c.result {
                Some(r) => {
                    row.extend([r.auc, r.rmspd, r.runtime_seconds].map(|v| v.to_string()));
                    row.extend(c.losses.iter().map(|v| v.to_string()));
                    row.push("ok".into());
                }
                None => {
                    row.extend((0..3 + grid.weights.len()).map(|_| String::new()));
                    row.push("failed".into());
                }
            }
            row
        })
        .collect();
    write_text(&dir.join("report.csv"), &csv_text(&header, &rows))?;

    let summary = SweepSummary {
        grid,
        argmin_loss: (0..grid.weights.len()).map(|k| best(grid.argmin_loss(k))).collect(),
        argmax_auc: best(grid.argmax_auc()),
        argmin_rmspd: best(grid.argmin_rmspd()),
        failed_cells: grid.failed(),
    };
    write_json(&dir.join("report.json"), &summary)
}

/// Runs the configured sweep and writes its outputs.
pub fn cmd_sweep(config: &RunConfig) -> Result<SweepGrid, HarnessError> {
    config.validate()?;
    let data = config.load_data()?;
    let grid = run_sweep(config, &data)?;
    write_sweep(&grid, &config.output_dir)?;
    Ok(grid)
}
