use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synthetic::generate_synthetic;
use super::HarnessError;
use crate::bayesopt::{OptimizeConfig, ParameterSpace};
use crate::dataset::{self, SplitDataset, TabularDataset};
use crate::objective::{CostMode, LossWeights};

/// Parameters of the bundled synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub n_numeric: usize,
    pub n_categorical: usize,
    /// Levels per categorical column.
    pub categories: usize,
    pub signal_strength: f64,
    /// Seed of the data itself, independent of the experiment seed.
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_rows: 4000,
            n_numeric: 8,
            n_categorical: 2,
            categories: 4,
            signal_strength: 2.0,
            seed: 2018,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    pub label_column: String,
    #[serde(default)]
    pub categorical_columns: Vec<String>,
    #[serde(default)]
    pub positive_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Csv(CsvSource),
}

impl Default for DatasetSource {
    fn default() -> Self {
        Self::Synthetic(SyntheticSpec::default())
    }
}

/// Settings for the prediction-delta experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySettings {
    pub n_trees: Vec<usize>,
    pub max_depth: usize,
    pub train_proportion: f64,
    pub runs: usize,
    /// Every run reuses one seed; all deltas are then zero.
    pub shared_seed: bool,
}

impl Default for StabilitySettings {
    fn default() -> Self {
        Self {
            n_trees: vec![8, 32, 128],
            max_depth: 10,
            train_proportion: 1.0,
            runs: 10,
            shared_seed: false,
        }
    }
}

/// `(n_trees, max_depth)` grid at a fixed training proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub train_proportion: f64,
    pub repetitions: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            n_trees: vec![8, 16, 32, 64, 128],
            max_depth: vec![2, 4, 6, 8, 10],
            train_proportion: 0.5,
            repetitions: 5,
        }
    }
}

fn default_weights() -> Vec<LossWeights> {
    vec![LossWeights {
        alpha: 1.0,
        beta: 1.0,
        gamma: 0.01,
    }]
}

fn default_runs() -> usize {
    3
}

fn default_n_init() -> usize {
    5
}

fn default_iterations() -> usize {
    20
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Everything one harness invocation needs. Only `seed` has no default, and
/// it may come from the command line instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub dataset: DatasetSource,
    #[serde(default = "default_weights")]
    pub weights: Vec<LossWeights>,
    #[serde(default)]
    pub space: ParameterSpace,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub cost_mode: CostMode,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub stability: StabilitySettings,
    #[serde(default)]
    pub sweep: SweepSettings,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub cost_mode: Option<CostMode>,
}

impl RunConfig {
    /// Defaults everywhere, with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        let mut config: Self = serde_json::from_str("{}").expect("all fields default");
        config.seed = Some(seed);
        config
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = Some(seed);
        }
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(mode) = overrides.cost_mode {
            self.cost_mode = mode;
        }
    }

    pub fn seed(&self) -> Result<u64, HarnessError> {
        self.seed
            .ok_or_else(|| HarnessError::Config("a seed is required (config `seed` or --seed)".into()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        self.seed()?;
        self.space
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.weights.is_empty() {
            return bad("at least one weight setting is required".into());
        }
        for w in &self.weights {
            w.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        if self.runs < 2 {
            return bad(format!("runs must be at least 2, got {}", self.runs));
        }
        if self.n_init == 0 {
            return bad("n_init must be at least 1".into());
        }
        let s = &self.stability;
        if s.n_trees.is_empty() || s.n_trees.contains(&0) {
            return bad("stability.n_trees must be non-empty positive integers".into());
        }
        if s.max_depth == 0 || s.runs < 2 || !(s.train_proportion > 0.0 && s.train_proportion <= 1.0) {
            return bad("stability needs max_depth >= 1, runs >= 2, 0 < train_proportion <= 1".into());
        }
        let g = &self.sweep;
        if g.n_trees.is_empty() || g.max_depth.is_empty() {
            return bad("sweep grid must have at least one value per axis".into());
        }
        if g.n_trees.contains(&0) || g.max_depth.contains(&0) {
            return bad("sweep grid values must be positive".into());
        }
        if g.repetitions < 2 || !(g.train_proportion > 0.0 && g.train_proportion <= 1.0) {
            return bad("sweep needs repetitions >= 2 and 0 < train_proportion <= 1".into());
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            if spec.n_rows < 20 {
                return bad(format!("synthetic n_rows must be at least 20, got {}", spec.n_rows));
            }
            if spec.n_numeric + spec.n_categorical == 0 {
                return bad("synthetic data needs at least one feature".into());
            }
            if spec.n_categorical > 0 && spec.categories < 2 {
                return bad("synthetic categoricals need at least 2 levels".into());
            }
            if !(spec.signal_strength.is_finite() && spec.signal_strength >= 0.0) {
                return bad("signal_strength must be finite and non-negative".into());
            }
        }
        Ok(())
    }

    pub fn optimize_config(&self) -> Result<OptimizeConfig, HarnessError> {
        Ok(OptimizeConfig::new(self.n_init, self.iterations, self.seed()?))
    }

    pub fn load_table(&self) -> Result<TabularDataset, HarnessError> {
        match &self.dataset {
            DatasetSource::Synthetic(spec) => generate_synthetic(spec),
            DatasetSource::Csv(src) => Ok(dataset::load_csv(
                &src.path,
                &src.label_column,
                &src.categorical_columns,
                src.positive_label.as_deref(),
            )?),
        }
    }

    /// Loads, encodes with training-half statistics and splits the data.
    pub fn load_data(&self) -> Result<SplitDataset<f64>, HarnessError> {
        let table = self.load_table()?;
        Ok(dataset::prepare(&table)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_everything_but_seed() {
        let config = RunConfig::from_json("{}").unwrap();
        assert_eq!(config.seed, None);
        assert!(matches!(config.validate(), Err(HarnessError::Config(_))));
        assert_eq!(config.stability.n_trees, vec![8, 32, 128]);
        assert_eq!(config.sweep.train_proportion, 0.5);
        assert_eq!(config.runs, 3);
        assert_eq!(config.iterations, 20);
        RunConfig::with_seed(1).validate().unwrap();
    }

    #[test]
    fn parses_full_config() {
        let text = r#"{
            "dataset": {"csv": {"path": "data.csv", "label_column": "y", "categorical_columns": ["c"]}},
            "weights": [{"alpha": 1, "beta": 5, "gamma": 0.01}],
            "space": {"n_trees": [1, 50], "max_depth": [1, 8], "train_proportion": [0.2, 1.0]},
            "runs": 4, "n_init": 3, "iterations": 7, "seed": 9,
            "cost_mode": "model", "output_dir": "results",
            "sweep": {"n_trees": [4, 8], "max_depth": [2]}
        }"#;
        let config = RunConfig::from_json(text).unwrap();
        config.validate().unwrap();
        assert_eq!(config.cost_mode, CostMode::Deterministic);
        assert_eq!(config.weights[0].beta, 5.0);
        assert_eq!(config.sweep.repetitions, 5);
        assert!(matches!(config.dataset, DatasetSource::Csv(ref c) if c.label_column == "y"));
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        assert!(RunConfig::from_json(r#"{"sed": 3}"#).is_err());
        let mut config = RunConfig::with_seed(1);
        config.runs = 1;
        assert_eq!(config.validate().unwrap_err().exit_code(), 2);
        let mut config = RunConfig::with_seed(1);
        config.space.max_depth = (5, 2);
        assert!(config.validate().is_err());
        let mut config = RunConfig::with_seed(1);
        config.weights[0].gamma = -1.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn overrides_win() {
        let mut config = RunConfig::from_json(r#"{"seed": 1}"#).unwrap();
        config.apply(&Overrides {
            seed: Some(5),
            output_dir: Some("x".into()),
            cost_mode: Some(CostMode::Deterministic),
        });
        assert_eq!(config.seed, Some(5));
        assert_eq!(config.output_dir, PathBuf::from("x"));
        assert_eq!(config.cost_mode, CostMode::Deterministic);
    }
}
