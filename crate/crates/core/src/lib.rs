//! Random-forest hyperparameter tuning against a loss that trades off
//! validation AUC, prediction stability across retrainings (RMSPD) and
//! training cost.
//!
//! The data, forest and metric layers are generic over [`Scalar`] (`f32` or
//! `f64`); statistics are always accumulated and returned in `f64`. The
//! optimiser and the harness work in `f64`.

pub mod bayesopt;
pub mod dataset;
pub mod forest;
pub mod harness;
pub mod metrics;
pub mod objective;
pub mod scalar;
pub mod seeding;

pub use scalar::Scalar;

pub type EncodedDataset64 = dataset::EncodedDataset<f64>;
pub type EncodedDataset32 = dataset::EncodedDataset<f32>;
pub type SplitDataset64 = dataset::SplitDataset<f64>;
pub type SplitDataset32 = dataset::SplitDataset<f32>;
pub type DecisionTree64 = forest::DecisionTree<f64>;
pub type DecisionTree32 = forest::DecisionTree<f32>;
pub type RandomForest64 = forest::RandomForest<f64>;
pub type RandomForest32 = forest::RandomForest<f32>;
pub type PredictionMatrix64 = metrics::PredictionMatrix<f64>;
pub type PredictionMatrix32 = metrics::PredictionMatrix<f32>;
