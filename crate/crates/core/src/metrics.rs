//! Prediction-stability statistics over repeated training runs, and AUC.
//!
//! A [`PredictionMatrix`] holds one row per training run and one column per
//! validation point. The mean squared prediction delta (MSPD) averages the
//! squared difference between two runs' predictions over all unordered run
//! pairs and all points. It can be computed pairwise or from per-point
//! variances and covariances; both routes are provided so they can be checked
//! against each other.
//!
//! Inputs may be `f32` or `f64`; every statistic is accumulated and returned
//! in `f64`.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("stability needs at least 2 runs, found {0}")]
    TooFewRuns(usize),
    #[error("prediction matrix needs at least 1 run and 1 point, found {runs}x{points}")]
    EmptyMatrix { runs: usize, points: usize },
    #[error("prediction {value} at run {run}, point {point} is outside [0, 1]")]
    OutOfRange { run: usize, point: usize, value: f64 },
    #[error("rows have different lengths")]
    Ragged,
    #[error("AUC undefined: labels contain a single class")]
    SingleClass,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
}

/// `R x N` positive-class probabilities: entry `(j, i)` is run `j`'s
/// prediction for validation point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix<T> {
    values: Array2<T>,
}

impl<T: Scalar> PredictionMatrix<T> {
    pub fn new(values: Array2<T>) -> Result<Self, MetricsError> {
        let (runs, points) = values.dim();
        if runs == 0 || points == 0 {
            return Err(MetricsError::EmptyMatrix { runs, points });
        }
        for ((run, point), &v) in values.indexed_iter() {
            if !(v >= T::zero() && v <= T::one()) {
                return Err(MetricsError::OutOfRange {
                    run,
                    point,
                    value: v.as_f64(),
                });
            }
        }
        Ok(Self { values })
    }

    /// Builds the matrix from one prediction vector per run.
    pub fn from_runs(runs: Vec<Vec<T>>) -> Result<Self, MetricsError> {
        let r = runs.len();
        let n = runs.first().map_or(0, Vec::len);
        if runs.iter().any(|row| row.len() != n) {
            return Err(MetricsError::Ragged);
        }
        let flat: Vec<T> = runs.into_iter().flatten().collect();
        let values = Array2::from_shape_vec((r, n), flat).map_err(|_| MetricsError::Ragged)?;
        Self::new(values)
    }

    pub fn runs(&self) -> usize {
        self.values.nrows()
    }

    pub fn points(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn run(&self, j: usize) -> ArrayView1<'_, T> {
        self.values.row(j)
    }

    fn require_runs(&self) -> Result<(), MetricsError> {
        if self.runs() < 2 {
            Err(MetricsError::TooFewRuns(self.runs()))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub mspd: f64,
    pub rmspd: f64,
    /// Mean over points of the across-run sample variance.
    pub mean_variance: f64,
    /// `4 * mean_variance`, an upper bound on `mspd`.
    pub upper_bound: f64,
}

/// Mean squared prediction delta averaged over all unordered run pairs.
pub fn mspd_pairwise<T: Scalar>(preds: &PredictionMatrix<T>) -> Result<f64, MetricsError> {
    preds.require_runs()?;
    let (r, n) = (preds.runs(), preds.points());
    let mut total = 0.0;
    for j in 1..r {
        let row_j = preds.run(j);
        for k in 0..j {
            let row_k = preds.run(k);
            let pair: f64 = row_j
                .iter()
                .zip(row_k.iter())
                .map(|(&a, &b)| {
                    let d = a.as_f64() - b.as_f64();
                    d * d
                })
                .sum();
            total += pair / n as f64;
        }
    }
    Ok(2.0 * total / (r * (r - 1)) as f64)
}

/// MSPD through per-point run variance minus the run cross term,
/// `(2/N) sum_i [ s_i^2 - (1/(R(R-1))) sum_j sum_k d_ij d_ik ]`, with `d` the
/// deviation from the per-point run mean. The double sum is evaluated as
/// written rather than simplified.
pub fn mspd_decomposed<T: Scalar>(preds: &PredictionMatrix<T>) -> Result<f64, MetricsError> {
    preds.require_runs()?;
    let (r, n) = (preds.runs(), preds.points());
    let rf = r as f64;
    let mut deviations = vec![0.0; r];
    let mut total = 0.0;
    for column in preds.values.columns() {
        let mean = column.iter().map(|v| v.as_f64()).sum::<f64>() / rf;
        for (d, v) in deviations.iter_mut().zip(column.iter()) {
            *d = v.as_f64() - mean;
        }
        let variance = deviations.iter().map(|d| d * d).sum::<f64>() / (rf - 1.0);
        let mut cross = 0.0;
        for &dj in &deviations {
            for &dk in &deviations {
                cross += dj * dk;
            }
        }
        total += variance - cross / (rf * (rf - 1.0));
    }
    Ok(2.0 * total / n as f64)
}

/// Root mean squared prediction delta.
pub fn rmspd<T: Scalar>(preds: &PredictionMatrix<T>) -> Result<f64, MetricsError> {
    mspd_pairwise(preds).map(f64::sqrt)
}

/// Mean over validation points of the sample variance (`1/(R-1)`) across runs.
pub fn mean_run_variance<T: Scalar>(preds: &PredictionMatrix<T>) -> Result<f64, MetricsError> {
    preds.require_runs()?;
    let rf = preds.runs() as f64;
    let total: f64 = preds
        .values
        .columns()
        .into_iter()
        .map(|column| {
            let mean = column.iter().map(|v| v.as_f64()).sum::<f64>() / rf;
            column.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / (rf - 1.0)
        })
        .sum();
    Ok(total / preds.points() as f64)
}

pub fn stability_report<T: Scalar>(
    preds: &PredictionMatrix<T>,
) -> Result<StabilityReport, MetricsError> {
    let mspd = mspd_pairwise(preds)?;
    let mean_variance = mean_run_variance(preds)?;
    Ok(StabilityReport {
        mspd,
        rmspd: mspd.sqrt(),
        mean_variance,
        upper_bound: 4.0 * mean_variance,
    })
}

/// Sample covariance (`1/(N-1)`) between two runs' predictions over the
/// validation points. Zero when there is a single point.
pub fn run_covariance<T: Scalar>(preds: &PredictionMatrix<T>, j: usize, k: usize) -> f64 {
    let n = preds.points();
    if n < 2 {
        return 0.0;
    }
    let (a, b) = (preds.run(j), preds.run(k));
    let mean_a = a.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
    let mean_b = b.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x.as_f64() - mean_a) * (y.as_f64() - mean_b))
        .sum::<f64>()
        / (n - 1) as f64
}

/// `run_j[i] - run_k[i]` for every run pair `k < j` and every point, pairs in
/// lexicographic `(j, k)` order.
pub fn prediction_deltas<T: Scalar>(preds: &PredictionMatrix<T>) -> Vec<f64> {
    let (r, n) = (preds.runs(), preds.points());
    let mut deltas = Vec::with_capacity(n * r * r.saturating_sub(1) / 2);
    for j in 1..r {
        for k in 0..j {
            deltas.extend(
                preds
                    .run(j)
                    .iter()
                    .zip(preds.run(k).iter())
                    .map(|(&a, &b)| a.as_f64() - b.as_f64()),
            );
        }
    }
    deltas
}

/// Area under the ROC curve in Mann-Whitney form: the fraction of
/// (positive, negative) pairs where the positive scores higher, ties counting
/// one half. Exact; runs in `O(N log N)`.
pub fn auc<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(MetricsError::InvalidLabel(bad));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite"));

    // Twice the Mann-Whitney U, kept integral so ties are exact.
    let mut twice_u: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let value = scores[order[start]];
        let mut end = start;
        let (mut pos, mut neg) = (0u128, 0u128);
        while end < order.len() && scores[order[end]] == value {
            if labels[order[end]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            end += 1;
        }
        twice_u += 2 * pos * negatives_below + pos * neg;
        negatives_below += neg;
        start = end;
    }
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}
