//! Tabular ingestion, preprocessing, the positional half split and seeded
//! training subsamples.
//!
//! The pipeline is `load_csv` (or a synthetic generator) producing a
//! [`TabularDataset`], then [`preprocess`] fitted on the training half, then
//! [`split_half`]. Each training run draws its own [`subsample`].

use std::collections::{BTreeSet, HashSet};
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use ndarray::{Array2, Axis};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::seeding;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing header row")]
    MissingHeader,
    #[error("missing label column `{0}`")]
    MissingLabelColumn(String),
    #[error("unknown categorical column `{0}`")]
    UnknownColumn(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("non-binary label: column `{column}` has {distinct} distinct values")]
    NonBinaryLabel { column: String, distinct: usize },
    #[error("positive label `{0}` does not occur in the label column")]
    UnknownPositiveLabel(String),
    #[error("missing label at line {line}")]
    MissingLabel { line: u64 },
    #[error("ragged row at line {line}: expected {expected} fields, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },
    #[error("invalid numeric value `{value}` in column `{column}` at line {line}")]
    InvalidNumber { column: String, value: String, line: u64 },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("fit range is empty")]
    EmptyFitRange,
    #[error("need at least 2 rows, found {0}")]
    TooFewRows(usize),
    #[error("train proportion {0} outside (0, 1]")]
    ProportionOutOfRange(f64),
    #[error("sample size is 0 (p = {p}, N = {n})")]
    EmptySample { p: f64, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// One cell of a raw record.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Category(String),
    Label(u8),
    Missing,
}

/// Raw records with declared column kinds and a binary label.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    columns: Vec<Column>,
    rows: Vec<Vec<Value>>,
    label_index: usize,
}

impl TabularDataset {
    /// Validates the record layout: one slot per column, exactly one label
    /// column carrying `0`/`1`, cells matching their column kind, at least
    /// two rows.
    pub fn new(columns: Vec<Column>, rows: Vec<Vec<Value>>) -> Result<Self, DatasetError> {
        let label_columns: Vec<usize> = columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Label)
            .map(|(i, _)| i)
            .collect();
        if label_columns.len() != 1 {
            return Err(DatasetError::Invalid(format!(
                "expected exactly one label column, found {}",
                label_columns.len()
            )));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(DatasetError::DuplicateColumn(c.name.clone()));
            }
        }
        if rows.len() < 2 {
            return Err(DatasetError::TooFewRows(rows.len()));
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(DatasetError::Invalid(format!(
                    "row {r} has {} values for {} columns",
                    row.len(),
                    columns.len()
                )));
            }
            for (value, column) in row.iter().zip(&columns) {
                let ok = match (column.kind, value) {
                    (ColumnKind::Label, Value::Label(l)) => *l <= 1,
                    (ColumnKind::Label, _) => false,
                    (ColumnKind::Numeric, Value::Number(x)) => x.is_finite(),
                    (ColumnKind::Categorical, Value::Category(_)) => true,
                    (_, Value::Missing) => true,
                    _ => false,
                };
                if !ok {
                    return Err(DatasetError::Invalid(format!(
                        "row {r}: value {value:?} does not fit column `{}` ({:?})",
                        column.name, column.kind
                    )));
                }
            }
        }
        Ok(Self {
            columns,
            rows,
            label_index: label_columns[0],
        })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn label_column(&self) -> &Column {
        &self.columns[self.label_index]
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows
            .iter()
            .map(|row| match row[self.label_index] {
                Value::Label(l) => l,
                _ => unreachable!("validated at construction"),
            })
            .collect()
    }

    /// Writes the dataset as CSV with labels rendered as `0`/`1` and missing
    /// cells left empty.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for row in &self.rows {
            out.write_record(row.iter().map(|v| match v {
                Value::Number(x) => x.to_string(),
                Value::Category(s) => s.clone(),
                Value::Label(l) => l.to_string(),
                Value::Missing => String::new(),
            }))?;
        }
        out.flush().map_err(|source| DatasetError::Io {
            path: "<writer>".into(),
            source,
        })?;
        Ok(())
    }
}

fn is_missing(raw: &str) -> bool {
    matches!(raw, "" | "NA" | "N/A" | "NaN" | "nan" | "null" | "?")
}

/// Reads a comma-separated file with a header row.
///
/// Columns named in `categorical_columns` are categorical, the label column is
/// mapped to `{0,1}`, and every other column is numeric. Without
/// `positive_label` the lexicographically larger raw label is class 1.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    categorical_columns: &[String],
    positive_label: Option<&str>,
) -> Result<TabularDataset, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, label_column, categorical_columns, positive_label)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: Read>(
    reader: R,
    label_column: &str,
    categorical_columns: &[String],
    positive_label: Option<&str>,
) -> Result<TabularDataset, DatasetError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = csv_reader.headers()?.iter().map(str::to_owned).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(DatasetError::MissingHeader);
    }
    let label_index = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DatasetError::MissingLabelColumn(label_column.to_owned()))?;
    for name in categorical_columns {
        if !header.contains(name) {
            return Err(DatasetError::UnknownColumn(name.clone()));
        }
    }
    let categorical: HashSet<&str> = categorical_columns.iter().map(String::as_str).collect();
    let columns: Vec<Column> = header
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let kind = if i == label_index {
                ColumnKind::Label
            } else if categorical.contains(name.as_str()) {
                ColumnKind::Categorical
            } else {
                ColumnKind::Numeric
            };
            Column::new(name.clone(), kind)
        })
        .collect();

    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    for record in csv_reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != columns.len() {
            return Err(DatasetError::RaggedRow {
                line,
                expected: columns.len(),
                found: record.len(),
            });
        }
        let mut row = Vec::with_capacity(columns.len());
        for (raw, column) in record.iter().zip(&columns) {
            let value = match column.kind {
                ColumnKind::Label => {
                    if is_missing(raw) {
                        return Err(DatasetError::MissingLabel { line });
                    }
                    raw_labels.push(raw.to_owned());
                    // placeholder until both label values are known
                    Value::Label(0)
                }
                _ if is_missing(raw) => Value::Missing,
                ColumnKind::Categorical => Value::Category(raw.to_owned()),
                ColumnKind::Numeric => match raw.parse::<f64>() {
                    Ok(x) if x.is_finite() => Value::Number(x),
                    _ => {
                        return Err(DatasetError::InvalidNumber {
                            column: column.name.clone(),
                            value: raw.to_owned(),
                            line,
                        })
                    }
                },
            };
            row.push(value);
        }
        rows.push(row);
    }

    let distinct: BTreeSet<&str> = raw_labels.iter().map(String::as_str).collect();
    if distinct.len() != 2 {
        return Err(DatasetError::NonBinaryLabel {
            column: label_column.to_owned(),
            distinct: distinct.len(),
        });
    }
    let positive = match positive_label {
        Some(p) if distinct.contains(p) => p.to_owned(),
        Some(p) => return Err(DatasetError::UnknownPositiveLabel(p.to_owned())),
        None => (*distinct.iter().next_back().expect("two values")).to_owned(),
    };
    for (row, raw) in rows.iter_mut().zip(&raw_labels) {
        row[label_index] = Value::Label(u8::from(*raw == positive));
    }
    TabularDataset::new(columns, rows)
}

/// Numeric feature matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset<T> {
    pub features: Array2<T>,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
}

impl<T: Scalar> EncodedDataset<T> {
    pub fn new(
        features: Array2<T>,
        labels: Vec<u8>,
        feature_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        if features.nrows() != labels.len() {
            return Err(DatasetError::Invalid(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.ncols() != feature_names.len() {
            return Err(DatasetError::Invalid(format!(
                "{} feature columns but {} names",
                features.ncols(),
                feature_names.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(DatasetError::Invalid("labels must be 0 or 1".into()));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(DatasetError::Invalid("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn slice_rows(&self, range: Range<usize>) -> Self {
        let indices: Vec<usize> = range.collect();
        self.select_rows(&indices)
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.contains(&0) && self.labels.contains(&1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset<T> {
    pub train: EncodedDataset<T>,
    pub validation: EncodedDataset<T>,
}

#[derive(Debug, Clone, PartialEq)]
enum ColumnEncoding {
    /// `std == None` marks a constant column, encoded as 0.
    Numeric {
        column: usize,
        mean: f64,
        std: Option<f64>,
    },
    Categorical {
        column: usize,
        levels: Vec<String>,
    },
}

/// Encoding parameters fitted on a row range: standardization statistics for
/// numeric columns and the level set of each categorical column.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    encodings: Vec<ColumnEncoding>,
    feature_names: Vec<String>,
}

impl Encoder {
    pub fn fit(data: &TabularDataset, fit_on: Range<usize>) -> Result<Self, DatasetError> {
        if fit_on.is_empty() {
            return Err(DatasetError::EmptyFitRange);
        }
        if fit_on.end > data.n_rows() {
            return Err(DatasetError::Invalid(format!(
                "fit range {fit_on:?} exceeds {} rows",
                data.n_rows()
            )));
        }
        let rows = &data.rows[fit_on];
        let mut encodings = Vec::new();
        let mut feature_names = Vec::new();
        for (c, column) in data.columns.iter().enumerate() {
            match column.kind {
                ColumnKind::Label => {}
                ColumnKind::Numeric => {
                    let values: Vec<f64> = rows
                        .iter()
                        .filter_map(|row| match row[c] {
                            Value::Number(x) => Some(x),
                            _ => None,
                        })
                        .collect();
                    let (mean, std) = if values.is_empty() {
                        (0.0, None)
                    } else {
                        let n = values.len() as f64;
                        let mean = values.iter().sum::<f64>() / n;
                        let constant = values.iter().all(|&x| x == values[0]);
                        if constant {
                            (mean, None)
                        } else {
                            let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                            (mean, Some(var.sqrt()))
                        }
                    };
                    encodings.push(ColumnEncoding::Numeric { column: c, mean, std });
                    feature_names.push(column.name.clone());
                }
                ColumnKind::Categorical => {
                    let levels: BTreeSet<&str> = rows
                        .iter()
                        .filter_map(|row| match &row[c] {
                            Value::Category(s) => Some(s.as_str()),
                            _ => None,
                        })
                        .collect();
                    let levels: Vec<String> = levels.into_iter().map(str::to_owned).collect();
                    feature_names.extend(levels.iter().map(|l| format!("{}={l}", column.name)));
                    encodings.push(ColumnEncoding::Categorical { column: c, levels });
                }
            }
        }
        Ok(Self {
            encodings,
            feature_names,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Encodes every row of `data` with the fitted parameters.
    pub fn transform<T: Scalar>(&self, data: &TabularDataset) -> EncodedDataset<T> {
        let n = data.n_rows();
        let mut features = Array2::<T>::zeros((n, self.n_features()));
        for (r, row) in data.rows.iter().enumerate() {
            let mut offset = 0;
            for encoding in &self.encodings {
                match encoding {
                    ColumnEncoding::Numeric { column, mean, std } => {
                        let z = match (&row[*column], std) {
                            (Value::Number(x), Some(s)) => (x - mean) / s,
                            _ => 0.0,
                        };
                        features[[r, offset]] = T::of(z);
                        offset += 1;
                    }
                    ColumnEncoding::Categorical { column, levels } => {
                        if let Value::Category(s) = &row[*column] {
                            if let Ok(k) = levels.binary_search(s) {
                                features[[r, offset + k]] = T::one();
                            }
                        }
                        offset += levels.len();
                    }
                }
            }
        }
        EncodedDataset {
            features,
            labels: data.labels(),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Fits the encoder on `fit_on` and encodes all rows.
pub fn preprocess<T: Scalar>(
    data: &TabularDataset,
    fit_on: Range<usize>,
) -> Result<EncodedDataset<T>, DatasetError> {
    Ok(Encoder::fit(data, fit_on)?.transform(data))
}

/// Number of training rows in a half split of `n` rows.
pub fn train_len(n: usize) -> usize {
    n.div_ceil(2)
}

/// First `ceil(N/2)` rows train, the remainder validate. No shuffling.
pub fn split_half<T: Scalar>(data: &EncodedDataset<T>) -> Result<SplitDataset<T>, DatasetError> {
    let n = data.n_rows();
    if n < 2 {
        return Err(DatasetError::TooFewRows(n));
    }
    let cut = train_len(n);
    Ok(SplitDataset {
        train: data.slice_rows(0..cut),
        validation: data.slice_rows(cut..n),
    })
}

/// Preprocesses with statistics from the training half only, then splits.
pub fn prepare<T: Scalar>(data: &TabularDataset) -> Result<SplitDataset<T>, DatasetError> {
    let encoded = preprocess(data, 0..train_len(data.n_rows()))?;
    split_half(&encoded)
}

/// Draws `floor(p * N)` rows uniformly without replacement. The result keeps
/// the original row order and depends only on `(data, p, seed)`.
pub fn subsample<T: Scalar>(
    data: &EncodedDataset<T>,
    p: f64,
    seed: u64,
) -> Result<EncodedDataset<T>, DatasetError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(DatasetError::ProportionOutOfRange(p));
    }
    let n = data.n_rows();
    let k = (p * n as f64).floor() as usize;
    if k == 0 {
        return Err(DatasetError::EmptySample { p, n });
    }
    if k >= n {
        return Ok(data.clone());
    }
    let mut rng = seeding::rng_from(seed);
    let mut indices = rand::seq::index::sample(&mut rng, n, k).into_vec();
    indices.sort_unstable();
    Ok(data.select_rows(&indices))
}
