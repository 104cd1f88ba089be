use std::path::PathBuf;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{RunConfig, SyntheticSpec};
use super::output::{ensure_dir, write_text};
use super::HarnessError;
use crate::dataset::{Column, ColumnKind, DatasetError, TabularDataset, Value};
use crate::seeding::{self, tags};

const MAX_RETRIES: usize = 100;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Draws a labelled table: standard-normal numeric columns, uniform
/// categorical columns, and labels from a logistic model on a random subset
/// of the features. `signal_strength` scales the logit, so 0 gives labels
/// independent of the features. Deterministic per `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TabularDataset, HarnessError> {
    let n_features = spec.n_numeric + spec.n_categorical;
    if spec.n_rows < 20 {
        return Err(HarnessError::Config(format!(
            "synthetic n_rows must be at least 20, got {}",
            spec.n_rows
        )));
    }
    if n_features == 0 || (spec.n_categorical > 0 && spec.categories < 2) {
        return Err(HarnessError::Config(
            "synthetic data needs a feature and at least 2 levels per categorical".into(),
        ));
    }
    let mut rng = seeding::rng_from(seeding::derive(spec.seed, &[tags::SYNTHETIC]));

    let n_informative = n_features.div_ceil(2);
    let informative = index::sample(&mut rng, n_features, n_informative).into_vec();
    let mut numeric_weight = vec![0.0; spec.n_numeric];
    let mut level_effect = vec![Vec::new(); spec.n_categorical];
    for &f in &informative {
        if f < spec.n_numeric {
            numeric_weight[f] = StandardNormal.sample(&mut rng);
        } else {
            let effects: Vec<f64> = (0..spec.categories).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mean = effects.iter().sum::<f64>() / effects.len() as f64;
            level_effect[f - spec.n_numeric] = effects.iter().map(|e| e - mean).collect();
        }
    }
    let scale = {
        let ss: f64 = numeric_weight.iter().map(|w| w * w).sum::<f64>()
            + level_effect
                .iter()
                .filter(|e| !e.is_empty())
                .map(|e| e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64)
                .sum::<f64>();
        if ss > 0.0 {
            ss.sqrt()
        } else {
            1.0
        }
    };

    let mut rows = Vec::with_capacity(spec.n_rows);
    let mut logits = Vec::with_capacity(spec.n_rows);
    for _ in 0..spec.n_rows {
        let mut row = Vec::with_capacity(n_features + 1);
        let mut z = 0.0;
        for w in &numeric_weight {
            let x: f64 = StandardNormal.sample(&mut rng);
            z += w * x;
            row.push(Value::Number(x));
        }
        for effects in &level_effect {
            let level = rng.random_range(0..spec.categories);
            if !effects.is_empty() {
                z += effects[level];
            }
            row.push(Value::Category(format!("L{level}")));
        }
        logits.push(spec.signal_strength * z / scale);
        rows.push(row);
    }

    // Shift the threshold towards the median logit until both classes occur.
    let mut sorted = logits.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let mut labels = Vec::new();
    let mut balanced = false;
    for attempt in 0..=MAX_RETRIES {
        let shift = median * attempt as f64 / MAX_RETRIES as f64;
        labels = logits
            .iter()
            .map(|&z| u8::from(rng.random::<f64>() < sigmoid(z - shift)))
            .collect::<Vec<u8>>();
        let positives = labels.iter().filter(|&&l| l == 1).count();
        if positives > 0 && positives < labels.len() {
            balanced = true;
            break;
        }
    }
    if !balanced {
        return Err(DatasetError::Invalid(format!(
            "could not draw both classes after {MAX_RETRIES} retries"
        ))
        .into());
    }
    for (row, label) in rows.iter_mut().zip(labels) {
        row.push(Value::Label(label));
    }

    let mut columns: Vec<Column> = (0..spec.n_numeric)
        .map(|i| Column::new(format!("x{i}"), ColumnKind::Numeric))
        .collect();
    columns.extend((0..spec.n_categorical).map(|i| Column::new(format!("c{i}"), ColumnKind::Categorical)));
    columns.push(Column::new("label", ColumnKind::Label));
    Ok(TabularDataset::new(columns, rows)?)
}

/// Writes the configured synthetic dataset to `<output_dir>/synthetic.csv`.
pub fn cmd_generate(config: &RunConfig) -> Result<PathBuf, HarnessError> {
    let spec = match &config.dataset {
        super::DatasetSource::Synthetic(spec) => spec.clone(),
        super::DatasetSource::Csv(_) => {
            return Err(HarnessError::Config("`generate` needs a synthetic dataset spec".into()))
        }
    };
    let table = generate_synthetic(&spec)?;
    ensure_dir(&config.output_dir)?;
    let path = config.output_dir.join("synthetic.csv");
    let mut buffer = Vec::new();
    table.write_csv(&mut buffer)?;
    write_text(&path, &String::from_utf8(buffer).expect("csv output is utf-8"))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n_rows: usize, signal_strength: f64) -> SyntheticSpec {
        SyntheticSpec {
            n_rows,
            signal_strength,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic(&spec(100, 2.0)).unwrap();
        let b = generate_synthetic(&spec(100, 2.0)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SyntheticSpec { seed: 1, ..spec(100, 2.0) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn layout_and_both_classes() {
        let table = generate_synthetic(&spec(20, 50.0)).unwrap();
        assert_eq!(table.n_rows(), 20);
        assert_eq!(table.columns().len(), 8 + 2 + 1);
        assert_eq!(table.label_column().name, "label");
        let labels = table.labels();
        assert!(labels.contains(&0) && labels.contains(&1));
    }

    #[test]
    fn rejects_tiny_tables() {
        assert!(matches!(generate_synthetic(&spec(19, 1.0)), Err(HarnessError::Config(_))));
    }
}
