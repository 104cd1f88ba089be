use forest_tuning::dataset::prepare;
use forest_tuning::forest::{predict_proba, train_forest, ForestParams};
use forest_tuning::harness::{
    cmd_stability, cmd_sweep, cmd_tune, generate_synthetic, run_stability, run_sweep, run_tune, CsvSource,
    DatasetSource, HarnessError, RunConfig, SweepSettings, SyntheticSpec, TuneReport, HISTOGRAM_BINS,
};
use forest_tuning::metrics::auc;
use forest_tuning::objective::{CostMode, LossWeights};

fn validation_auc(spec: &SyntheticSpec) -> f64 {
    let data = prepare::<f64>(&generate_synthetic(spec).unwrap()).unwrap();
    let forest = train_forest(&data.train, &ForestParams::new(50, Some(8), 1.0), 1).unwrap();
    let p = predict_proba(&forest, &data.validation.features).unwrap();
    auc(&p, &data.validation.labels).unwrap()
}

#[test]
fn synthetic_signal_strength_controls_separability() {
    let noise = SyntheticSpec {
        n_rows: 2000,
        signal_strength: 0.0,
        ..SyntheticSpec::default()
    };
    let a = validation_auc(&noise);
    assert!((0.4..=0.6).contains(&a), "{a}");
    let strong = SyntheticSpec {
        signal_strength: 25.0,
        ..noise
    };
    let a = validation_auc(&strong);
    assert!(a >= 0.95, "{a}");
}

fn small_config(seed: u64) -> RunConfig {
    let mut config = RunConfig::with_seed(seed);
    config.cost_mode = CostMode::Deterministic;
    config.dataset = DatasetSource::Synthetic(SyntheticSpec {
        n_rows: 400,
        ..SyntheticSpec::default()
    });
    config
}

#[test]
fn stability_histograms_on_the_bundled_dataset() {
    let config = RunConfig::with_seed(5);
    let data = config.load_data().unwrap();
    let rows = run_stability(&config, &data).unwrap();
    let n = data.validation.n_rows() as u64;
    assert!(n >= 2000);
    assert_eq!(rows.iter().map(|r| r.n_trees).collect::<Vec<_>>(), vec![8, 32, 128]);
    for row in &rows {
        assert_eq!(row.histogram.counts.len(), HISTOGRAM_BINS);
        assert_eq!(row.histogram.total(), n * 10 * 9 / 2);
        assert_eq!(row.n_deltas as u64, row.histogram.total());
        assert!(row.mean_delta.abs() <= 0.01, "{}", row.mean_delta);
        assert!(row.mspd <= row.upper_bound);
    }
    assert!(rows[0].rmspd > rows[1].rmspd && rows[1].rmspd > rows[2].rmspd);
}

#[test]
fn shared_seed_stability_has_only_zero_deltas() {
    let mut config = small_config(1);
    config.stability.shared_seed = true;
    config.stability.n_trees = vec![4];
    config.stability.runs = 3;
    let rows = run_stability(&config, &config.load_data().unwrap()).unwrap();
    let h = &rows[0].histogram;
    assert_eq!(rows[0].rmspd, 0.0);
    assert_eq!(h.counts[HISTOGRAM_BINS / 2], h.total());
}

#[test]
fn sweep_loss_optimum_differs_from_auc_optimum() {
    let mut config = RunConfig::with_seed(0);
    let data = config.load_data().unwrap();
    let mut differ = 0;
    let mut runtime_rises = 0;
    for seed in 0..10 {
        config.seed = Some(seed);
        let grid = run_sweep(&config, &data).unwrap();
        assert_eq!(grid.failed(), 0);
        if grid.argmin_loss(0) != grid.argmax_auc() {
            differ += 1;
        }
        let means: Vec<f64> = (0..grid.n_trees.len())
            .map(|i| {
                (0..grid.max_depth.len())
                    .map(|j| grid.cell(i, j).result.as_ref().unwrap().runtime_seconds)
                    .sum::<f64>()
            })
            .collect();
        if means.windows(2).all(|w| w[1] > w[0]) {
            runtime_rises += 1;
        }
    }
    assert!(differ >= 7, "{differ}/10");
    assert!(runtime_rises >= 9, "{runtime_rises}/10");
}

#[test]
fn one_cell_sweep_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(3);
    config.output_dir = dir.path().to_path_buf();
    config.weights.push(LossWeights::new(1.0, 5.0, 0.0).unwrap());
    config.sweep = SweepSettings {
        n_trees: vec![6],
        max_depth: vec![3],
        ..SweepSettings::default()
    };
    let grid = cmd_sweep(&config).unwrap();
    assert_eq!(grid.cells.len(), 1);
    assert_eq!(grid.argmin_loss(0), Some((6, 3)));
    assert_eq!(grid.argmin_loss(1), Some((6, 3)));
    for name in [
        "heatmap_auc.csv",
        "heatmap_rmspd.csv",
        "heatmap_runtime.csv",
        "heatmap_loss_0.csv",
        "heatmap_loss_1.csv",
        "report.csv",
        "report.json",
    ] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let heatmap = std::fs::read_to_string(dir.path().join("heatmap_auc.csv")).unwrap();
    assert_eq!(heatmap.lines().next().unwrap(), "n_trees,depth_3");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["argmin_loss"][1]["n_trees"], 6);
}

#[test]
fn stability_outputs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(2);
    config.output_dir = dir.path().to_path_buf();
    config.stability.n_trees = vec![2, 5];
    config.stability.runs = 3;
    cmd_stability(&config).unwrap();
    let histogram = std::fs::read_to_string(dir.path().join("histogram_5.csv")).unwrap();
    assert_eq!(histogram.lines().count(), HISTOGRAM_BINS + 1);
    assert!(dir.path().join("histogram_2.csv").is_file());
    assert!(dir.path().join("report.json").is_file());
}

fn check_row_losses(report: &TuneReport) {
    for row in &report.rows {
        let w = LossWeights::new(row.alpha, row.beta, row.gamma).unwrap();
        let expected = w.beta * row.rmspd + w.gamma * row.runtime - w.alpha * row.auc;
        assert!((row.loss - expected).abs() <= 1e-9);
    }
}

#[test]
fn zero_iterations_report_the_best_initial_point() {
    let mut config = small_config(4);
    config.iterations = 0;
    config.n_init = 4;
    let data = config.load_data().unwrap();
    let mut report = TuneReport::new(&config).unwrap();
    run_tune(&config, &data, &mut report).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.baseline().unwrap().n_trees, 10);
    assert_eq!(report.baseline().unwrap().max_depth, None);
    let trace = &report.traces[0];
    assert_eq!(trace.len(), 4);
    let best = trace.iter().map(|e| e.observation.value).fold(f64::INFINITY, f64::min);
    let tuned = report.tuned().next().unwrap();
    assert_eq!(tuned.loss, best);
    check_row_losses(&report);
}

#[test]
fn tune_reports_are_byte_identical_in_model_mode() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config(6);
        config.output_dir = dir.path().to_path_buf();
        config.n_init = 3;
        config.iterations = 2;
        config.weights.push(LossWeights::new(1.0, 5.0, 0.0).unwrap());
        let report = cmd_tune(&config).unwrap();
        check_row_losses(&report);
        assert_eq!(report.rows.len(), 3);
        ["report.csv", "report.json", "trace_0.json", "trace_1.json"]
            .map(|f| std::fs::read(dir.path().join(f)).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn tune_failure_saves_the_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    // Every validation label (second half) is the same class.
    let mut csv = String::from("x,y\n");
    for i in 0..20 {
        csv.push_str(&format!("{i},{}\n", u8::from(i < 10 && i % 2 == 0)));
    }
    let path = dir.path().join("data.csv");
    std::fs::write(&path, csv).unwrap();
    let mut config = small_config(1);
    config.output_dir = dir.path().join("out");
    config.dataset = DatasetSource::Csv(CsvSource {
        path,
        label_column: "y".into(),
        categorical_columns: Vec::new(),
        positive_label: None,
    });
    let err = cmd_tune(&config).unwrap_err();
    assert!(matches!(err, HarnessError::Evaluation(_)), "{err}");
    assert_eq!(err.exit_code(), 4);
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(config.output_dir.join("report.json")).unwrap()).unwrap();
    assert!(saved["error"].as_str().unwrap().contains("class"));
}

#[test]
fn missing_csv_is_a_data_error() {
    let mut config = small_config(1);
    config.dataset = DatasetSource::Csv(CsvSource {
        path: "/nonexistent/data.csv".into(),
        label_column: "y".into(),
        categorical_columns: Vec::new(),
        positive_label: None,
    });
    assert_eq!(config.load_data().unwrap_err().exit_code(), 3);
}
