use std::path::Path;
use std::process::{Command, Output};

fn forest_tune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forest-tune"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: serde_json::Value) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path.display().to_string()
}

fn small() -> serde_json::Value {
    serde_json::json!({
        "dataset": {"synthetic": {"n_rows": 200, "n_numeric": 3, "n_categorical": 1}},
        "runs": 2,
        "n_init": 2,
        "iterations": 1,
        "space": {"n_trees": [1, 12], "max_depth": [1, 6], "train_proportion": [0.3, 1.0]},
        "stability": {"n_trees": [2, 6], "runs": 3},
        "sweep": {"n_trees": [2, 4], "max_depth": [2, 3], "repetitions": 2}
    })
}

#[test]
fn generate_writes_a_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), small());
    let out = dir.path().join("gen");
    let status = forest_tune(&["generate", "--config", &config, "--seed", "1", "--out", out.to_str().unwrap()]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let text = std::fs::read_to_string(out.join("synthetic.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x0,x1,x2,c0,label");
    assert_eq!(text.lines().count(), 201);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), small());
    // No seed anywhere.
    assert_eq!(forest_tune(&["sweep", "--config", &config]).status.code(), Some(2));
    let bad = write_config(dir.path(), serde_json::json!({"seed": 1, "iterations": 3, "bogus": true}));
    assert_eq!(forest_tune(&["tune", "--config", &bad]).status.code(), Some(2));
    assert_eq!(
        forest_tune(&["tune", "--config", "/nonexistent.json", "--seed", "1"]).status.code(),
        Some(2)
    );
}

#[test]
fn data_and_evaluation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = write_config(
        dir.path(),
        serde_json::json!({"seed": 1, "dataset": {"csv": {"path": "/nonexistent.csv", "label_column": "y"}}}),
    );
    assert_eq!(forest_tune(&["tune", "--config", &missing]).status.code(), Some(3));

    let csv = dir.path().join("one_class_tail.csv");
    let mut text = String::from("x,y\n");
    for i in 0..20 {
        text.push_str(&format!("{i},{}\n", u8::from(i < 10 && i % 2 == 0)));
    }
    std::fs::write(&csv, text).unwrap();
    let mut body = small();
    body["dataset"] = serde_json::json!({"csv": {"path": csv, "label_column": "y"}});
    let config = write_config(dir.path(), body);
    let out = dir.path().join("out");
    let run = forest_tune(&["tune", "--config", &config, "--seed", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(4));
    assert!(out.join("report.json").is_file());
}

#[test]
fn tune_and_stability_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), small());
    let out = dir.path().join("tune");
    let run = forest_tune(&["tune", "--config", &config, "--seed", "3", "--cost-mode", "model", "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("kind,alpha,beta,gamma,n_trees,max_depth,train_proportion,auc,rmspd,runtime,loss"));
    assert!(report.lines().nth(1).unwrap().starts_with("baseline,1,1,0.01,10,unlimited,1,"));
    assert!(out.join("trace_0.json").is_file());

    let out = dir.path().join("stability");
    let run = forest_tune(&["stability", "--config", &config, "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(run.status.success());
    assert!(out.join("histogram_2.csv").is_file() && out.join("histogram_6.csv").is_file());
}

#[test]
fn model_mode_sweeps_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), small());
    let sweep = |name: &str| {
        let out = dir.path().join(name);
        let run = forest_tune(&["sweep", "--config", &config, "--seed", "8", "--cost-mode", "model", "--out", out.to_str().unwrap()]);
        assert!(run.status.success());
        ["heatmap_auc.csv", "heatmap_rmspd.csv", "heatmap_runtime.csv", "heatmap_loss_0.csv", "report.csv", "report.json"]
            .map(|f| std::fs::read(out.join(f)).unwrap())
    };
    assert_eq!(sweep("a"), sweep("b"));
}
