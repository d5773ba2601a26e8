use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tsdag::export::read_matrix_csv;
use tsdag::sim::{generate_cluster_var, SimDesign, SimTruth, Structure};
use tsdag::tuning::lambda_grid;

fn tsdag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsdag"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn tsdag")
}

fn write_panel(dir: &Path, structure: Structure, n_clusters: usize, seed: u64) -> (PathBuf, SimTruth) {
    let (panel, truth) = generate_cluster_var(&SimDesign {
        structure,
        a: 0.25,
        n_clusters,
        n: 5000,
        seed,
    })
    .unwrap();
    let path = dir.join(format!("{}.csv", structure.label()));
    let mut buf = Vec::new();
    panel.write_csv(&mut buf).unwrap();
    fs::write(&path, buf).unwrap();
    (path, truth)
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_input_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = tsdag(&["estimate", "--input", "/nonexistent/data.csv", "--lambda", "0.1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn invalid_alpha_and_lag_order_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, _) = write_panel(tmp.path(), Structure::VStructure, 1, 1);
    let data = data.to_str().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let o = tsdag(&["dag", "--input", data, "--lambda", "0.1", "--alpha", "0", "--out", out]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = tsdag(&["estimate", "--input", data, "--lambda", "0.1", "--lags", "0", "--out", out]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn irf_without_a_model_asks_for_dag() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = tsdag(&["irf", "--shock", "x1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("run dag first"), "{}", stderr(&o));
}

#[test]
fn chain_is_not_identified() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, _) = write_panel(tmp.path(), Structure::Chain, 1, 2);
    let out = tmp.path().join("out");
    let o = tsdag(&["dag", "--input", data.to_str().unwrap(), "--cv", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!out.join("model.json").exists());
    assert!(!out.join("d_hat.csv").exists());
    let m = manifest(&out);
    assert_eq!(m["parameters"]["identified"], Value::Bool(false));
    assert_eq!(m["parameters"]["undirected_edges"], Value::from(2));
    assert!(!m["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn v_structure_yields_a_model() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, _) = write_panel(tmp.path(), Structure::VStructure, 1, 3);
    let out = tmp.path().join("out");
    let o = tsdag(&["dag", "--input", data.to_str().unwrap(), "--cv", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("model.json").exists());
    assert!(out.join("d_hat.csv").exists());
    let m = manifest(&out);
    assert_eq!(m["parameters"]["identified"], Value::Bool(true));
    let order: Vec<&str> = m["parameters"]["causal_order"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(order.last(), Some(&"x3"));

    let lin = tmp.path().join("irf");
    let model = out.join("model.json");
    let o = tsdag(&[
        "irf",
        "--model",
        model.to_str().unwrap(),
        "--shock",
        "x1",
        "--mode",
        "linearized",
        "--out",
        lin.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(lin.join("irf.csv").exists());
}

#[test]
fn cross_validated_support_matches_the_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, truth) = write_panel(tmp.path(), Structure::VStructure, 2, 4);
    let out = tmp.path().join("out");
    let o = tsdag(&["estimate", "--input", data.to_str().unwrap(), "--cv", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, _, theta) = read_matrix_csv(fs::File::open(out.join("theta.csv")).unwrap()).unwrap();
    let k = truth.theta11_true.nrows();
    for i in 0..k {
        for j in 0..k {
            assert_eq!(
                theta[(i, j)] != 0.0,
                truth.theta11_true[(i, j)].abs() > 1e-10,
                "entry ({i}, {j}): {} vs {}",
                theta[(i, j)],
                truth.theta11_true[(i, j)]
            );
        }
    }
}

#[test]
fn cv_reports_the_halving_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, _) = write_panel(tmp.path(), Structure::VStructure, 1, 5);
    let out = tmp.path().join("out");
    let o = tsdag(&["cv", "--input", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    let saved: Value = serde_json::from_str(&fs::read_to_string(out.join("cv.json")).unwrap()).unwrap();
    assert_eq!(printed, saved);
    let lambda0 = saved["lambda0"].as_f64().unwrap();
    let grid: Vec<f64> = saved["grid"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(grid, lambda_grid(lambda0));
    assert!(grid.contains(&saved["lambda"].as_f64().unwrap()));
}

#[test]
fn cv_rejects_explicit_penalty() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, _) = write_panel(tmp.path(), Structure::VStructure, 1, 6);
    let out = tmp.path().join("out");
    let o = tsdag(&["cv", "--input", data.to_str().unwrap(), "--lambda", "0.1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
