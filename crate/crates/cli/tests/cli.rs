use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dda_cli::config::ExperimentConfig;
use dda_core::linalg::norm;

fn dda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dda")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const QUADRATIC: &str = r#"{
    "seed": 5,
    "rounds": 10,
    "problem": {"family": "quadratic", "params": {"agents": 4, "dim": 6, "modulus": 0.2}, "regularizer": {"kind": "l1", "weight": 0.01}},
    "network": {"kind": "gossip", "graph": {"type": "cycle", "nodes": 4}},
    "algorithms": [
        {"name": "dda", "step": {"abar_factor": 0.5}},
        {"name": "cdda"},
        {"name": "pg_extra", "step": 0.1},
        {"name": "p2d2", "step": 0.1},
        {"name": "dsm"}
    ]
}"#;

fn run_smoke(dir: &Path, out: &str) -> Output {
    let cfg = write_config(dir, "smoke.json", QUADRATIC);
    dda(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.join(out).to_str().unwrap()])
}

#[test]
fn run_writes_one_csv_per_method_with_all_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_smoke(dir.path(), "out");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["dda", "cdda", "pg_extra", "p2d2", "dsm"] {
        let text = fs::read_to_string(dir.path().join("out").join(format!("{name}.csv"))).unwrap();
        assert!(!text.contains('\r'));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "t,rse,obj_gap_ybar,obj_gap_mean_x,consensus_residual_s,consensus_residual_z,lemma5_slack,bound_margin_thm2,bound_margin_cor1"
        );
        assert_eq!(lines.len(), 1 + 11, "{name}");
        assert!(lines[1].starts_with("0,1,"), "{}", lines[1]);
        assert!(lines[11].starts_with("10,"));
    }
    let dsm = fs::read_to_string(dir.path().join("out/dsm.csv")).unwrap();
    assert!(dsm.lines().nth(5).unwrap().ends_with("NaN,NaN"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["algorithms"].as_array().unwrap().len(), 5);
    assert_eq!(summary["algorithms"][0]["status"], "ok");
    assert_eq!(summary["reference_cache"], "computed");
    assert!(summary["report"]["abar"]["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn reruns_produce_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_smoke(dir.path(), "a").status.code(), Some(0));
    assert_eq!(run_smoke(dir.path(), "b").status.code(), Some(0));
    for name in ["dda", "cdda", "pg_extra", "p2d2", "dsm"] {
        let a = fs::read(dir.path().join("a").join(format!("{name}.csv"))).unwrap();
        let b = fs::read(dir.path().join("b").join(format!("{name}.csv"))).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "smoke.json", QUADRATIC);
    let out = dir.path().join("o");
    let o = dda(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--algos",
        "dda,dsm",
        "--T",
        "7",
        "--seed",
        "9",
        "--svg",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!out.join("cdda.csv").exists());
    assert_eq!(fs::read_to_string(out.join("dsm.csv")).unwrap().lines().count(), 1 + 8);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 9);
    assert!(fs::read_to_string(out.join("rse.svg")).unwrap().contains("<polyline"));
}

#[test]
fn check_reports_a_contracting_gossip_network() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
        "problem": {"family": "logistic", "data": {"source": "synthetic", "agents": 10, "samples_per_agent": 20, "dim": 8}, "mu": 0.1, "phi": 0.01},
        "network": {"kind": "gossip", "graph": {"type": "cycle", "nodes": 10}}
    }"#;
    let cfg = write_config(dir.path(), "check.json", body);
    let o = dda(&["check", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let value = |key: &str| -> String {
        text.lines().find_map(|l| l.strip_prefix(&format!("{key}: "))).unwrap_or_else(|| panic!("{key} missing")).to_string()
    };
    let beta: f64 = value("beta").parse().unwrap();
    let abar: f64 = value("abar").parse().unwrap();
    assert!(beta > 0.0 && beta < 1.0 && abar > 0.0);
    assert_eq!(value("step_grid").split(", ").count(), 3);
    assert_eq!(value("cond16"), "true");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/report.json")).unwrap()).unwrap();
    assert!((report["beta"].as_f64().unwrap() - beta).abs() <= 1e-12);
}

#[test]
fn check_flags_a_disconnected_graph() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("split.edges"), "0 1\n2 3\n").unwrap();
    let body = r#"{
        "problem": {"family": "quadratic", "params": {"agents": 4, "dim": 3}},
        "network": {"kind": "gossip", "graph": {"type": "file", "path": "split.edges"}}
    }"#;
    let cfg = write_config(dir.path(), "split.json", body);
    let o = dda(&["check", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let text = stdout(&o);
    let beta: f64 = text.lines().find_map(|l| l.strip_prefix("beta: ")).unwrap().parse().unwrap();
    assert!((beta - 1.0).abs() < 1e-9);
    assert!(text.contains("abar: undefined"));
}

#[test]
fn check_on_complete_averaging_gives_zero_beta() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("avg.txt"), "0.25 0.25 0.25 0.25\n".repeat(4)).unwrap();
    let body = r#"{
        "problem": {"family": "quadratic", "params": {"agents": 4, "dim": 3}},
        "network": {"kind": "matrix", "path": "avg.txt"}
    }"#;
    let cfg = write_config(dir.path(), "avg.json", body);
    let o = dda(&["check", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let beta: f64 = stdout(&o).lines().find_map(|l| l.strip_prefix("beta: ")).unwrap().parse().unwrap();
    assert!(beta.abs() < 1e-12);
}

#[test]
fn reference_is_cached_and_stationary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "smoke.json", QUADRATIC);
    let out = dir.path().join("o");
    let args = ["reference", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let first = dda(&args);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    assert!(stdout(&first).contains("cache: computed"));
    let bytes = fs::read(out.join("reference.json")).unwrap();
    let second = dda(&args);
    assert!(stdout(&second).contains("cache: hit"));
    assert_eq!(fs::read(out.join("reference.json")).unwrap(), bytes);

    // x* is a fixed point of the proximal gradient map
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let inst = cfg.build_instance().unwrap();
    let artifact: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    let x: Vec<f64> = serde_json::from_value(artifact["reference"]["solution"].clone()).unwrap();
    let step = 1.0 / inst.smoothness();
    let g = inst.smooth_gradient(&x).unwrap();
    let v: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
    let moved: Vec<f64> = inst.regularizer().prox(&v, step).iter().zip(&x).map(|(a, b)| a - b).collect();
    assert!(norm(&moved) <= 1e-12);
}

#[test]
fn looser_reference_tolerance_stops_earlier() {
    let dir = tempfile::tempdir().unwrap();
    let loose_body = QUADRATIC.replacen("\"seed\": 5,", "\"seed\": 5, \"reference\": {\"tol\": 1e-6},", 1);
    let tight = write_config(dir.path(), "tight.json", QUADRATIC);
    let loose = write_config(dir.path(), "loose.json", &loose_body);
    let field = |o: &Output, key: &str| -> f64 {
        stdout(o).lines().find_map(|l| l.strip_prefix(&format!("{key}: "))).unwrap().parse().unwrap()
    };
    let a = dda(&["reference", "--config", tight.to_str().unwrap(), "--out", dir.path().join("t").to_str().unwrap()]);
    let b = dda(&["reference", "--config", loose.to_str().unwrap(), "--out", dir.path().join("l").to_str().unwrap()]);
    assert!(field(&b, "iterations") < field(&a, "iterations"));
    assert!(field(&b, "residual") > field(&a, "residual"));
}

#[test]
fn dsm_on_a_constrained_problem_is_a_precondition_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
        "rounds": 5,
        "problem": {"family": "lasso", "params": {"agents": 4, "rows_per_agent": 10, "dim": 6}},
        "network": {"kind": "fixed", "graph": {"type": "cycle", "nodes": 4}},
        "algorithms": [{"name": "dsm"}]
    }"#;
    let cfg = write_config(dir.path(), "lasso.json", body);
    let o = dda(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("DSM inapplicable to constrained problems"));
}

#[test]
fn oversized_dual_averaging_step_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let body = QUADRATIC.replace("{\"abar_factor\": 0.5}", "20.0");
    let cfg = write_config(dir.path(), "big.json", &body);
    let o = dda(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "typo.json", &QUADRATIC.replace("\"rounds\"", "\"rouns\""));
    let o = dda(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rouns"));
    let missing = dda(&["check", "--config", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
    let bad_algo = dda(&["run", "--config", write_config(dir.path(), "ok.json", QUADRATIC).to_str().unwrap(), "--algos", "sgd"]);
    assert_eq!(bad_algo.status.code(), Some(2));
    assert!(stderr(&bad_algo).contains("sgd"));
}

#[test]
fn sweep_covers_the_abar_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "smoke.json", QUADRATIC);
    let out = dir.path().join("o");
    let o = dda(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--T", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for (k, row) in rows.iter().enumerate() {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[3], "true");
        assert_eq!(fields[4], "true");
        assert_eq!(fs::read_to_string(out.join(format!("sweep/dda_{k}.csv"))).unwrap().lines().count(), 22);
    }
}
