use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn funnelkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_funnelkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/examples").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Columns of a CSV by header name.
fn columns(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let head: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (head, rows)
}

fn column_values(head: &[String], rows: &[Vec<f64>], name: &str) -> Vec<f64> {
    let k = head.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k]).collect()
}

const FLIPPED_GAIN: &str = r#"{
  "name": "flipped",
  "mode": "closed-loop",
  "design": {"r": 2, "m": 1, "s0": 2, "rho": 1.5, "gamma_tilde": [[1]], "gamma": [[1]],
             "funnel": {"family": "exp-boundary", "c_amp": 1, "c_rate": 1, "c_inf": 0.1},
             "funnel_fc": {"family": "exp-boundary", "c_amp": 2, "c_rate": 1, "c_inf": 0.1}},
  "plant": {"kind": "state-space", "a": [[0,1],[0,0]], "b": [[0],[-1]], "c": [[1,0]]},
  "reference": [{"kind": "sine", "omega": 1}],
  "tspan": [0, 5],
  "tolerances": {"rtol": 1e-8, "atol": 1e-10, "max_steps": 20000},
  "sample_step": 0.05
}"#;

#[test]
fn design_prints_example_one_vectors() {
    let out = funnelkit(&["design", "--r", "3", "--s0", "1"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("a = (3, 3, 1)"), "{text}");
    assert!(text.contains("p = (1, 0.6667, 0.3333)"), "{text}");
    assert!(text.contains("[-1, -0.5, 4]"), "{text}");
}

#[test]
fn design_json_with_plant_gain() {
    let out = funnelkit(&[
        "design", "--r", "3", "--m", "2", "--s0", "7", "--rho", "1.1", "--gamma-tilde", "2", "--gamma",
        "2,0.2;0.2,2", "--json",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let p = v["params"]["p"].as_array().unwrap();
    assert!((p[1].as_f64().unwrap() - 1180.0 / 241.0).abs() < 1e-2 * 1180.0 / 241.0);
    let checks = v["validation"]["checks"].as_array().unwrap();
    assert!(checks
        .iter()
        .any(|c| c["condition"] == "gain-mismatch" && c["status"] == "boundary"));
}

#[test]
fn design_rejections_exit_one() {
    let out = funnelkit(&["design", "--r", "3", "--s0", "1", "--rho", "0.9"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("rho > 1"));
    // a plant gain of the wrong sign fails validation with the report printed
    let out = funnelkit(&["design", "--r", "3", "--s0", "1", "--gamma", "-1"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("fail"), "{}", stdout(&out));
    let out = funnelkit(&["design", "--r", "3", "--s0", "1", "--gamma-tilde", "1,2"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&funnelkit(&["bogus"])), 64);
    assert_eq!(code(&funnelkit(&["design", "--r", "3", "--s0", "1", "--nope"])), 64);
    assert_eq!(code(&funnelkit(&["example", "pendulum", "--out", "x"])), 64);
    assert_eq!(code(&funnelkit(&[])), 64);
    let help = funnelkit(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(stdout(&help).contains("simulate"));
}

#[test]
fn simulate_missing_file_names_it() {
    let dir = TempDir::new().unwrap();
    let out = funnelkit(&["simulate", "--config", "missing.json", "--out", s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("missing.json"));
}

#[test]
fn simulate_schema_error_points_at_key() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.json");
    let text = fs::read_to_string(shipped("example1_s5.json")).unwrap().replace("\"rho\"", "\"rh0\"");
    fs::write(&cfg, text).unwrap();
    let out = funnelkit(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("/design") && err.contains("rh0"), "{err}");
}

#[test]
fn simulate_writes_csv_and_report() {
    let dir = TempDir::new().unwrap();
    let out = funnelkit(&["simulate", "--config", s(&shipped("example1_s5.json")), "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (head, rows) = columns(&dir.path().join("result.csv"));
    assert_eq!(rows.len(), 1001);
    for name in ["margin_1", "margin_2"] {
        assert!(column_values(&head, &rows, name).iter().all(|&m| m > 0.0));
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["summary"]["completed"], true);
    assert_eq!(report["design"]["a"], serde_json::json!([15.0, 75.0, 125.0]));
}

#[test]
fn simulate_several_configs_with_jobs() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("short.json");
    let text = fs::read_to_string(shipped("example1_s5.json"))
        .unwrap()
        .replace("\"tspan\": [0, 10]", "\"tspan\": [0, 2]");
    fs::write(&cfg, text).unwrap();
    let out = funnelkit(&[
        "simulate",
        "--config",
        s(&cfg),
        s(&shipped("example1_s5.json")),
        "--out",
        s(&dir.path().join("runs")),
        "--jobs",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (_, short) = columns(&dir.path().join("runs/short/result.csv"));
    let (_, full) = columns(&dir.path().join("runs/example1_s5/result.csv"));
    assert_eq!((short.len(), full.len()), (201, 1001));
}

#[test]
fn simulate_uses_out_dir_from_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("with_out.json");
    let target = dir.path().join("from-file");
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(shipped("example1_s5.json")).unwrap()).unwrap();
    v["out_dir"] = s(&target).into();
    v["tspan"] = serde_json::json!([0, 1]);
    fs::write(&cfg, v.to_string()).unwrap();
    let out = funnelkit(&["simulate", "--config", s(&cfg)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(target.join("result.csv").exists());
    // without either source of a directory the command refuses
    v.as_object_mut().unwrap().remove("out_dir");
    fs::write(&cfg, v.to_string()).unwrap();
    assert_eq!(code(&funnelkit(&["simulate", "--config", s(&cfg)])), 1);
}

#[test]
fn runtime_abort_exits_two_and_keeps_partial_output() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("flipped.json");
    fs::write(&cfg, FLIPPED_GAIN).unwrap();
    let out = funnelkit(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("aborted"));
    let (head, rows) = columns(&dir.path().join("result.csv"));
    let t = column_values(&head, &rows, "t");
    assert!(!t.is_empty() && *t.last().unwrap() < 5.0);
}

#[test]
fn example_tracking_stays_inside_funnels() {
    let dir = TempDir::new().unwrap();
    let out = funnelkit(&["example", "tracking", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (head, rows) = columns(&dir.path().join("result.csv"));
    let margins: Vec<&String> = head.iter().filter(|h| h.starts_with("margin")).collect();
    assert_eq!(margins.len(), 4);
    for name in margins {
        assert!(column_values(&head, &rows, name).iter().all(|&m| m > 0.0), "{name}");
    }
}

#[test]
fn example_precompensator_sweep_and_stability() {
    let dir = TempDir::new().unwrap();
    let out = funnelkit(&["example", "precompensator", "--s0", "1", "5", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("s0-1/result.csv").exists());
    assert!(dir.path().join("s0-5/result.csv").exists());
    // repeated runs are byte identical
    let again = TempDir::new().unwrap();
    let out = funnelkit(&["example", "precompensator", "--s0", "5", "--out", s(again.path())]);
    assert_eq!(code(&out), 0);
    let a = fs::read(dir.path().join("s0-5/result.csv")).unwrap();
    let b = fs::read(again.path().join("result.csv")).unwrap();
    assert_eq!(a, b);
    let out = funnelkit(&["example", "tracking", "--s0", "3", "--out", s(again.path())]);
    assert_eq!(code(&out), 1);
}

#[test]
fn diagnose_writes_margins_and_lyapunov_trace() {
    let dir = TempDir::new().unwrap();
    let out = funnelkit(&["diagnose", "--config", s(&shipped("example2_tracking.json")), "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("diagnostics.json")).unwrap()).unwrap();
    assert!(diag["margins"]["kappa"].as_array().unwrap().iter().all(|k| k.as_f64().unwrap() > 0.0));
    assert_eq!(diag["margins"]["sandwich_holds"], true);
    assert_eq!(diag["kronecker"]["q_hat1_spd"], true);
    let (head, rows) = columns(&dir.path().join("coordinates.csv"));
    let v = column_values(&head, &rows, "V");
    let lo = column_values(&head, &rows, "V_lower");
    assert!(v.iter().zip(&lo).all(|(v, lo)| v >= lo));
    assert!(dir.path().join("result.csv").exists());
}

#[test]
fn diagnose_open_loop_and_missing_config() {
    let dir = TempDir::new().unwrap();
    let out = funnelkit(&["diagnose", "--config", s(&shipped("example1_s5.json")), "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("sandwich holds: true"));
    let out = funnelkit(&["diagnose", "--config", "nowhere.json", "--out", s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nowhere.json"));
}
