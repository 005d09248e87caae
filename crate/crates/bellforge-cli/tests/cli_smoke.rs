use std::fs;
use std::path::PathBuf;
use std::process::Command;
use std::time::{SystemTime, UNIX_EPOCH};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bellforge"))
}

fn scratch(tag: &str) -> PathBuf {
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap()
        .as_nanos();
    let dir = std::env::temp_dir().join(format!("bellforge-{tag}-{nanos}"));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &PathBuf, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn bell_opt_writes_functional_and_exits_zero() {
    let dir = scratch("bellopt");
    let cfg = write_config(&dir, "cfg.json", r#"{"setup": {"preset": "chsh"}}"#);
    let out = bin()
        .args(["bell-opt", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.join("bell_functional.txt")).unwrap();
    assert!(table.starts_with("# scenario: m_a=2 m_b=2 d=2"));
    assert!(table.contains("# bound:"));
    assert!(table.contains("# violation:"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("bell_functional.json")).unwrap())
            .unwrap();
    assert!(json["violation"].as_f64().unwrap() > 0.8);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn classical_behavior_exits_two_with_diagnostic() {
    let dir = scratch("classical");
    let cfg = write_config(
        &dir,
        "cfg.json",
        r#"{"setup": {"preset": "classical-uniform"}}"#,
    );
    let out = bin()
        .args(["bell-opt", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("classical"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn simulate_single_run_reports_outcome() {
    let dir = scratch("simulate");
    let cfg = write_config(
        &dir,
        "cfg.json",
        r#"{"setup": {"preset": "chsh"},
            "params": {"n_rounds": 400000, "xi": 0.3, "eta": 0.2}}"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--seed", "11", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("run_outcome.json")).unwrap()).unwrap();
    let status = json["status"].as_str().unwrap_or_default();
    assert!(
        status == "Completed" || json["status"].get("Aborted").is_some(),
        "unexpected status in {json}"
    );
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn keyrate_csv_carries_parameter_header() {
    let dir = scratch("sweep");
    let cfg = write_config(
        &dir,
        "cfg.json",
        r#"{"setup": {"preset": "chsh"}, "p_grid": [0.0], "n_grid": [10000000]}"#,
    );
    let out = bin()
        .args(["keyrate-sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("keyrate_p0.csv")).unwrap();
    let mut lines = csv.lines();
    let params = lines.next().unwrap();
    assert!(params.starts_with("# params: {"));
    let embedded: serde_json::Value =
        serde_json::from_str(params.trim_start_matches("# params: ")).unwrap();
    assert_eq!(embedded["seed"], 0);
    assert_eq!(lines.next().unwrap(), "# schema: bellforge-keyrate-v1");
    assert_eq!(lines.next().unwrap(), "n_rounds,rate,key_length,xi,eta,beta,pg");
    fs::remove_dir_all(&dir).unwrap();
}
