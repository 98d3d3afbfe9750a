//! End-to-end tests driving the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn workspace_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn cultura() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cultura"))
}

fn run_ok(args: &[&str]) -> Output {
    let output = cultura().args(args).output().unwrap();
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn config_arg(test: &str) -> String {
    workspace_path(&format!("fixtures/{test}/config.toml"))
        .to_str()
        .unwrap()
        .to_string()
}

const TEST1_QUERY: &str = "How important do you consider it that your neighbors are drug addicts?";

#[test]
fn run_writes_trace_and_metrics_and_reruns_byte_identically() {
    let out = tempfile::tempdir().unwrap();
    let out_arg = out.path().to_str().unwrap();
    let config = config_arg("test1");
    let args = [
        "--config",
        config.as_str(),
        "--out-dir",
        out_arg,
        "run",
        "--query",
        TEST1_QUERY,
        "--profile-id",
        "us_test1",
    ];
    let output = run_ok(&args);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(
        stdout.contains("Contributing cultures: United States, Vietnam, India, Thailand, China")
    );
    assert!(stdout.contains("Sensitivity: Yes (9/10)"));

    let run_dir = fs::read_dir(out.path())
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let trace_path = run_dir.join("trace.json");
    let metrics_path = run_dir.join("metrics.json");
    assert!(trace_path.exists() && metrics_path.exists());
    let first = fs::read(&trace_path).unwrap();

    run_ok(&args);
    let second = fs::read(&trace_path).unwrap();
    assert_eq!(first, second, "rerun must overwrite with identical bytes");

    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&metrics_path).unwrap()).unwrap();
    assert_eq!(metrics["expert_response_count"], 5);
    assert_eq!(metrics["unique_cultures"], 5);
}

#[test]
fn missing_profile_exits_nonzero_with_message() {
    let out = tempfile::tempdir().unwrap();
    let config = config_arg("test1");
    let output = cultura()
        .args([
            "--config",
            config.as_str(),
            "--out-dir",
            out.path().to_str().unwrap(),
            "run",
            "--query",
            "anything",
            "--profile-id",
            "absent_user",
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("profile not found"), "stderr: {stderr}");
}

#[test]
fn baseline_mode_produces_single_unattributed_response() {
    let out = tempfile::tempdir().unwrap();
    let config = config_arg("test2");
    run_ok(&[
        "--config",
        config.as_str(),
        "--out-dir",
        out.path().to_str().unwrap(),
        "--mode",
        "baseline",
        "run",
        "--query",
        "To what extent do you trust television?",
    ]);
    let run_dir = fs::read_dir(out.path())
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["expert_response_count"], 1);
    assert_eq!(metrics["unique_cultures"], 0);
    let trace: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("trace.json")).unwrap()).unwrap();
    assert_eq!(trace["mode"], "baseline");
    assert!(trace.get("routing").is_none());
}

#[test]
fn batch_writes_reports_summary_and_csv() {
    let out = tempfile::tempdir().unwrap();
    let queries = out.path().join("queries.txt");
    fs::write(
        &queries,
        format!("{TEST1_QUERY}\nIs tipping expected at restaurants?\tus_test1\nShould elders live with their children?\n"),
    )
    .unwrap();
    let config = config_arg("test1");
    let output = run_ok(&[
        "--config",
        config.as_str(),
        "--out-dir",
        out.path().to_str().unwrap(),
        "batch",
        "--queries-file",
        queries.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&output.stdout).contains("3/3 runs completed"));

    let batch_dir = out.path().join("batch");
    let run_dirs: Vec<_> = fs::read_dir(&batch_dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .collect();
    assert_eq!(run_dirs.len(), 3);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(batch_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["requested"], 3);
    assert_eq!(summary["completed"], 3);
    assert!(summary["correlations"]["values"].is_array());

    let csv = fs::read_to_string(batch_dir.join("runs.csv")).unwrap();
    let lines: Vec<&str> = csv.trim_end().lines().collect();
    assert_eq!(lines.len(), 4, "header plus three rows");
    assert!(lines[0].starts_with("run_id,mode,profile_id,latency_seconds"));
}

#[test]
fn empty_queries_file_fails() {
    let out = tempfile::tempdir().unwrap();
    let queries = out.path().join("queries.txt");
    fs::write(&queries, "\n   \n").unwrap();
    let config = config_arg("test1");
    let output = cultura()
        .args([
            "--config",
            config.as_str(),
            "--out-dir",
            out.path().to_str().unwrap(),
            "batch",
            "--queries-file",
            queries.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("no queries"));
}

#[test]
fn flags_override_config_file_values() {
    let out = tempfile::tempdir().unwrap();
    let config = config_arg("test1");
    run_ok(&[
        "--config",
        config.as_str(),
        "--out-dir",
        out.path().to_str().unwrap(),
        "--k",
        "3",
        "run",
        "--query",
        TEST1_QUERY,
        "--profile-id",
        "us_test1",
    ]);
    let run_dir = fs::read_dir(out.path())
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let trace: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("trace.json")).unwrap()).unwrap();
    assert_eq!(trace["routing"]["activated"].as_array().unwrap().len(), 3);
}

#[test]
fn oversized_k_is_rejected_before_running() {
    let out = tempfile::tempdir().unwrap();
    let config = config_arg("test1");
    let output = cultura()
        .args([
            "--config",
            config.as_str(),
            "--out-dir",
            out.path().to_str().unwrap(),
            "--k",
            "21",
            "run",
            "--query",
            "q",
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("exceeds the roster size"));
}
