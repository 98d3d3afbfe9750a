//! Acceptance criterion 12: the comparison command emits a table-shaped
//! report whose difference column is exactly model mean minus baseline
//! mean, on the golden batch.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

const TOL: f64 = 1e-9;

fn workspace_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

const EXPECTED_METRICS: [&str; 12] = [
    "latency_seconds",
    "cultural_alignment",
    "diversity_entropy",
    "expert_response_count",
    "unique_cultures",
    "sensitivity_coverage",
    "response_completeness",
    "cultural_alignment_variance",
    "stm_rate",
    "topic_coverage",
    "avg_response_length",
    "length_stddev",
];

#[test]
fn acceptance_c12_compare_report_difference_column() {
    let out = tempfile::tempdir().unwrap();
    let queries = out.path().join("golden.txt");
    fs::write(
        &queries,
        "How important do you consider it that your neighbors are drug addicts?\n\
         How concerned should a family be about addiction nearby?\n\
         Is it acceptable to report a neighbor's addiction to authorities?\n",
    )
    .unwrap();
    let config = workspace_path("fixtures/test1/config.toml");
    let output = Command::new(env!("CARGO_BIN_EXE_cultura"))
        .args([
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            out.path().to_str().unwrap(),
            "compare",
            "--queries-file",
            queries.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    let document: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(out.path().join("compare/comparison.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(document["requested"], 3);
    assert_eq!(document["model_completed"], 3);
    assert_eq!(document["baseline_completed"], 3);

    let rows = document["metrics"].as_array().unwrap();
    assert_eq!(rows.len(), EXPECTED_METRICS.len());
    for (row, expected_name) in rows.iter().zip(EXPECTED_METRICS) {
        assert_eq!(row["metric"], expected_name);
        for field in [
            "model_mean",
            "model_std",
            "baseline_mean",
            "baseline_std",
            "difference",
        ] {
            assert!(
                row[field].is_number(),
                "row {expected_name} is missing {field}"
            );
        }
        let difference = row["difference"].as_f64().unwrap();
        let model_mean = row["model_mean"].as_f64().unwrap();
        let baseline_mean = row["baseline_mean"].as_f64().unwrap();
        assert!(
            (difference - (model_mean - baseline_mean)).abs() < TOL,
            "{expected_name}: difference {difference} vs {model_mean} - {baseline_mean}"
        );
    }

    // Baseline structure: one response, nothing attributed.
    let baseline_count = rows
        .iter()
        .find(|r| r["metric"] == "expert_response_count")
        .unwrap();
    assert!((baseline_count["baseline_mean"].as_f64().unwrap() - 1.0).abs() < TOL);
    assert!(baseline_count["baseline_std"].as_f64().unwrap().abs() < TOL);

    println!("[PASS] C12: comparison report carries all 12 metric rows with difference = model mean - baseline mean within 1e-9");
}
