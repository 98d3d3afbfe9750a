//! Output files and console rendering. Every file goes through an atomic
//! temp-then-rename write so interrupted runs never leave partial
//! artifacts behind.

use std::fs;
use std::path::{Path, PathBuf};

use cultura_core::metrics::MetricsReport;
use cultura_core::registry::write_atomic;
use cultura_core::rng::fnv1a64;
use cultura_core::trace::TraceDoc;
use serde::Serialize;

use crate::commands::CliError;

/// Deterministic run identifier from the run's defining inputs.
pub fn run_id(query: &str, profile_id: &str, seed: u64) -> String {
    let material = format!("{query}\u{1}{profile_id}\u{1}{seed}");
    format!("{:016x}", fnv1a64(material.as_bytes()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_text(path, &text)
}

/// Write the trace and metrics pair for one run; returns the trace path.
pub fn write_run_artifacts(
    dir: &Path,
    trace: &TraceDoc,
    report: &MetricsReport,
) -> Result<PathBuf, CliError> {
    ensure_dir(dir)?;
    let trace_path = dir.join("trace.json");
    write_text(&trace_path, &trace.to_json())?;
    write_json(&dir.join("metrics.json"), report)?;
    Ok(trace_path)
}

pub fn print_run_summary(trace: &TraceDoc, report: &MetricsReport, trace_path: &Path) {
    println!("=== Final response ===");
    println!("{}", trace.final_response.as_deref().unwrap_or("(none)"));
    println!("======================");
    let cultures: Vec<&str> = trace
        .expert_responses
        .iter()
        .map(|r| r.culture.as_str())
        .filter(|c| !c.is_empty())
        .collect();
    if cultures.is_empty() {
        println!("Contributing cultures: (none attributed)");
    } else {
        println!("Contributing cultures: {}", cultures.join(", "));
    }
    if let Some(verdict) = &trace.verdict {
        println!(
            "Sensitivity: {} ({}/10)",
            if verdict.is_sensitive { "Yes" } else { "No" },
            verdict.score
        );
    }
    println!(
        "Cultural alignment: {:.3} | Diversity entropy: {:.3} bits | Experts: {} ({} unique cultures)",
        report.cas, report.diversity_entropy, report.expert_response_count, report.unique_cultures
    );
    println!(
        "Latency: {:.3}s | Trace: {}",
        report.latency_seconds,
        trace_path.display()
    );
}

/// One Table-shaped comparison row.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub model_mean: f64,
    pub model_std: f64,
    pub baseline_mean: f64,
    pub baseline_std: f64,
    pub difference: f64,
}

pub fn print_comparison_table(rows: &[ComparisonRow]) {
    println!(
        "{:<28} {:>12} {:>12} {:>14} {:>13} {:>12}",
        "metric", "model_mean", "model_std", "baseline_mean", "baseline_std", "difference"
    );
    for row in rows {
        println!(
            "{:<28} {:>12.3} {:>12.3} {:>14.3} {:>13.3} {:>+12.3}",
            row.metric,
            row.model_mean,
            row.model_std,
            row.baseline_mean,
            row.baseline_std,
            row.difference
        );
    }
}
