//! Alignment and diversity metrics over completed runs, plus batch
//! aggregation with Pearson correlations.
//!
//! Text matching (topic mentions, coverage, completeness markers) is
//! case-insensitive substring containment over whitespace-normalized text.
//! Empty-input conventions are fixed: alignment of zero responses is 0,
//! coverage of zero topics is 1, entropy of zero or one culture is 0.
//! Variance and standard deviation are population statistics throughout.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::GraphState;
use crate::registry::Registry;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("unknown culture label {0:?}")]
    UnknownCulture(String),
}

/// Optional scoring knobs. `completeness_markers` defaults to empty, which
/// makes every response complete; populate it with the answer-option
/// labels when scoring survey-style runs.
#[derive(Debug, Clone, Default)]
pub struct MetricsConfig {
    pub completeness_markers: Vec<String>,
}

/// Every metric for one run. Bounded fields stay in `[0, 1]`;
/// `covered_topics` is the raw covered-topic count, reported alongside the
/// bounded `topic_coverage` fraction because the two answer different
/// questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cas: f64,
    pub cav: f64,
    pub diversity_entropy: f64,
    pub stm_rate: f64,
    pub topic_coverage: f64,
    pub covered_topics: usize,
    pub completeness: f64,
    pub avg_response_length: f64,
    pub length_stddev: f64,
    pub unique_cultures: usize,
    pub expert_response_count: usize,
    pub latency_seconds: f64,
    /// Stage data that was absent when scoring (e.g. baseline runs have no
    /// plan or routing). Gaps are reported, never silently zeroed.
    pub gaps: Vec<String>,
    pub warnings: Vec<String>,
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn mentions(text_norm: &str, needle: &str) -> bool {
    let needle = normalize(needle);
    !needle.is_empty() && text_norm.contains(&needle)
}

/// Fraction of responses whose culture resolves into the relevant set,
/// either directly or through its region. Zero when there are no
/// attributed responses.
pub fn cultural_alignment_score(
    cultures: &[String],
    relevant: &BTreeSet<String>,
    region_map: &BTreeMap<String, String>,
) -> Result<f64, MetricsError> {
    if cultures.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for culture in cultures {
        let region = region_map
            .get(culture)
            .ok_or_else(|| MetricsError::UnknownCulture(culture.clone()))?;
        if relevant.contains(culture) || relevant.contains(region) {
            hits += 1;
        }
    }
    Ok(hits as f64 / cultures.len() as f64)
}

/// Population variance of per-label response frequency across the relevant
/// set. A response counts toward label `c` when its culture is `c` or maps
/// to region `c`. An empty relevant set yields 0 with the degenerate flag.
pub fn cultural_alignment_variance(
    cultures: &[String],
    relevant: &BTreeSet<String>,
    region_map: &BTreeMap<String, String>,
) -> Result<(f64, bool), MetricsError> {
    if relevant.is_empty() {
        return Ok((0.0, true));
    }
    let total = cultures.len() as f64;
    let mut frequencies = Vec::with_capacity(relevant.len());
    for label in relevant {
        let mut count = 0usize;
        for culture in cultures {
            let region = region_map
                .get(culture)
                .ok_or_else(|| MetricsError::UnknownCulture(culture.clone()))?;
            if culture == label || region == label {
                count += 1;
            }
        }
        frequencies.push(if total > 0.0 {
            count as f64 / total
        } else {
            0.0
        });
    }
    Ok((population_variance(&frequencies), false))
}

/// Shannon entropy in bits of the culture frequency distribution.
pub fn diversity_entropy(cultures: &[String]) -> f64 {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for culture in cultures {
        if !culture.is_empty() {
            *counts.entry(culture.as_str()).or_insert(0) += 1;
        }
    }
    let total: usize = counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .values()
        .map(|&count| {
            let p = count as f64 / total as f64;
            if p > 0.0 {
                -p * p.log2()
            } else {
                0.0
            }
        })
        .sum()
}

/// Fraction of responses that mention at least one topic.
pub fn stm_rate(texts: &[&str], topics: &[String]) -> f64 {
    if texts.is_empty() || topics.is_empty() {
        return 0.0;
    }
    let hits = texts
        .iter()
        .filter(|text| {
            let norm = normalize(text);
            topics.iter().any(|topic| mentions(&norm, topic))
        })
        .count();
    hits as f64 / texts.len() as f64
}

/// Fraction of topics mentioned by at least one response, plus the raw
/// covered count. Zero topics count as fully covered.
pub fn topic_coverage(texts: &[&str], topics: &[String]) -> (f64, usize) {
    if topics.is_empty() {
        return (1.0, 0);
    }
    let norms: Vec<String> = texts.iter().map(|t| normalize(t)).collect();
    let covered = topics
        .iter()
        .filter(|topic| norms.iter().any(|norm| mentions(norm, topic)))
        .count();
    (covered as f64 / topics.len() as f64, covered)
}

/// Fraction of responses containing every required marker. An empty marker
/// set makes every response complete.
pub fn response_completeness(texts: &[&str], markers: &[String]) -> f64 {
    let markers: Vec<&String> = markers.iter().filter(|m| !m.trim().is_empty()).collect();
    if markers.is_empty() {
        return 1.0;
    }
    if texts.is_empty() {
        return 0.0;
    }
    let complete = texts
        .iter()
        .filter(|text| {
            let norm = normalize(text);
            markers.iter().all(|marker| mentions(&norm, marker))
        })
        .count();
    complete as f64 / texts.len() as f64
}

/// Mean and population standard deviation of response lengths, in
/// characters.
pub fn length_stats(texts: &[&str]) -> (f64, f64) {
    if texts.is_empty() {
        return (0.0, 0.0);
    }
    let lengths: Vec<f64> = texts.iter().map(|t| t.chars().count() as f64).collect();
    let mean = lengths.iter().sum::<f64>() / lengths.len() as f64;
    (mean, population_variance(&lengths).sqrt())
}

/// Number of distinct (nonempty) culture labels.
pub fn unique_cultures(cultures: &[String]) -> usize {
    cultures
        .iter()
        .filter(|c| !c.is_empty())
        .collect::<BTreeSet<_>>()
        .len()
}

fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64
}

/// Score one completed run. Missing stage data is recorded under `gaps`
/// rather than silently zeroed (metrics with a defined empty-input value
/// are still computed).
pub fn score_run(
    state: &GraphState,
    registry: &Registry,
    config: &MetricsConfig,
) -> Result<MetricsReport, MetricsError> {
    let mut gaps = Vec::new();
    if state.verdict().is_none() {
        gaps.push("verdict".to_string());
    }
    if state.plan_context().is_none() {
        gaps.push("plan".to_string());
    }
    if state.routing().is_none() {
        gaps.push("routing".to_string());
    }
    if state.topics().is_none() {
        gaps.push("topics".to_string());
    }
    if state.final_response().is_none() {
        gaps.push("final_response".to_string());
    }

    let cultures: Vec<String> = state
        .expert_responses()
        .iter()
        .map(|r| r.culture.clone())
        .filter(|c| !c.is_empty())
        .collect();
    let texts: Vec<&str> = state
        .expert_responses()
        .iter()
        .map(|r| r.text.as_str())
        .collect();
    let topics: Vec<String> = state
        .topics()
        .map(|t| t.labels().to_vec())
        .unwrap_or_default();
    let relevant = state
        .plan_context()
        .map(|p| p.relevant_regions.clone())
        .unwrap_or_default();

    let mut warnings = state.warnings().to_vec();
    let cas = cultural_alignment_score(&cultures, &relevant, registry.region_map())?;
    let (cav, cav_degenerate) =
        cultural_alignment_variance(&cultures, &relevant, registry.region_map())?;
    if cav_degenerate {
        warnings.push("cav computed over an empty relevant-region set".to_string());
    }
    let (coverage, covered) = topic_coverage(&texts, &topics);
    let (avg_len, len_std) = length_stats(&texts);

    Ok(MetricsReport {
        cas,
        cav,
        diversity_entropy: diversity_entropy(&cultures),
        stm_rate: stm_rate(&texts, &topics),
        topic_coverage: coverage,
        covered_topics: covered,
        completeness: response_completeness(&texts, &config.completeness_markers),
        avg_response_length: avg_len,
        length_stddev: len_std,
        unique_cultures: unique_cultures(&cultures),
        expert_response_count: state.expert_responses().len(),
        latency_seconds: state.timings().total,
        gaps,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Batch aggregation
// ---------------------------------------------------------------------------

/// Metric names in report order: the headline comparison rows first, then
/// the extended rows.
pub const METRIC_NAMES: [&str; 12] = [
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

/// Extract the metric vector for one report, in [`METRIC_NAMES`] order.
pub fn metric_values(report: &MetricsReport) -> [f64; 12] {
    [
        report.latency_seconds,
        report.cas,
        report.diversity_entropy,
        report.expert_response_count as f64,
        report.unique_cultures as f64,
        report.covered_topics as f64,
        report.completeness,
        report.cav,
        report.stm_rate,
        report.topic_coverage,
        report.avg_response_length,
        report.length_stddev,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// Pearson r, row-major over `names`. Diagonal is 1 by definition;
    /// pairs involving a constant series are 0 and listed in
    /// `constant_metrics`.
    pub values: Vec<Vec<f64>>,
    pub constant_metrics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub count: usize,
    pub stats: Vec<MetricStat>,
    /// Present only with at least two reports.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlations: Option<CorrelationMatrix>,
}

/// Per-metric mean and population standard deviation plus the pairwise
/// Pearson matrix. Fewer than two reports omit the correlations.
pub fn summarize_batch(reports: &[MetricsReport]) -> BatchSummary {
    let series: Vec<[f64; 12]> = reports.iter().map(metric_values).collect();
    let count = reports.len();

    let mut stats = Vec::with_capacity(METRIC_NAMES.len());
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(count); METRIC_NAMES.len()];
    for row in &series {
        for (column, value) in columns.iter_mut().zip(row) {
            column.push(*value);
        }
    }
    for (name, column) in METRIC_NAMES.iter().zip(&columns) {
        let mean = if count == 0 {
            0.0
        } else {
            column.iter().sum::<f64>() / count as f64
        };
        stats.push(MetricStat {
            name: name.to_string(),
            mean,
            std: population_variance(column).sqrt(),
        });
    }

    let correlations = if count >= 2 {
        let stds: Vec<f64> = columns
            .iter()
            .map(|c| population_variance(c).sqrt())
            .collect();
        let constant_metrics: Vec<String> = METRIC_NAMES
            .iter()
            .zip(&stds)
            .filter(|(_, s)| **s == 0.0)
            .map(|(n, _)| n.to_string())
            .collect();
        let mut values = vec![vec![0.0; METRIC_NAMES.len()]; METRIC_NAMES.len()];
        for i in 0..METRIC_NAMES.len() {
            for j in 0..METRIC_NAMES.len() {
                values[i][j] = if i == j {
                    1.0
                } else {
                    pearson(&columns[i], &columns[j])
                };
            }
        }
        Some(CorrelationMatrix {
            names: METRIC_NAMES.iter().map(|n| n.to_string()).collect(),
            values,
            constant_metrics,
        })
    } else {
        None
    };

    BatchSummary {
        count,
        stats,
        correlations,
    }
}

/// Pearson correlation; defined as 0 when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.is_empty() {
        return 0.0;
    }
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mean_x) * (b - mean_y);
        var_x += (a - mean_x) * (a - mean_x);
        var_y += (b - mean_y) * (b - mean_y);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return 0.0;
    }
    (cov / (var_x.sqrt() * var_y.sqrt())).clamp(-1.0, 1.0)
}

// ---------------------------------------------------------------------------
// Tabular export
// ---------------------------------------------------------------------------

/// Header for the flat one-row-per-run export.
pub fn csv_header() -> String {
    let mut fields = vec!["run_id", "mode", "profile_id"];
    fields.extend(METRIC_NAMES);
    fields.join(",")
}

/// One CSV row for a scored run.
pub fn csv_row(run_id: &str, mode: &str, profile_id: &str, report: &MetricsReport) -> String {
    let mut fields = vec![csv_escape(run_id), csv_escape(mode), csv_escape(profile_id)];
    for value in metric_values(report) {
        fields.push(format!("{value}"));
    }
    fields.join(",")
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}
