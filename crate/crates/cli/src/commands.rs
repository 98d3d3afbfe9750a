//! The three operations behind the subcommands: single runs, batch
//! experiments, and model-vs-baseline comparison.

use std::fs;
use std::path::{Path, PathBuf};

use cultura_core::backend::{GenerationBackend, HttpBackend, HttpBackendConfig, MockBackend};
use cultura_core::metrics::{
    self, csv_header, csv_row, summarize_batch, MetricsConfig, MetricsReport, METRIC_NAMES,
};
use cultura_core::pipeline::{run_baseline, run_pipeline, PipelineConfig, PromptTemplates};
use cultura_core::registry::{
    default_cache_path, load_profiles, load_registry, Registry, RegistryError, UserProfile,
};
use cultura_core::trace::TraceDoc;
use cultura_core::{PipelineError, RetryPolicy};
use serde::Serialize;
use thiserror::Error;

use crate::config::{BackendKind, Mode, ResolvedConfig};
use crate::output::{
    ensure_dir, print_comparison_table, print_run_summary, run_id, write_json, write_run_artifacts,
    ComparisonRow,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("{0}")]
    Registry(#[from] RegistryError),
    #[error("{0}")]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Metrics(#[from] metrics::MetricsError),
    #[error("backend: {0}")]
    Backend(#[from] cultura_core::backend::BackendError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("profile not found: {0}")]
    ProfileNotFound(String),
    #[error("{0}")]
    Invalid(String),
}

/// Everything loaded and validated, ready to execute runs.
pub struct Runtime {
    pub registry: Registry,
    pub profiles: Vec<UserProfile>,
    pub backend: Box<dyn GenerationBackend>,
    pub templates: PromptTemplates,
    pub pipeline_config: PipelineConfig,
    pub metrics_config: MetricsConfig,
    pub out_dir: PathBuf,
    pub mode: Mode,
    pub seed: u64,
}

pub fn prepare(config: &ResolvedConfig) -> Result<Runtime, CliError> {
    let mut registry = load_registry(&config.registry_path)?;
    let n = registry.experts().len();
    if config.routing.k > n {
        return Err(CliError::Invalid(format!(
            "k = {} exceeds the roster size {n}",
            config.routing.k
        )));
    }
    if config.routing.num_clusters > n {
        return Err(CliError::Invalid(format!(
            "clusters = {} exceeds the roster size {n}",
            config.routing.num_clusters
        )));
    }

    let dimension = config.backend.dimension.unwrap_or(registry.dimension());
    if dimension != registry.dimension() {
        return Err(CliError::Invalid(format!(
            "backend dimension {dimension} does not match registry dimension {}",
            registry.dimension()
        )));
    }
    let backend: Box<dyn GenerationBackend> = match config.backend.kind {
        BackendKind::Mock => {
            let mock = match &config.backend.fixtures {
                Some(path) => MockBackend::from_fixture_file(path, dimension, config.backend.seed)?,
                None => MockBackend::new(dimension, config.backend.seed),
            };
            Box::new(mock)
        }
        BackendKind::Http => Box::new(HttpBackend::new(&HttpBackendConfig {
            base_url: config.backend.url.clone(),
            model: config.backend.model.clone(),
            auth_env: Some(config.backend.auth_env.clone()),
            timeout_secs: config.backend.timeout_secs,
            dimension,
        })?),
    };

    let cache_path = default_cache_path(&config.registry_path);
    registry.ensure_embedded(backend.as_ref(), Some(&cache_path))?;

    let mut profiles = load_profiles(&config.profiles_path)?;
    profiles.sort_by(|a, b| a.profile_id.cmp(&b.profile_id));
    if profiles.is_empty() {
        return Err(CliError::Invalid(format!(
            "no profiles in {}",
            config.profiles_path.display()
        )));
    }

    let templates = PromptTemplates::load(&config.prompts_dir)?;
    Ok(Runtime {
        registry,
        profiles,
        backend,
        templates,
        pipeline_config: PipelineConfig {
            routing: config.routing.clone(),
            full_token_budget: config.full_token_budget,
            word_limit: config.word_limit,
            parallelism: config.parallelism,
            retry: RetryPolicy::default(),
        },
        metrics_config: MetricsConfig {
            completeness_markers: config.completeness_markers.clone(),
        },
        out_dir: config.out_dir.clone(),
        mode: config.mode,
        seed: config.backend.seed,
    })
}

impl Runtime {
    fn profile_by_id(&self, id: &str) -> Result<&UserProfile, CliError> {
        self.profiles
            .iter()
            .find(|p| p.profile_id == id)
            .ok_or_else(|| CliError::ProfileNotFound(id.to_string()))
    }

    fn execute(
        &self,
        query: &str,
        profile: &UserProfile,
        mode: Mode,
    ) -> Result<(TraceDoc, MetricsReport), CliError> {
        let state = match mode {
            Mode::Pipeline => run_pipeline(
                query,
                profile,
                &self.registry,
                self.backend.as_ref(),
                &self.templates,
                &self.pipeline_config,
            )?,
            Mode::Baseline => run_baseline(query, self.backend.as_ref(), &self.pipeline_config)?,
        };
        let report = metrics::score_run(&state, &self.registry, &self.metrics_config)?;
        Ok((TraceDoc::from_state(&state), report))
    }
}

// ---------------------------------------------------------------------------
// cultura run
// ---------------------------------------------------------------------------

pub fn cmd_run(runtime: &Runtime, query: &str, profile_id: Option<&str>) -> Result<(), CliError> {
    let profile = match profile_id {
        Some(id) => runtime.profile_by_id(id)?,
        None => &runtime.profiles[0],
    };
    let (trace, report) = runtime.execute(query, profile, runtime.mode)?;
    let id = run_id(query, &profile.profile_id, runtime.seed);
    let dir = runtime.out_dir.join(format!("run-{id}"));
    let trace_path = write_run_artifacts(&dir, &trace, &report)?;
    print_run_summary(&trace, &report, &trace_path);
    Ok(())
}

// ---------------------------------------------------------------------------
// cultura batch
// ---------------------------------------------------------------------------

/// One line of the queries file: the query text plus an optional
/// tab-separated profile override.
fn parse_queries_file(path: &Path) -> Result<Vec<(String, Option<String>)>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let entries: Vec<(String, Option<String>)> = text
        .lines()
        .map(str::trim_end)
        .filter(|line| !line.trim().is_empty())
        .map(|line| match line.split_once('\t') {
            Some((query, profile)) if !profile.trim().is_empty() => {
                (query.trim().to_string(), Some(profile.trim().to_string()))
            }
            _ => (line.trim().to_string(), None),
        })
        .collect();
    if entries.is_empty() {
        return Err(CliError::Invalid(format!(
            "queries file {} contains no queries",
            path.display()
        )));
    }
    Ok(entries)
}

#[derive(Debug, Serialize)]
struct RunFailure {
    query: String,
    profile_id: Option<String>,
    error: String,
}

#[derive(Debug, Serialize)]
struct BatchDocument {
    requested: usize,
    completed: usize,
    #[serde(flatten)]
    summary: cultura_core::metrics::BatchSummary,
    failures: Vec<RunFailure>,
}

pub fn cmd_batch(
    runtime: &Runtime,
    queries_file: &Path,
    default_profile: Option<&str>,
) -> Result<i32, CliError> {
    let entries = parse_queries_file(queries_file)?;
    if let Some(id) = default_profile {
        runtime.profile_by_id(id)?;
    }
    let batch_dir = runtime.out_dir.join("batch");
    ensure_dir(&batch_dir)?;

    let mut reports = Vec::new();
    let mut csv_lines = vec![csv_header()];
    let mut failures = Vec::new();

    for (index, (query, override_id)) in entries.iter().enumerate() {
        let profile = match override_id.as_deref().or(default_profile) {
            Some(id) => match runtime.profile_by_id(id) {
                Ok(p) => p,
                Err(e) => {
                    failures.push(RunFailure {
                        query: query.clone(),
                        profile_id: Some(id.to_string()),
                        error: e.to_string(),
                    });
                    continue;
                }
            },
            None => &runtime.profiles[index % runtime.profiles.len()],
        };
        match runtime.execute(query, profile, runtime.mode) {
            Ok((trace, report)) => {
                let id = run_id(query, &profile.profile_id, runtime.seed);
                let dir = batch_dir.join(format!("run-{index:03}-{id}"));
                write_run_artifacts(&dir, &trace, &report)?;
                let mode = match runtime.mode {
                    Mode::Pipeline => "pipeline",
                    Mode::Baseline => "baseline",
                };
                csv_lines.push(csv_row(&id, mode, &profile.profile_id, &report));
                reports.push(report);
            }
            Err(e) => failures.push(RunFailure {
                query: query.clone(),
                profile_id: Some(profile.profile_id.clone()),
                error: e.to_string(),
            }),
        }
    }

    let document = BatchDocument {
        requested: entries.len(),
        completed: reports.len(),
        summary: summarize_batch(&reports),
        failures,
    };
    write_json(&batch_dir.join("summary.json"), &document)?;
    let mut csv = csv_lines.join("\n");
    csv.push('\n');
    crate::output::write_text(&batch_dir.join("runs.csv"), &csv)?;

    println!(
        "batch: {}/{} runs completed; summary at {}",
        document.completed,
        document.requested,
        batch_dir.join("summary.json").display()
    );
    for stat in &document.summary.stats {
        println!(
            "  {:<28} mean {:>10.3}  std {:>10.3}",
            stat.name, stat.mean, stat.std
        );
    }
    if document.completed == 0 {
        eprintln!("batch: every run failed");
        return Ok(1);
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// cultura compare
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct SideSummary {
    latency_seconds: f64,
    response_chars: usize,
    expert_response_count: usize,
    unique_cultures: usize,
    cultures: Vec<String>,
}

fn side_summary(trace: &TraceDoc, report: &MetricsReport) -> SideSummary {
    SideSummary {
        latency_seconds: report.latency_seconds,
        response_chars: trace
            .final_response
            .as_deref()
            .map(|t| t.chars().count())
            .unwrap_or(0),
        expert_response_count: report.expert_response_count,
        unique_cultures: report.unique_cultures,
        cultures: trace
            .expert_responses
            .iter()
            .map(|r| r.culture.clone())
            .filter(|c| !c.is_empty())
            .collect(),
    }
}

#[derive(Debug, Serialize)]
struct QueryComparison {
    query: String,
    profile_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<SideSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<SideSummary>,
}

#[derive(Debug, Serialize)]
struct ComparisonDocument {
    requested: usize,
    model_completed: usize,
    baseline_completed: usize,
    metrics: Vec<ComparisonRow>,
    per_query: Vec<QueryComparison>,
    failures: Vec<RunFailure>,
}

pub fn cmd_compare(runtime: &Runtime, queries_file: &Path) -> Result<i32, CliError> {
    let entries = parse_queries_file(queries_file)?;
    let compare_dir = runtime.out_dir.join("compare");
    ensure_dir(&compare_dir)?;

    let mut model_reports = Vec::new();
    let mut baseline_reports = Vec::new();
    let mut per_query = Vec::new();
    let mut failures = Vec::new();

    for (index, (query, override_id)) in entries.iter().enumerate() {
        let profile = match override_id.as_deref() {
            Some(id) => runtime.profile_by_id(id)?,
            None => &runtime.profiles[index % runtime.profiles.len()],
        };
        let mut entry = QueryComparison {
            query: query.clone(),
            profile_id: profile.profile_id.clone(),
            model: None,
            baseline: None,
        };
        match runtime.execute(query, profile, Mode::Pipeline) {
            Ok((trace, report)) => {
                crate::output::write_text(
                    &compare_dir.join(format!("model-{index:03}-trace.json")),
                    &trace.to_json(),
                )?;
                entry.model = Some(side_summary(&trace, &report));
                model_reports.push(report);
            }
            Err(e) => failures.push(RunFailure {
                query: query.clone(),
                profile_id: Some(profile.profile_id.clone()),
                error: format!("model: {e}"),
            }),
        }
        match runtime.execute(query, profile, Mode::Baseline) {
            Ok((trace, report)) => {
                crate::output::write_text(
                    &compare_dir.join(format!("baseline-{index:03}-trace.json")),
                    &trace.to_json(),
                )?;
                entry.baseline = Some(side_summary(&trace, &report));
                baseline_reports.push(report);
            }
            Err(e) => failures.push(RunFailure {
                query: query.clone(),
                profile_id: None,
                error: format!("baseline: {e}"),
            }),
        }
        per_query.push(entry);
    }

    let model_summary = summarize_batch(&model_reports);
    let baseline_summary = summarize_batch(&baseline_reports);
    let rows: Vec<ComparisonRow> = METRIC_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let model = &model_summary.stats[i];
            let baseline = &baseline_summary.stats[i];
            ComparisonRow {
                metric: name.to_string(),
                model_mean: model.mean,
                model_std: model.std,
                baseline_mean: baseline.mean,
                baseline_std: baseline.std,
                difference: model.mean - baseline.mean,
            }
        })
        .collect();

    let document = ComparisonDocument {
        requested: entries.len(),
        model_completed: model_reports.len(),
        baseline_completed: baseline_reports.len(),
        metrics: rows,
        per_query,
        failures,
    };
    write_json(&compare_dir.join("comparison.json"), &document)?;

    print_comparison_table(&document.metrics);
    println!(
        "comparison written to {}",
        compare_dir.join("comparison.json").display()
    );
    if document.model_completed == 0 && document.baseline_completed == 0 {
        eprintln!("compare: every run failed");
        return Ok(1);
    }
    Ok(0)
}
