//! Configuration resolution: command-line flags override environment
//! variables, which override the config file, which overrides defaults.
//! Relative paths inside a config file resolve against the file's own
//! directory, so shipped configs work from any working directory.

use std::path::{Path, PathBuf};

use cultura_core::vector::RoutingParams;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("{what} does not exist: {path}")]
    MissingPath { what: &'static str, path: PathBuf },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Pipeline,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone)]
pub struct BackendSettings {
    pub kind: BackendKind,
    pub url: String,
    pub model: String,
    /// Environment variable holding the bearer token. Tokens are never
    /// accepted as flags or config values.
    pub auth_env: String,
    pub timeout_secs: u64,
    /// Defaults to the registry's dimension when unset.
    pub dimension: Option<usize>,
    pub seed: u64,
    pub fixtures: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub registry_path: PathBuf,
    pub profiles_path: PathBuf,
    pub prompts_dir: PathBuf,
    pub out_dir: PathBuf,
    pub backend: BackendSettings,
    pub routing: RoutingParams,
    pub parallelism: usize,
    pub word_limit: usize,
    pub full_token_budget: usize,
    pub completeness_markers: Vec<String>,
    pub mode: Mode,
}

/// Flag overrides shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Config file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Expert roster file.
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    /// User profiles file.
    #[arg(long, global = true)]
    pub profiles: Option<PathBuf>,
    /// pipeline (staged agents) or baseline (single direct call).
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    /// Experts to activate per query.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Topic-centroid fusion weight.
    #[arg(long, global = true)]
    pub lambda1: Option<f64>,
    /// User-embedding fusion weight.
    #[arg(long, global = true)]
    pub lambda2: Option<f64>,
    /// Similarity threshold on the negative-L1 scale; omit to disable the
    /// clustering fallback.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    /// Cluster count for the fallback.
    #[arg(long, global = true)]
    pub clusters: Option<usize>,
    /// Run seed: sets both the mock-backend seed and the clustering seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Generation backend base URL (selects the HTTP backend).
    #[arg(long = "backend-url", global = true)]
    pub backend_url: Option<String>,
    /// Model name sent to the HTTP backend.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Output directory for traces and reports.
    #[arg(long = "out-dir", global = true)]
    pub out_dir: Option<PathBuf>,
    /// Concurrent expert generations per query.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
}

// ---------------------------------------------------------------------------
// Config file schema
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    paths: FilePaths,
    #[serde(default)]
    backend: FileBackend,
    #[serde(default)]
    routing: FileRouting,
    #[serde(default)]
    run: FileRun,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilePaths {
    registry: Option<PathBuf>,
    profiles: Option<PathBuf>,
    prompts: Option<PathBuf>,
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileBackend {
    kind: Option<String>,
    url: Option<String>,
    model: Option<String>,
    auth_env: Option<String>,
    timeout_secs: Option<u64>,
    dimension: Option<usize>,
    seed: Option<u64>,
    fixtures: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRouting {
    k: Option<usize>,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    tau: Option<f64>,
    clusters: Option<usize>,
    cluster_seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRun {
    parallelism: Option<usize>,
    word_limit: Option<usize>,
    full_token_budget: Option<usize>,
    #[serde(default)]
    completeness_markers: Vec<String>,
    mode: Option<String>,
}

fn env_path(name: &str) -> Option<PathBuf> {
    std::env::var_os(name).map(PathBuf::from)
}

fn anchored(base: Option<&Path>, path: PathBuf) -> PathBuf {
    match base {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path,
    }
}

/// Resolve the effective configuration for this invocation.
pub fn resolve(overrides: &Overrides) -> Result<ResolvedConfig, ConfigError> {
    let config_path = overrides
        .config
        .clone()
        .or_else(|| env_path("CULTURA_CONFIG"));
    let (file, file_dir): (FileConfig, Option<PathBuf>) = match &config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.clone(),
                source,
            })?;
            let parsed = toml::from_str(&text).map_err(|e| ConfigError::Parse {
                path: path.clone(),
                detail: e.to_string(),
            })?;
            let dir = path.parent().map(Path::to_path_buf);
            (parsed, dir)
        }
        None => (FileConfig::default(), None),
    };
    let base = file_dir.as_deref();

    let registry_path = overrides
        .registry
        .clone()
        .or_else(|| env_path("CULTURA_REGISTRY"))
        .or_else(|| file.paths.registry.clone().map(|p| anchored(base, p)))
        .unwrap_or_else(|| PathBuf::from("assets/experts.toml"));
    let profiles_path = overrides
        .profiles
        .clone()
        .or_else(|| env_path("CULTURA_PROFILES"))
        .or_else(|| file.paths.profiles.clone().map(|p| anchored(base, p)))
        .unwrap_or_else(|| PathBuf::from("assets/profiles.toml"));
    let prompts_dir = file
        .paths
        .prompts
        .clone()
        .map(|p| anchored(base, p))
        .unwrap_or_else(|| PathBuf::from("assets/prompts"));
    let out_dir = overrides
        .out_dir
        .clone()
        .or_else(|| env_path("CULTURA_OUT_DIR"))
        .or_else(|| file.paths.out_dir.clone().map(|p| anchored(base, p)))
        .unwrap_or_else(|| PathBuf::from("out"));

    let url_override = overrides
        .backend_url
        .clone()
        .or_else(|| std::env::var("CULTURA_BACKEND_URL").ok());
    let url = url_override.clone().or(file.backend.url);
    // A URL given as a flag or env var selects the HTTP backend outright;
    // otherwise the config file decides, defaulting to mock.
    let kind = if url_override.is_some() {
        BackendKind::Http
    } else {
        match file.backend.kind.as_deref() {
            Some("mock") => BackendKind::Mock,
            Some("http") => BackendKind::Http,
            None => {
                if url.is_some() {
                    BackendKind::Http
                } else {
                    BackendKind::Mock
                }
            }
            Some(other) => {
                return Err(ConfigError::Invalid(format!(
                    "backend.kind must be \"mock\" or \"http\", got {other:?}"
                )))
            }
        }
    };
    if kind == BackendKind::Http && url.is_none() {
        return Err(ConfigError::Invalid(
            "http backend requires a base URL (--backend-url or backend.url)".into(),
        ));
    }

    let seed = overrides.seed.or(file.backend.seed).unwrap_or(42);
    let backend = BackendSettings {
        kind,
        url: url.unwrap_or_default(),
        model: overrides
            .model
            .clone()
            .or_else(|| std::env::var("CULTURA_MODEL").ok())
            .or(file.backend.model)
            .unwrap_or_else(|| "llama3".to_string()),
        auth_env: file
            .backend
            .auth_env
            .unwrap_or_else(|| "CULTURA_API_TOKEN".to_string()),
        timeout_secs: file.backend.timeout_secs.unwrap_or(120),
        dimension: file.backend.dimension,
        seed,
        fixtures: file.backend.fixtures.map(|p| anchored(base, p)),
    };

    let routing = RoutingParams {
        k: overrides.k.or(file.routing.k).unwrap_or(5),
        lambda1: overrides.lambda1.or(file.routing.lambda1).unwrap_or(1.0),
        lambda2: overrides.lambda2.or(file.routing.lambda2).unwrap_or(1.0),
        tau: overrides
            .tau
            .or(file.routing.tau)
            .unwrap_or(f64::NEG_INFINITY),
        num_clusters: overrides.clusters.or(file.routing.clusters).unwrap_or(8),
        cluster_seed: overrides.seed.or(file.routing.cluster_seed).unwrap_or(seed),
    };

    let mode = match overrides.mode {
        Some(mode) => mode,
        None => match file.run.mode.as_deref() {
            Some("baseline") => Mode::Baseline,
            Some("pipeline") | None => Mode::Pipeline,
            Some(other) => {
                return Err(ConfigError::Invalid(format!(
                    "run.mode must be \"pipeline\" or \"baseline\", got {other:?}"
                )))
            }
        },
    };

    let resolved = ResolvedConfig {
        registry_path,
        profiles_path,
        prompts_dir,
        out_dir,
        backend,
        routing,
        parallelism: overrides
            .parallelism
            .or(file.run.parallelism)
            .unwrap_or(4)
            .max(1),
        word_limit: file.run.word_limit.unwrap_or(200),
        full_token_budget: file.run.full_token_budget.unwrap_or(1024),
        completeness_markers: file.run.completeness_markers,
        mode,
    };
    validate(&resolved)?;
    Ok(resolved)
}

fn validate(config: &ResolvedConfig) -> Result<(), ConfigError> {
    for (what, path) in [
        ("registry file", &config.registry_path),
        ("profiles file", &config.profiles_path),
        ("prompt template directory", &config.prompts_dir),
    ] {
        if !path.exists() {
            return Err(ConfigError::MissingPath {
                what,
                path: path.clone(),
            });
        }
    }
    if let Some(fixtures) = &config.backend.fixtures {
        if !fixtures.exists() {
            return Err(ConfigError::MissingPath {
                what: "backend fixtures file",
                path: fixtures.clone(),
            });
        }
    }
    if config.routing.k == 0 {
        return Err(ConfigError::Invalid("k must be at least 1".into()));
    }
    if config.routing.lambda1 < 0.0
        || config.routing.lambda2 < 0.0
        || config.routing.lambda1 + config.routing.lambda2 <= 0.0
    {
        return Err(ConfigError::Invalid(
            "lambda1 and lambda2 must be nonnegative with a positive sum".into(),
        ));
    }
    Ok(())
}
