//! Core library: routing kernels, expert registry, generation backends,
//! the agent pipeline, and the alignment metric suite.

pub mod backend;
pub mod metrics;
pub mod pipeline;
pub mod registry;
pub mod rng;
pub mod router;
pub mod template;
pub mod trace;
pub mod vector;

pub use backend::{GenerationBackend, HttpBackend, HttpBackendConfig, MockBackend, RetryPolicy};
pub use metrics::{score_run, summarize_batch, BatchSummary, MetricsConfig, MetricsReport};
pub use pipeline::{
    run_baseline, run_pipeline, GraphState, PipelineConfig, PipelineError, PromptTemplates, RunMode,
};
pub use registry::{load_profiles, load_registry, Registry, UserProfile};
pub use router::{route, ActivatedExpert, RoutingDecision};
pub use trace::TraceDoc;
pub use vector::{EmbeddingVector, ExpertMatrix, RoutingParams, TopicMatrix};
