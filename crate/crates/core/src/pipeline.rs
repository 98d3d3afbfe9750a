//! The staged agent pipeline: sensitivity judgment, topic extraction,
//! planning, expert routing, expert response generation, and composition,
//! threaded through a single per-query [`GraphState`].
//!
//! Stages populate the state strictly in order and never overwrite a
//! populated field. Expert generation fans out across threads up to the
//! configured parallelism; everything else is sequential per query.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    embed_with_retry, generate_with_retry, BackendError, GenerationBackend, RetryPolicy,
};
use crate::registry::{Registry, RegistryError, UserProfile};
use crate::router::{route, RouterError, RouterExpert, RoutingDecision};
use crate::template::{self, TemplateError};
use crate::vector::{
    fuse, topic_centroid, EmbeddingVector, RoutingParams, TopicMatrix, VectorError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Embed,
    Sensitivity,
    Topics,
    Plan,
    Route,
    Experts,
    Compose,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Embed => "embed",
            Stage::Sensitivity => "sensitivity",
            Stage::Topics => "topics",
            Stage::Plan => "plan",
            Stage::Route => "route",
            Stage::Experts => "experts",
            Stage::Compose => "compose",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {stage}: invalid input: {detail}")]
    InvalidInput { stage: Stage, detail: String },
    #[error("stage {stage}: backend failure: {source}")]
    Backend {
        stage: Stage,
        #[source]
        source: BackendError,
    },
    #[error("stage {stage}: cannot parse backend output ({detail}); raw output: {raw:?}")]
    Parse {
        stage: Stage,
        detail: String,
        raw: String,
    },
    #[error("stage {stage}: template failure: {source}")]
    Template {
        stage: Stage,
        #[source]
        source: TemplateError,
    },
    #[error("stage {stage}: {source}")]
    Router {
        stage: Stage,
        #[source]
        source: RouterError,
    },
    #[error("stage {stage}: {source}")]
    Registry {
        stage: Stage,
        #[source]
        source: RegistryError,
    },
    #[error("stage {stage}: {source}")]
    Vector {
        stage: Stage,
        #[source]
        source: VectorError,
    },
    #[error("stage {stage}: configuration: {detail}")]
    Config { stage: Stage, detail: String },
    #[error("stage {stage}: stage ordering violated: {detail}")]
    StageOrder { stage: Stage, detail: String },
    #[error("all {attempted} expert generations failed")]
    AllExpertsFailed { attempted: usize },
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Verdict from the sensitivity judge: a yes/no flag and a 0-10 score.
/// The flag is taken from the judge verbatim; flag/score consistency is
/// only a warning (low scores can still be flagged sensitive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitivityVerdict {
    pub is_sensitive: bool,
    pub score: u8,
    pub rationale: String,
}

impl SensitivityVerdict {
    /// Parse a judge reply. Accepts the documented reply format (one
    /// `Culturally Sensitive:` line, one `Score:` value, an optional
    /// `Rationale:` line) with case-insensitive labels; the score may be
    /// written `7` or `7/10`.
    pub fn parse(raw: &str) -> Result<Self, String> {
        let lower = raw.to_lowercase();

        let flag_pos = lower
            .find("culturally sensitive:")
            .ok_or("missing 'Culturally Sensitive:' field")?;
        let flag_text = lower[flag_pos + "culturally sensitive:".len()..]
            .lines()
            .next()
            .unwrap_or("")
            .trim();
        let is_sensitive = if flag_text.starts_with("yes") {
            true
        } else if flag_text.starts_with("no") {
            false
        } else {
            return Err(format!("unrecognized sensitivity flag {flag_text:?}"));
        };

        let score_pos = lower.find("score:").ok_or("missing 'Score:' field")?;
        let score_text = lower[score_pos + "score:".len()..].trim_start();
        let digits: String = score_text
            .chars()
            .take_while(|c| c.is_ascii_digit())
            .collect();
        if digits.is_empty() {
            return Err("score is not a number".into());
        }
        let score: u8 = digits.parse().map_err(|_| "score is not a number")?;
        if score > 10 {
            return Err(format!("score {score} is outside 0-10"));
        }

        let rationale = lower
            .find("rationale:")
            .map(|pos| {
                raw[pos + "rationale:".len()..]
                    .lines()
                    .next()
                    .unwrap_or("")
                    .trim()
                    .to_string()
            })
            .unwrap_or_default();

        Ok(Self {
            is_sensitive,
            score,
            rationale,
        })
    }

    /// The exact reply format the judge prompt requests.
    pub fn render(&self) -> String {
        format!(
            "Culturally Sensitive: {}\nScore: {}/10\nRationale: {}",
            if self.is_sensitive { "Yes" } else { "No" },
            self.score,
            self.rationale
        )
    }

    /// Flag/score agreement under the `score >= 1` convention.
    pub fn score_consistent(&self) -> bool {
        self.is_sensitive == (self.score >= 1)
    }
}

/// Ordered, deduplicated set of topic labels. Order is first occurrence in
/// the raw extraction output.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicSet {
    topics: Vec<String>,
}

impl TopicSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Split a raw extraction reply on `/`, trim items, drop empties, and
    /// collapse duplicates keeping the first occurrence.
    pub fn from_raw_output(raw: &str) -> Self {
        let mut seen = BTreeSet::new();
        let mut topics = Vec::new();
        for item in raw.split('/') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            if seen.insert(item.to_string()) {
                topics.push(item.to_string());
            }
        }
        Self { topics }
    }

    pub fn labels(&self) -> &[String] {
        &self.topics
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }
}

/// Planner output: the culturally relevant regions, the fused context
/// vector (same fusion the router applies, kept for audit), and a short
/// intent summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanContext {
    pub relevant_regions: BTreeSet<String>,
    pub context_vector: EmbeddingVector,
    pub intent_summary: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Depth {
    Full,
    Brief,
}

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Depth::Full => "full",
            Depth::Brief => "brief",
        })
    }
}

/// One expert's contribution, tagged with its culture and region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertResponse {
    pub expert_id: String,
    pub culture: String,
    pub region: String,
    pub depth: Depth,
    pub text: String,
    pub weight: f64,
}

/// Experts at or above this weight answer in full; the rest contribute
/// brief inputs on a quarter of the token budget.
pub fn full_threshold(k: usize) -> f64 {
    1.0 / (k as f64 + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Pipeline,
    Baseline,
}

/// Wall-clock seconds per stage. Zero means the stage did not run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub embed: f64,
    pub sensitivity: f64,
    pub topics: f64,
    pub plan: f64,
    pub route: f64,
    pub experts: f64,
    pub compose: f64,
    pub total: f64,
}

/// The per-query pipeline record. Fields are populated strictly in stage
/// order and can be set only once.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    mode: RunMode,
    query: String,
    profile: Option<UserProfile>,
    user_embedding: Option<EmbeddingVector>,
    verdict: Option<SensitivityVerdict>,
    topics: Option<TopicSet>,
    plan: Option<PlanContext>,
    routing: Option<RoutingDecision>,
    expert_responses: Vec<ExpertResponse>,
    failed_experts: Vec<String>,
    final_response: Option<String>,
    warnings: Vec<String>,
    timings: StageTimings,
}

impl GraphState {
    pub fn new_pipeline(query: &str, profile: UserProfile) -> Self {
        Self {
            mode: RunMode::Pipeline,
            query: query.to_string(),
            profile: Some(profile),
            user_embedding: None,
            verdict: None,
            topics: None,
            plan: None,
            routing: None,
            expert_responses: Vec::new(),
            failed_experts: Vec::new(),
            final_response: None,
            warnings: Vec::new(),
            timings: StageTimings::default(),
        }
    }

    pub fn new_baseline(query: &str) -> Self {
        Self {
            mode: RunMode::Baseline,
            query: query.to_string(),
            profile: None,
            user_embedding: None,
            verdict: None,
            topics: None,
            plan: None,
            routing: None,
            expert_responses: Vec::new(),
            failed_experts: Vec::new(),
            final_response: None,
            warnings: Vec::new(),
            timings: StageTimings::default(),
        }
    }

    pub fn mode(&self) -> RunMode {
        self.mode
    }

    pub fn query(&self) -> &str {
        &self.query
    }

    pub fn profile(&self) -> Option<&UserProfile> {
        self.profile.as_ref()
    }

    pub fn user_embedding(&self) -> Option<&EmbeddingVector> {
        self.user_embedding.as_ref()
    }

    pub fn verdict(&self) -> Option<&SensitivityVerdict> {
        self.verdict.as_ref()
    }

    pub fn topics(&self) -> Option<&TopicSet> {
        self.topics.as_ref()
    }

    pub fn plan_context(&self) -> Option<&PlanContext> {
        self.plan.as_ref()
    }

    pub fn routing(&self) -> Option<&RoutingDecision> {
        self.routing.as_ref()
    }

    pub fn expert_responses(&self) -> &[ExpertResponse] {
        &self.expert_responses
    }

    pub fn failed_experts(&self) -> &[String] {
        &self.failed_experts
    }

    pub fn final_response(&self) -> Option<&str> {
        self.final_response.as_deref()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn timings(&self) -> &StageTimings {
        &self.timings
    }

    pub fn push_warning(&mut self, warning: String) {
        self.warnings.push(warning);
    }

    fn set_once<T>(
        slot: &mut Option<T>,
        value: T,
        stage: Stage,
        field: &str,
    ) -> Result<(), PipelineError> {
        if slot.is_some() {
            return Err(PipelineError::StageOrder {
                stage,
                detail: format!("{field} is already populated"),
            });
        }
        *slot = Some(value);
        Ok(())
    }

    pub fn set_user_embedding(&mut self, value: EmbeddingVector) -> Result<(), PipelineError> {
        Self::set_once(
            &mut self.user_embedding,
            value,
            Stage::Embed,
            "user_embedding",
        )
    }

    pub fn set_verdict(&mut self, value: SensitivityVerdict) -> Result<(), PipelineError> {
        Self::set_once(&mut self.verdict, value, Stage::Sensitivity, "verdict")
    }

    pub fn set_topics(&mut self, value: TopicSet) -> Result<(), PipelineError> {
        Self::set_once(&mut self.topics, value, Stage::Topics, "topics")
    }

    pub fn set_plan(&mut self, value: PlanContext) -> Result<(), PipelineError> {
        Self::set_once(&mut self.plan, value, Stage::Plan, "plan")
    }

    pub fn set_routing(&mut self, value: RoutingDecision) -> Result<(), PipelineError> {
        Self::set_once(&mut self.routing, value, Stage::Route, "routing")
    }

    pub fn set_expert_responses(
        &mut self,
        responses: Vec<ExpertResponse>,
        failed: Vec<String>,
    ) -> Result<(), PipelineError> {
        if !self.expert_responses.is_empty() {
            return Err(PipelineError::StageOrder {
                stage: Stage::Experts,
                detail: "expert_responses is already populated".into(),
            });
        }
        self.expert_responses = responses;
        self.failed_experts = failed;
        Ok(())
    }

    pub fn set_final_response(&mut self, value: String) -> Result<(), PipelineError> {
        if self.expert_responses.is_empty() {
            return Err(PipelineError::StageOrder {
                stage: Stage::Compose,
                detail: "final_response requires expert responses first".into(),
            });
        }
        Self::set_once(
            &mut self.final_response,
            value,
            Stage::Compose,
            "final_response",
        )
    }
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

/// The four agent prompt templates, loaded from one file per agent.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    pub sentopic: String,
    pub topic_extraction: String,
    pub planner: String,
    pub composer: String,
}

impl PromptTemplates {
    /// Load `sentopic.txt`, `topic_extraction.txt`, `planner.txt`, and
    /// `composer.txt` from a directory.
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let read = |name: &str| -> Result<String, PipelineError> {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| PipelineError::Config {
                stage: Stage::Sensitivity,
                detail: format!("cannot read prompt template {}: {e}", path.display()),
            })
        };
        Ok(Self {
            sentopic: read("sentopic.txt")?,
            topic_extraction: read("topic_extraction.txt")?,
            planner: read("planner.txt")?,
            composer: read("composer.txt")?,
        })
    }
}

/// Knobs for one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub routing: RoutingParams,
    /// Token budget for full expert responses; brief responses get 1/4.
    pub full_token_budget: usize,
    /// Word limit the composer instruction requests.
    pub word_limit: usize,
    /// Upper bound on concurrent expert generations.
    pub parallelism: usize,
    pub retry: RetryPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            routing: RoutingParams::default(),
            full_token_budget: 1024,
            word_limit: 200,
            parallelism: 4,
            retry: RetryPolicy::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

const FORMAT_REMINDER: &str = "\n\nRespond in the exact format:\nCulturally Sensitive: <Yes|No>\nScore: <0-10>/10\nRationale: <one line>";

/// Run the LLM-as-judge sensitivity check. A reply that fails to parse is
/// retried once with a format reminder before surfacing a parse error that
/// carries the raw text.
pub fn detect_sensitivity(
    query: &str,
    backend: &dyn GenerationBackend,
    templates: &PromptTemplates,
    retry: &RetryPolicy,
) -> Result<SensitivityVerdict, PipelineError> {
    let stage = Stage::Sensitivity;
    if query.trim().is_empty() {
        return Err(PipelineError::InvalidInput {
            stage,
            detail: "query is empty".into(),
        });
    }
    let prompt = render_single(&templates.sentopic, "query", query, stage)?;
    let raw = generate_with_retry(backend, &prompt, 256, retry)
        .map_err(|source| PipelineError::Backend { stage, source })?;
    match SensitivityVerdict::parse(&raw) {
        Ok(verdict) => Ok(verdict),
        Err(_) => {
            let reminder = format!("{prompt}{FORMAT_REMINDER}");
            let raw = generate_with_retry(backend, &reminder, 256, retry)
                .map_err(|source| PipelineError::Backend { stage, source })?;
            SensitivityVerdict::parse(&raw).map_err(|detail| PipelineError::Parse {
                stage,
                detail,
                raw,
            })
        }
    }
}

/// Ask the extraction agent for slash-separated topics and normalize them.
pub fn extract_topics(
    query: &str,
    backend: &dyn GenerationBackend,
    templates: &PromptTemplates,
    retry: &RetryPolicy,
) -> Result<TopicSet, PipelineError> {
    let stage = Stage::Topics;
    if query.trim().is_empty() {
        return Err(PipelineError::InvalidInput {
            stage,
            detail: "query is empty".into(),
        });
    }
    let prompt = render_single(&templates.topic_extraction, "query", query, stage)?;
    let raw = generate_with_retry(backend, &prompt, 128, retry)
        .map_err(|source| PipelineError::Backend { stage, source })?;
    Ok(TopicSet::from_raw_output(&raw))
}

/// Derive the relevant-region set and the fused context vector.
///
/// The region set always contains the user's own region; the planner
/// prompt may add more, validated against the registry's labels (unknown
/// labels are dropped). The context vector applies the same fusion the
/// router uses, so the two can be cross-checked in traces.
#[allow(clippy::too_many_arguments)]
pub fn plan(
    state: &GraphState,
    topic_matrix: Option<&TopicMatrix>,
    registry: &Registry,
    backend: &dyn GenerationBackend,
    templates: &PromptTemplates,
    retry: &RetryPolicy,
    lambda1: f64,
    lambda2: f64,
) -> Result<PlanContext, PipelineError> {
    let stage = Stage::Plan;
    if state.verdict().is_none() || state.topics().is_none() {
        return Err(PipelineError::StageOrder {
            stage,
            detail: "plan requires verdict and topics".into(),
        });
    }
    let profile = state.profile().ok_or_else(|| PipelineError::StageOrder {
        stage,
        detail: "plan requires a user profile".into(),
    })?;
    let user = state
        .user_embedding()
        .ok_or_else(|| PipelineError::StageOrder {
            stage,
            detail: "plan requires the user embedding".into(),
        })?;

    let user_region = registry
        .region_of(&profile.country)
        .ok_or_else(|| PipelineError::Config {
            stage,
            detail: format!("country {:?} is not in the region map", profile.country),
        })?
        .to_string();

    let labels = registry.region_labels();
    let topics = state.topics().expect("checked above");
    let mut bindings: BTreeMap<&str, String> = BTreeMap::new();
    bindings.insert("query", state.query().to_string());
    bindings.insert("topics", crate::router::topic_summary(topics.labels()));
    bindings.insert("country", profile.country.clone());
    bindings.insert(
        "regions",
        labels.iter().cloned().collect::<Vec<_>>().join(", "),
    );
    let prompt = template::render(&templates.planner, &bindings)
        .map_err(|source| PipelineError::Template { stage, source })?;
    let raw = generate_with_retry(backend, &prompt, 256, retry)
        .map_err(|source| PipelineError::Backend { stage, source })?;

    let mut relevant: BTreeSet<String> = BTreeSet::new();
    relevant.insert(user_region);
    for candidate in parse_region_line(&raw) {
        if labels.contains(&candidate) {
            relevant.insert(candidate);
        }
    }
    let intent_summary = parse_intent_line(&raw);

    let context_vector = match topic_matrix {
        Some(matrix) => {
            let t_bar =
                topic_centroid(matrix).map_err(|source| PipelineError::Vector { stage, source })?;
            fuse(&t_bar, user, lambda1, lambda2)
                .map_err(|source| PipelineError::Vector { stage, source })?
        }
        None => user.clone(),
    };

    Ok(PlanContext {
        relevant_regions: relevant,
        context_vector,
        intent_summary,
    })
}

fn parse_region_line(raw: &str) -> Vec<String> {
    for line in raw.lines() {
        let lower = line.to_lowercase();
        if let Some(pos) = lower.find("relevant regions:") {
            let rest = &line[pos + "relevant regions:".len()..];
            return rest
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
        }
    }
    Vec::new()
}

fn parse_intent_line(raw: &str) -> String {
    for line in raw.lines() {
        let lower = line.to_lowercase();
        if let Some(pos) = lower.find("intent:") {
            return line[pos + "intent:".len()..].trim().to_string();
        }
    }
    String::new()
}

/// Send every activated expert's prompt to the backend, full-depth for
/// weights at or above `full_threshold(k)` and brief (quarter budget)
/// otherwise. Calls fan out across threads up to `config.parallelism`.
/// Experts whose calls fail are excluded; the pipeline proceeds as long as
/// at least one response survives.
pub fn generate_expert_responses(
    decision: &RoutingDecision,
    registry: &Registry,
    backend: &dyn GenerationBackend,
    config: &PipelineConfig,
) -> Result<(Vec<ExpertResponse>, Vec<String>), PipelineError> {
    let stage = Stage::Experts;
    let k = decision.activated.len();
    if k == 0 {
        return Err(PipelineError::StageOrder {
            stage,
            detail: "routing decision has no activated experts".into(),
        });
    }
    let threshold = full_threshold(k);
    let brief_budget = (config.full_token_budget / 4).max(1);

    let mut outcomes: Vec<Option<Result<String, BackendError>>> = Vec::new();
    outcomes.resize_with(k, || None);
    let indices: Vec<usize> = (0..k).collect();
    for batch in indices.chunks(config.parallelism.max(1)) {
        std::thread::scope(|scope| {
            let mut handles = Vec::with_capacity(batch.len());
            for &i in batch {
                let activated = &decision.activated[i];
                let tokens = if activated.weight >= threshold {
                    config.full_token_budget
                } else {
                    brief_budget
                };
                let retry = &config.retry;
                handles.push((
                    i,
                    scope.spawn(move || {
                        generate_with_retry(backend, &activated.prompt, tokens, retry)
                    }),
                ));
            }
            for (i, handle) in handles {
                outcomes[i] = Some(handle.join().unwrap_or_else(|_| {
                    Err(BackendError::Protocol("expert worker panicked".into()))
                }));
            }
        });
    }

    let mut responses = Vec::new();
    let mut failed = Vec::new();
    for (activated, outcome) in decision.activated.iter().zip(outcomes) {
        let expert =
            registry
                .expert_by_id(&activated.expert_id)
                .ok_or_else(|| PipelineError::Config {
                    stage,
                    detail: format!("expert {:?} is not in the registry", activated.expert_id),
                })?;
        match outcome.expect("every slot is filled") {
            Ok(text) => responses.push(ExpertResponse {
                expert_id: activated.expert_id.clone(),
                culture: expert.country.clone(),
                region: expert.region.clone(),
                depth: if activated.weight >= threshold {
                    Depth::Full
                } else {
                    Depth::Brief
                },
                text,
                weight: activated.weight,
            }),
            Err(_) => failed.push(activated.expert_id.clone()),
        }
    }
    if responses.is_empty() {
        return Err(PipelineError::AllExpertsFailed { attempted: k });
    }
    Ok((responses, failed))
}

/// Build the composer prompt: the query, the user's demographic
/// preferences, and every expert response annotated by cultural source,
/// under the configured word limit.
pub fn compose_prompt(
    state: &GraphState,
    templates: &PromptTemplates,
    word_limit: usize,
) -> Result<String, PipelineError> {
    let stage = Stage::Compose;
    if state.expert_responses().is_empty() {
        return Err(PipelineError::StageOrder {
            stage,
            detail: "compose requires at least one expert response".into(),
        });
    }
    let demographics = match state.profile() {
        Some(profile) if !profile.demographics.is_empty() => profile
            .demographics
            .iter()
            .map(|(k, v)| format!("{k}: {v}"))
            .collect::<Vec<_>>()
            .join("; "),
        _ => "unspecified".to_string(),
    };
    let sections = state
        .expert_responses()
        .iter()
        .map(|r| {
            format!(
                "[{} | {} | {} | weight {:.3}]\n{}",
                r.culture, r.region, r.depth, r.weight, r.text
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n");

    let mut bindings: BTreeMap<&str, String> = BTreeMap::new();
    bindings.insert("query", state.query().to_string());
    bindings.insert("demographics", demographics);
    bindings.insert("expert_sections", sections);
    bindings.insert("word_limit", word_limit.to_string());
    template::render(&templates.composer, &bindings)
        .map_err(|source| PipelineError::Template { stage, source })
}

/// Run the composer: one backend call over the structured prompt, plus a
/// cultural-insights footer listing the contributing cultures in response
/// order.
pub fn compose(
    state: &GraphState,
    backend: &dyn GenerationBackend,
    templates: &PromptTemplates,
    config: &PipelineConfig,
) -> Result<String, PipelineError> {
    let stage = Stage::Compose;
    let prompt = compose_prompt(state, templates, config.word_limit)?;
    let body = generate_with_retry(backend, &prompt, config.full_token_budget, &config.retry)
        .map_err(|source| PipelineError::Backend { stage, source })?;

    let mut seen = BTreeSet::new();
    let cultures: Vec<String> = state
        .expert_responses()
        .iter()
        .filter(|r| !r.culture.is_empty())
        .filter(|r| seen.insert(r.culture.clone()))
        .map(|r| r.culture.clone())
        .collect();
    if cultures.is_empty() {
        return Ok(body);
    }
    Ok(format!(
        "{body}\n\nCultural insights: perspectives drawn from {}.",
        cultures.join(", ")
    ))
}

fn render_single(
    template_text: &str,
    key: &'static str,
    value: &str,
    stage: Stage,
) -> Result<String, PipelineError> {
    let mut bindings: BTreeMap<&str, String> = BTreeMap::new();
    bindings.insert(key, value.to_string());
    template::render(template_text, &bindings)
        .map_err(|source| PipelineError::Template { stage, source })
}

// ---------------------------------------------------------------------------
// Full runs
// ---------------------------------------------------------------------------

/// Execute the whole pipeline for one query: embed, judge sensitivity,
/// extract topics, plan, route, generate expert responses, compose.
pub fn run_pipeline(
    query: &str,
    profile: &UserProfile,
    registry: &Registry,
    backend: &dyn GenerationBackend,
    templates: &PromptTemplates,
    config: &PipelineConfig,
) -> Result<GraphState, PipelineError> {
    let run_start = Instant::now();
    let mut state = GraphState::new_pipeline(query, profile.clone());

    // embed
    let stage_start = Instant::now();
    let user =
        embed_with_retry(backend, &profile.canonical_text(), &config.retry).map_err(|source| {
            PipelineError::Backend {
                stage: Stage::Embed,
                source,
            }
        })?;
    if user.dimension() != registry.dimension() {
        return Err(PipelineError::Config {
            stage: Stage::Embed,
            detail: format!(
                "backend produced dimension {}, registry expects {}",
                user.dimension(),
                registry.dimension()
            ),
        });
    }
    state.set_user_embedding(user.clone())?;
    state.timings.embed = stage_start.elapsed().as_secs_f64();

    // sensitivity
    let stage_start = Instant::now();
    let verdict = detect_sensitivity(query, backend, templates, &config.retry)?;
    if !verdict.score_consistent() {
        state.push_warning(format!(
            "sensitivity flag ({}) disagrees with score {}",
            verdict.is_sensitive, verdict.score
        ));
    }
    state.set_verdict(verdict)?;
    state.timings.sensitivity = stage_start.elapsed().as_secs_f64();

    // topics
    let stage_start = Instant::now();
    let topics = extract_topics(query, backend, templates, &config.retry)?;
    state.set_topics(topics.clone())?;
    state.timings.topics = stage_start.elapsed().as_secs_f64();

    let topic_matrix = if topics.is_empty() {
        None
    } else {
        let mut rows = Vec::with_capacity(topics.len());
        for label in topics.labels() {
            let row = embed_with_retry(backend, label, &config.retry).map_err(|source| {
                PipelineError::Backend {
                    stage: Stage::Topics,
                    source,
                }
            })?;
            rows.push(row);
        }
        Some(
            TopicMatrix::new(rows).map_err(|source| PipelineError::Vector {
                stage: Stage::Topics,
                source,
            })?,
        )
    };

    // plan
    let stage_start = Instant::now();
    let plan_context = plan(
        &state,
        topic_matrix.as_ref(),
        registry,
        backend,
        templates,
        &config.retry,
        config.routing.lambda1,
        config.routing.lambda2,
    )?;
    state.set_plan(plan_context)?;
    state.timings.plan = stage_start.elapsed().as_secs_f64();

    // route
    let stage_start = Instant::now();
    let matrix = registry
        .build_expert_matrix()
        .map_err(|source| PipelineError::Registry {
            stage: Stage::Route,
            source,
        })?;
    let views: Vec<RouterExpert<'_>> = registry
        .experts()
        .iter()
        .map(|e| RouterExpert {
            expert_id: &e.expert_id,
            persona_text: &e.persona_text,
            prompt_library: &e.prompt_library,
        })
        .collect();
    let decision = route(
        topic_matrix.as_ref(),
        topics.labels(),
        &user,
        &matrix,
        &views,
        &config.routing,
        query,
    )
    .map_err(|source| PipelineError::Router {
        stage: Stage::Route,
        source,
    })?;
    state.set_routing(decision.clone())?;
    state.timings.route = stage_start.elapsed().as_secs_f64();

    // experts
    let stage_start = Instant::now();
    let (responses, failed) = generate_expert_responses(&decision, registry, backend, config)?;
    state.set_expert_responses(responses, failed)?;
    state.timings.experts = stage_start.elapsed().as_secs_f64();

    // compose
    let stage_start = Instant::now();
    let final_response = compose(&state, backend, templates, config)?;
    state.set_final_response(final_response)?;
    state.timings.compose = stage_start.elapsed().as_secs_f64();

    state.timings.total = run_start.elapsed().as_secs_f64();
    Ok(state)
}

/// Single direct generation with no agents: one backend call, one
/// synthetic response entry with no culture attribution.
pub fn run_baseline(
    query: &str,
    backend: &dyn GenerationBackend,
    config: &PipelineConfig,
) -> Result<GraphState, PipelineError> {
    let run_start = Instant::now();
    if query.trim().is_empty() {
        return Err(PipelineError::InvalidInput {
            stage: Stage::Compose,
            detail: "query is empty".into(),
        });
    }
    let mut state = GraphState::new_baseline(query);
    let text = generate_with_retry(backend, query, config.full_token_budget, &config.retry)
        .map_err(|source| PipelineError::Backend {
            stage: Stage::Compose,
            source,
        })?;
    state.set_topics(TopicSet::empty())?;
    state.set_expert_responses(
        vec![ExpertResponse {
            expert_id: "direct".into(),
            culture: String::new(),
            region: String::new(),
            depth: Depth::Full,
            text: text.clone(),
            weight: 1.0,
        }],
        Vec::new(),
    )?;
    state.set_final_response(text)?;
    state.timings.total = run_start.elapsed().as_secs_f64();
    Ok(state)
}
