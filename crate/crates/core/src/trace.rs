//! Run trace documents: a stable-field-order JSON record of everything
//! semantic that happened in a run, suitable for golden-file comparison.
//!
//! Wall-clock timings are deliberately excluded so that identical inputs
//! produce byte-identical traces; latency lives in the metrics report.

use serde::{Deserialize, Serialize};

use crate::pipeline::{ExpertResponse, GraphState, PlanContext, RunMode, SensitivityVerdict};
use crate::router::RoutingDecision;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDoc {
    pub schema_version: u32,
    pub mode: RunMode,
    pub query: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<SensitivityVerdict>,
    pub topics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub routing: Option<RoutingDecision>,
    pub expert_responses: Vec<ExpertResponse>,
    pub failed_experts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_response: Option<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTrace {
    pub relevant_regions: Vec<String>,
    pub intent_summary: String,
    pub context_vector: Vec<f64>,
}

impl From<&PlanContext> for PlanTrace {
    fn from(plan: &PlanContext) -> Self {
        Self {
            relevant_regions: plan.relevant_regions.iter().cloned().collect(),
            intent_summary: plan.intent_summary.clone(),
            context_vector: plan.context_vector.values().to_vec(),
        }
    }
}

impl TraceDoc {
    pub fn from_state(state: &GraphState) -> Self {
        Self {
            schema_version: TRACE_SCHEMA_VERSION,
            mode: state.mode(),
            query: state.query().to_string(),
            profile_id: state.profile().map(|p| p.profile_id.clone()),
            verdict: state.verdict().cloned(),
            topics: state
                .topics()
                .map(|t| t.labels().to_vec())
                .unwrap_or_default(),
            plan: state.plan_context().map(PlanTrace::from),
            routing: state.routing().cloned(),
            expert_responses: state.expert_responses().to_vec(),
            failed_experts: state.failed_experts().to_vec(),
            final_response: state.final_response().map(str::to_string),
            warnings: state.warnings().to_vec(),
        }
    }

    /// Pretty JSON with a trailing newline; identical states serialize to
    /// identical bytes.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("trace serializes");
        text.push('\n');
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::pipeline::{run_baseline, PipelineConfig};
    use crate::RetryPolicy;

    #[test]
    fn baseline_trace_round_trips_and_is_stable() {
        let backend = MockBackend::new(4, 0);
        let config = PipelineConfig {
            retry: RetryPolicy::none(),
            ..PipelineConfig::default()
        };
        let state = run_baseline("a question", &backend, &config).unwrap();
        let doc = TraceDoc::from_state(&state);
        let json = doc.to_json();
        // Rerun: timings differ, trace bytes must not.
        let again = run_baseline("a question", &backend, &config).unwrap();
        assert_eq!(json, TraceDoc::from_state(&again).to_json());

        let parsed: TraceDoc = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, doc);
        assert_eq!(parsed.mode, RunMode::Baseline);
        assert!(!json.contains("timings"));
    }
}
