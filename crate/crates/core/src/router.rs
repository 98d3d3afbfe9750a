//! Top-k cultural expert routing with a clustering fallback.
//!
//! Selection runs in embedding space: the topic centroid and the user
//! embedding are fused into one query vector, experts are scored by
//! negative L1 distance, and the best k are kept. If even the best score
//! falls below the threshold `tau`, the expert pool is re-clustered, the
//! cluster centroid nearest the user (by L2) replaces the fusion vector,
//! and scoring and selection run again against it. The selected scores are
//! softmax-weighted and each chosen expert receives a rendered prompt.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::template::{self, TemplateError};
use crate::vector::{
    fuse, kmeans_centroids, l1_scores, nearest_centroid, softmax_weights, top_k_sorted,
    topic_centroid, EmbeddingVector, ExpertMatrix, RoutingParams, TopicMatrix, VectorError,
};

#[derive(Debug, Error)]
pub enum RouterError {
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error("prompt template for expert {expert_id:?}: {source}")]
    Template {
        expert_id: String,
        source: TemplateError,
    },
    #[error("expert pool is empty")]
    NoExperts,
    #[error("expert matrix has {matrix} rows but {profiles} expert profiles were given")]
    PoolMismatch { matrix: usize, profiles: usize },
}

/// What the router needs to know about one expert.
#[derive(Debug, Clone)]
pub struct RouterExpert<'a> {
    pub expert_id: &'a str,
    pub persona_text: &'a str,
    pub prompt_library: &'a [String],
}

/// One selected expert: its softmax weight, rendered prompt, and the score
/// that earned the selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivatedExpert {
    pub expert_id: String,
    pub weight: f64,
    pub prompt: String,
    pub score: f64,
    pub via_fallback: bool,
}

/// The full outcome of one routing call, serializable as an audit record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub activated: Vec<ActivatedExpert>,
    pub fallback_used: bool,
    pub fusion_vector: EmbeddingVector,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chosen_centroid: Option<EmbeddingVector>,
}

/// Textual digest of the topic list, used for the `{{topic_summary}}`
/// placeholder. Topics appear in their extraction order.
pub fn topic_summary(topics: &[String]) -> String {
    if topics.is_empty() {
        "no specific sensitive topics were identified".to_string()
    } else {
        topics.join(", ")
    }
}

/// Render the first template of an expert's library with the query, the
/// topic digest, and the expert persona.
pub fn gen_prompt(
    query: &str,
    topics: &[String],
    library: &[String],
    persona_text: &str,
) -> Result<String, TemplateError> {
    let template = library.first().ok_or(TemplateError::EmptyOutput)?;
    let mut bindings: BTreeMap<&str, String> = BTreeMap::new();
    bindings.insert("query", query.to_string());
    bindings.insert("topic_summary", topic_summary(topics));
    bindings.insert("persona", persona_text.to_string());
    template::render(template, &bindings)
}

/// Run the routing algorithm end to end and return exactly `params.k`
/// activated experts.
///
/// `topics` may be `None` when no topics were extracted; the topic matrix
/// then degenerates to a single row equal to the user embedding, making the
/// fusion vector the user embedding itself.
#[allow(clippy::too_many_arguments)]
pub fn route(
    topics: Option<&TopicMatrix>,
    topic_labels: &[String],
    user: &EmbeddingVector,
    expert_matrix: &ExpertMatrix,
    experts: &[RouterExpert<'_>],
    params: &RoutingParams,
    query: &str,
) -> Result<RoutingDecision, RouterError> {
    if experts.is_empty() {
        return Err(RouterError::NoExperts);
    }
    if expert_matrix.len() != experts.len() {
        return Err(RouterError::PoolMismatch {
            matrix: expert_matrix.len(),
            profiles: experts.len(),
        });
    }
    params.validate_for(expert_matrix.len())?;

    let degenerate;
    let topic_matrix = match topics {
        Some(t) => t,
        None => {
            degenerate = TopicMatrix::new(vec![user.clone()])?;
            &degenerate
        }
    };

    let t_bar = topic_centroid(topic_matrix)?;
    let z = fuse(&t_bar, user, params.lambda1, params.lambda2)?;
    let scores = l1_scores(expert_matrix, &z)?;
    let (mut scores_top, mut indices) = top_k_sorted(&scores, params.k)?;

    let fallback_used = scores_top[0] < params.tau;
    let mut chosen_centroid = None;
    if fallback_used {
        let centroids = kmeans_centroids(expert_matrix, params.num_clusters, params.cluster_seed)?;
        let c_star = nearest_centroid(user, &centroids)?;
        let rescored = l1_scores(expert_matrix, &c_star)?;
        let (top, idx) = top_k_sorted(&rescored, params.k)?;
        scores_top = top;
        indices = idx;
        chosen_centroid = Some(c_star);
    }

    let weights = softmax_weights(&scores_top)?;

    let mut activated = Vec::with_capacity(params.k);
    for ((&index, &score), &weight) in indices.iter().zip(&scores_top).zip(&weights) {
        let expert = &experts[index];
        let prompt = gen_prompt(
            query,
            topic_labels,
            expert.prompt_library,
            expert.persona_text,
        )
        .map_err(|source| RouterError::Template {
            expert_id: expert.expert_id.to_string(),
            source,
        })?;
        activated.push(ActivatedExpert {
            expert_id: expert.expert_id.to_string(),
            weight,
            prompt,
            score,
            via_fallback: fallback_used,
        });
    }

    Ok(RoutingDecision {
        activated,
        fallback_used,
        fusion_vector: z,
        chosen_centroid,
    })
}
