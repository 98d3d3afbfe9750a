//! Pure numeric kernels behind expert routing: centroids, fusion, L1
//! scoring, top-k selection, softmax weighting, and seeded k-means.
//!
//! All operations take immutable inputs and return owned results, so they
//! are safe to call concurrently. Scores follow the negative-L1 convention:
//! higher is more similar, zero means an exact match.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

#[derive(Debug, Error, PartialEq)]
pub enum VectorError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("requested {requested} items but only {available} are available")]
    SelectionTooLarge { requested: usize, available: usize },
    #[error("fusion weights must be nonnegative and sum to a positive value")]
    DegenerateWeights,
}

/// A dense embedding vector. Entries are finite and the dimension is > 0;
/// both are enforced at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Empty("embedding vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite("embedding vector"));
        }
        Ok(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

/// Row-stacked matrix of topic embeddings (m >= 1 rows, shared dimension).
#[derive(Debug, Clone, PartialEq)]
pub struct TopicMatrix {
    rows: Vec<EmbeddingVector>,
}

impl TopicMatrix {
    pub fn new(rows: Vec<EmbeddingVector>) -> Result<Self, VectorError> {
        if rows.is_empty() {
            return Err(VectorError::Empty("topic matrix"));
        }
        check_uniform_dimension(&rows)?;
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[EmbeddingVector] {
        &self.rows
    }

    pub fn dimension(&self) -> usize {
        self.rows[0].dimension()
    }
}

/// Row-stacked matrix of expert embeddings. Row `j` corresponds to expert
/// `j` in registry order, and that order is stable for the life of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertMatrix {
    rows: Vec<EmbeddingVector>,
}

impl ExpertMatrix {
    pub fn new(rows: Vec<EmbeddingVector>) -> Result<Self, VectorError> {
        if rows.is_empty() {
            return Err(VectorError::Empty("expert matrix"));
        }
        check_uniform_dimension(&rows)?;
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[EmbeddingVector] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.rows[0].dimension()
    }
}

fn check_uniform_dimension(rows: &[EmbeddingVector]) -> Result<(), VectorError> {
    let d = rows[0].dimension();
    for row in rows {
        if row.dimension() != d {
            return Err(VectorError::DimensionMismatch {
                expected: d,
                got: row.dimension(),
            });
        }
    }
    Ok(())
}

/// Parameters steering expert selection: committee size, fusion weights,
/// similarity threshold (on the negative-L1 scale; `-inf` disables the
/// clustering fallback), cluster count, and clustering seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingParams {
    pub k: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub tau: f64,
    pub num_clusters: usize,
    pub cluster_seed: u64,
}

impl Default for RoutingParams {
    fn default() -> Self {
        Self {
            k: 5,
            lambda1: 1.0,
            lambda2: 1.0,
            tau: f64::NEG_INFINITY,
            num_clusters: 8,
            cluster_seed: 0,
        }
    }
}

impl RoutingParams {
    /// Validate against a pool of `n` experts.
    pub fn validate_for(&self, n: usize) -> Result<(), VectorError> {
        if self.k == 0 || self.k > n {
            return Err(VectorError::SelectionTooLarge {
                requested: self.k,
                available: n,
            });
        }
        if self.num_clusters == 0 || self.num_clusters > n {
            return Err(VectorError::SelectionTooLarge {
                requested: self.num_clusters,
                available: n,
            });
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.lambda1 + self.lambda2 <= 0.0 {
            return Err(VectorError::DegenerateWeights);
        }
        if self.tau.is_nan() {
            return Err(VectorError::NonFinite("tau"));
        }
        Ok(())
    }
}

/// Element-wise mean of the topic rows.
pub fn topic_centroid(topics: &TopicMatrix) -> Result<EmbeddingVector, VectorError> {
    let d = topics.dimension();
    let m = topics.rows().len() as f64;
    let mut acc = vec![0.0; d];
    for row in topics.rows() {
        for (a, v) in acc.iter_mut().zip(row.values()) {
            *a += v;
        }
    }
    for a in acc.iter_mut() {
        *a /= m;
    }
    EmbeddingVector::new(acc)
}

/// Convex interpolation of the topic centroid and the user embedding:
/// `z = (lambda1 * t_bar + lambda2 * u) / (lambda1 + lambda2)`.
pub fn fuse(
    t_bar: &EmbeddingVector,
    user: &EmbeddingVector,
    lambda1: f64,
    lambda2: f64,
) -> Result<EmbeddingVector, VectorError> {
    if t_bar.dimension() != user.dimension() {
        return Err(VectorError::DimensionMismatch {
            expected: t_bar.dimension(),
            got: user.dimension(),
        });
    }
    if lambda1 < 0.0 || lambda2 < 0.0 || lambda1 + lambda2 <= 0.0 {
        return Err(VectorError::DegenerateWeights);
    }
    let denom = lambda1 + lambda2;
    let fused = t_bar
        .values()
        .iter()
        .zip(user.values())
        .map(|(t, u)| (lambda1 * t + lambda2 * u) / denom)
        .collect();
    EmbeddingVector::new(fused)
}

/// Negative L1 distance from `z` to every expert row. Higher is more
/// similar; a score of zero means the row equals `z` exactly.
pub fn l1_scores(experts: &ExpertMatrix, z: &EmbeddingVector) -> Result<Vec<f64>, VectorError> {
    if experts.dimension() != z.dimension() {
        return Err(VectorError::DimensionMismatch {
            expected: experts.dimension(),
            got: z.dimension(),
        });
    }
    Ok(experts
        .rows()
        .iter()
        .map(|row| {
            -row.values()
                .iter()
                .zip(z.values())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        })
        .collect())
}

/// Indices of the `k` largest scores with their scores, sorted descending.
/// Ties break toward the lower index.
pub fn top_k_sorted(scores: &[f64], k: usize) -> Result<(Vec<f64>, Vec<usize>), VectorError> {
    if scores.is_empty() {
        return Err(VectorError::Empty("score vector"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(VectorError::NonFinite("score vector"));
    }
    if k == 0 || k > scores.len() {
        return Err(VectorError::SelectionTooLarge {
            requested: k,
            available: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort by descending score; equal scores keep index order.
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    let top = order.iter().map(|&i| scores[i]).collect();
    Ok((top, order))
}

/// Max-shifted softmax over the selected scores:
/// `w_j = exp(s_j - s_max) / sum_l exp(s_l - s_max)`.
///
/// Weights sum to 1, preserve score order, and are invariant under a
/// uniform shift of all scores.
pub fn softmax_weights(scores_top: &[f64]) -> Result<Vec<f64>, VectorError> {
    if scores_top.is_empty() {
        return Err(VectorError::Empty("score vector"));
    }
    if scores_top.iter().any(|s| !s.is_finite()) {
        return Err(VectorError::NonFinite("score vector"));
    }
    let s_max = scores_top.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores_top.iter().map(|s| (s - s_max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Lloyd's k-means over the expert rows, deterministic for a fixed seed.
///
/// Initialization picks `k` distinct row indices by a partial Fisher-Yates
/// shuffle driven by `SplitMix64(seed)`: at step `i` the pool entry at
/// `i + next_below(n - i)` is swapped into position `i`. Assignment uses
/// squared L2 distance with ties going to the lower centroid index; a
/// cluster that loses all members keeps its previous centroid. Iteration
/// stops when assignments repeat or after 100 rounds.
pub fn kmeans_centroids(
    experts: &ExpertMatrix,
    k: usize,
    seed: u64,
) -> Result<Vec<EmbeddingVector>, VectorError> {
    let n = experts.len();
    if k == 0 || k > n {
        return Err(VectorError::SelectionTooLarge {
            requested: k,
            available: n,
        });
    }
    let d = experts.dimension();
    let rows = experts.rows();

    let mut rng = SplitMix64::new(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    for i in 0..k {
        let j = i + rng.next_below((n - i) as u64) as usize;
        pool.swap(i, j);
        centroids.push(rows[pool[i]].values().to_vec());
    }

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut next = vec![0usize; n];
        for (i, row) in rows.iter().enumerate() {
            let mut best = 0usize;
            let mut best_dist = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let dist: f64 = row
                    .values()
                    .iter()
                    .zip(centroid)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if dist < best_dist {
                    best_dist = dist;
                    best = c;
                }
            }
            next[i] = best;
        }
        if next == assignment {
            break;
        }
        assignment = next;

        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&EmbeddingVector> = assignment
                .iter()
                .zip(rows)
                .filter(|(a, _)| **a == c)
                .map(|(_, r)| r)
                .collect();
            if members.is_empty() {
                continue;
            }
            let mut mean = vec![0.0; d];
            for member in &members {
                for (m, v) in mean.iter_mut().zip(member.values()) {
                    *m += v;
                }
            }
            let count = members.len() as f64;
            for m in mean.iter_mut() {
                *m /= count;
            }
            *centroid = mean;
        }
    }

    centroids.into_iter().map(EmbeddingVector::new).collect()
}

/// The centroid closest to `u` in Euclidean distance; ties go to the
/// lowest index.
pub fn nearest_centroid(
    u: &EmbeddingVector,
    centroids: &[EmbeddingVector],
) -> Result<EmbeddingVector, VectorError> {
    if centroids.is_empty() {
        return Err(VectorError::Empty("centroid list"));
    }
    let mut best = 0usize;
    let mut best_dist = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        if c.dimension() != u.dimension() {
            return Err(VectorError::DimensionMismatch {
                expected: u.dimension(),
                got: c.dimension(),
            });
        }
        let dist: f64 = u
            .values()
            .iter()
            .zip(c.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if dist < best_dist {
            best_dist = dist;
            best = i;
        }
    }
    Ok(centroids[best].clone())
}
