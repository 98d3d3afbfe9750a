//! Deterministic mock backend for tests, fixtures, and offline demos.
//!
//! Embeddings are a seeded hash of the input text expanded to `d`
//! pseudo-random values in `[0, 1)`: the SplitMix64 stream is seeded with
//! `fnv1a64(text) ^ seed`. Generation is a fixture lookup: the first rule
//! whose `contains` substrings all appear in the prompt wins; with no match
//! the response is a short deterministic tag derived from the prompt hash.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{BackendError, GenerationBackend};
use crate::rng::{fnv1a64, SplitMix64};
use crate::vector::EmbeddingVector;

/// One canned generation rule. `stage` is informational; matching is by
/// substring containment only, in file order.
#[derive(Debug, Clone, Deserialize)]
pub struct FixtureRule {
    #[serde(default)]
    pub stage: String,
    pub contains: Vec<String>,
    pub response: String,
}

#[derive(Debug, Deserialize)]
struct FixtureFile {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    dimension: Option<usize>,
    #[serde(default, rename = "rule")]
    rules: Vec<FixtureRule>,
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    dimension: usize,
    seed: u64,
    rules: Vec<FixtureRule>,
}

impl MockBackend {
    pub fn new(dimension: usize, seed: u64) -> Self {
        Self {
            dimension,
            seed,
            rules: Vec::new(),
        }
    }

    pub fn with_rules(mut self, rules: Vec<FixtureRule>) -> Self {
        self.rules = rules;
        self
    }

    /// Load rules (and optionally seed/dimension) from a fixture TOML file.
    /// Explicit `dimension`/`seed` arguments act as defaults when the file
    /// omits them.
    pub fn from_fixture_file(
        path: &Path,
        default_dimension: usize,
        default_seed: u64,
    ) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: FixtureFile = toml::from_str(&text)
            .map_err(|e| BackendError::Config(format!("cannot parse {}: {e}", path.display())))?;
        Ok(Self {
            dimension: file.dimension.unwrap_or(default_dimension),
            seed: file.seed.unwrap_or(default_seed),
            rules: file.rules,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl GenerationBackend for MockBackend {
    fn generate(&self, prompt: &str, _max_tokens: usize) -> Result<String, BackendError> {
        for rule in &self.rules {
            if rule.contains.iter().all(|needle| prompt.contains(needle)) {
                return Ok(rule.response.clone());
            }
        }
        Ok(format!("[mock:{:016x}]", fnv1a64(prompt.as_bytes())))
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        let mut stream = SplitMix64::new(fnv1a64(text.as_bytes()) ^ self.seed);
        let values: Vec<f64> = (0..self.dimension).map(|_| stream.next_f64()).collect();
        EmbeddingVector::new(values)
            .map_err(|e| BackendError::Protocol(format!("mock embedding invalid: {e}")))
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn fingerprint(&self) -> String {
        format!("mock:d{}:s{}", self.dimension, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{fnv1a64, SplitMix64};

    #[test]
    fn embed_matches_hash_expansion_oracle() {
        let backend = MockBackend::new(6, 77);
        let vector = backend.embed("hello world").unwrap();
        let mut stream = SplitMix64::new(fnv1a64(b"hello world") ^ 77);
        let expected: Vec<f64> = (0..6).map(|_| stream.next_f64()).collect();
        assert_eq!(vector.values(), expected.as_slice());
    }

    #[test]
    fn embed_is_deterministic_and_text_sensitive() {
        let backend = MockBackend::new(16, 1);
        assert_eq!(backend.embed("a").unwrap(), backend.embed("a").unwrap());
        assert_ne!(backend.embed("a").unwrap(), backend.embed("b").unwrap());
    }

    #[test]
    fn embed_values_in_unit_range() {
        let backend = MockBackend::new(64, 9);
        let v = backend.embed("range check").unwrap();
        assert!(v.values().iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn first_matching_rule_wins() {
        let backend = MockBackend::new(4, 0).with_rules(vec![
            FixtureRule {
                stage: "a".into(),
                contains: vec!["alpha".into(), "beta".into()],
                response: "both".into(),
            },
            FixtureRule {
                stage: "b".into(),
                contains: vec!["alpha".into()],
                response: "just alpha".into(),
            },
        ]);
        assert_eq!(backend.generate("alpha beta", 10).unwrap(), "both");
        assert_eq!(backend.generate("alpha only", 10).unwrap(), "just alpha");
    }

    #[test]
    fn unmatched_prompt_gets_stable_fallback() {
        let backend = MockBackend::new(4, 0);
        let a = backend.generate("no rules here", 10).unwrap();
        let b = backend.generate("no rules here", 10).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("[mock:"));
    }
}
