//! Expert roster and user profile loading, validation, canonical
//! serialization, and the content-hash embedding cache.
//!
//! Rosters and profiles are human-editable TOML documents; the embedding
//! cache is a JSON sidecar keyed by a content hash of (backend fingerprint,
//! dimension, text). Corrupt cache entries are skipped and recomputed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerationBackend};
use crate::rng::fnv1a64;
use crate::vector::{EmbeddingVector, ExpertMatrix};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("roster contains no experts")]
    EmptyRoster,
    #[error("duplicate expert_id {0:?}")]
    DuplicateExpert(String),
    #[error("duplicate profile_id {0:?}")]
    DuplicateProfile(String),
    #[error("expert {expert_id:?}: country {country:?} has no known region and none was given")]
    MissingRegion { expert_id: String, country: String },
    #[error("expert {expert_id:?}: region {given:?} conflicts with {expected:?} for {country:?}")]
    RegionConflict {
        expert_id: String,
        country: String,
        given: String,
        expected: String,
    },
    #[error("expert {expert_id:?}: {detail}")]
    InvalidExpert { expert_id: String, detail: String },
    #[error("profile {profile_id:?}: {detail}")]
    InvalidProfile { profile_id: String, detail: String },
    #[error("expert {expert_id:?} has no embedding; run ensure_embedded first")]
    MissingEmbedding { expert_id: String },
    #[error("embedding backend: {0}")]
    Backend(#[from] BackendError),
    #[error("embedding dimension mismatch for {what}: registry expects {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("persona text is empty for {0:?}")]
    EmptyPersona(String),
}

/// A cultural expert: identity, persona, prompt templates, and an optional
/// cached embedding of the persona text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertProfile {
    pub expert_id: String,
    pub country: String,
    pub region: String,
    pub persona_text: String,
    pub prompt_library: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyAnswer {
    pub question_id: String,
    pub chosen_option: String,
}

/// A simulated user: persona metadata plus survey answers. The canonical
/// serialization of this struct is what gets embedded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub profile_id: String,
    pub country: String,
    #[serde(default)]
    pub demographics: BTreeMap<String, String>,
    #[serde(default)]
    pub survey_answers: Vec<SurveyAnswer>,
    pub persona_text: String,
}

impl UserProfile {
    /// Canonical text form used for embedding: profile_id, country,
    /// demographics sorted by key, answers sorted by question_id, then the
    /// persona text, one field per line.
    pub fn canonical_text(&self) -> String {
        let mut lines = Vec::new();
        lines.push(format!("profile_id: {}", self.profile_id));
        lines.push(format!("country: {}", self.country));
        for (key, value) in &self.demographics {
            lines.push(format!("{key}: {value}"));
        }
        let mut answers = self.survey_answers.clone();
        answers.sort_by(|a, b| a.question_id.cmp(&b.question_id));
        for answer in &answers {
            lines.push(format!("{}: {}", answer.question_id, answer.chosen_option));
        }
        lines.push(self.persona_text.clone());
        lines.join("\n")
    }
}

/// The country -> region table for the default 20-country roster, spanning
/// eight global regions.
pub fn default_region_map() -> BTreeMap<String, String> {
    let pairs = [
        ("United States", "North America"),
        ("Mexico", "North America"),
        ("Brazil", "South America"),
        ("Germany", "Europe"),
        ("France", "Europe"),
        ("Italy", "Europe"),
        ("Spain", "Europe"),
        ("Russia", "Europe"),
        ("Turkey", "Middle East"),
        ("Egypt", "Middle East"),
        ("South Africa", "Africa"),
        ("Kenya", "Africa"),
        ("Nigeria", "Africa"),
        ("China", "East Asia"),
        ("Japan", "East Asia"),
        ("India", "South Asia"),
        ("Vietnam", "Southeast Asia"),
        ("Indonesia", "Southeast Asia"),
        ("Philippines", "Southeast Asia"),
        ("Thailand", "Southeast Asia"),
    ];
    pairs
        .iter()
        .map(|(c, r)| (c.to_string(), r.to_string()))
        .collect()
}

/// Validated, immutable-after-load expert roster.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    experts: Vec<ExpertProfile>,
    region_map: BTreeMap<String, String>,
    dimension: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RosterFile {
    #[serde(default = "default_schema_version")]
    schema_version: u32,
    dimension: usize,
    #[serde(rename = "expert")]
    experts: Vec<ExpertRecord>,
}

fn default_schema_version() -> u32 {
    1
}

#[derive(Debug, Serialize, Deserialize)]
struct ExpertRecord {
    expert_id: String,
    country: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    region: Option<String>,
    persona_text: String,
    prompt_library: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
}

impl Registry {
    pub fn experts(&self) -> &[ExpertProfile] {
        &self.experts
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn region_map(&self) -> &BTreeMap<String, String> {
        &self.region_map
    }

    pub fn region_of(&self, country: &str) -> Option<&str> {
        self.region_map.get(country).map(String::as_str)
    }

    /// The set of region labels known to this registry.
    pub fn region_labels(&self) -> BTreeSet<String> {
        self.region_map.values().cloned().collect()
    }

    pub fn expert_by_id(&self, expert_id: &str) -> Option<&ExpertProfile> {
        self.experts.iter().find(|e| e.expert_id == expert_id)
    }

    /// Assemble the expert matrix in registry order. Every expert must
    /// already carry an embedding.
    pub fn build_expert_matrix(&self) -> Result<ExpertMatrix, RegistryError> {
        let mut rows = Vec::with_capacity(self.experts.len());
        for expert in &self.experts {
            let embedding =
                expert
                    .embedding
                    .clone()
                    .ok_or_else(|| RegistryError::MissingEmbedding {
                        expert_id: expert.expert_id.clone(),
                    })?;
            rows.push(embedding);
        }
        ExpertMatrix::new(rows).map_err(|e| RegistryError::InvalidExpert {
            expert_id: String::new(),
            detail: e.to_string(),
        })
    }

    /// Embed every expert that does not yet have a cached embedding,
    /// consulting (and updating) the sidecar cache when a path is given.
    pub fn ensure_embedded(
        &mut self,
        backend: &dyn GenerationBackend,
        cache_path: Option<&Path>,
    ) -> Result<(), RegistryError> {
        let mut cache = match cache_path {
            Some(p) => EmbeddingCache::load(p),
            None => EmbeddingCache::default(),
        };
        let mut dirty = false;
        for expert in &mut self.experts {
            if expert.embedding.is_some() {
                continue;
            }
            let key = cache_key(&backend.fingerprint(), self.dimension, &expert.persona_text);
            if let Some(vector) = cache.get(&key, self.dimension) {
                expert.embedding = Some(vector);
                continue;
            }
            let vector = embed_expert(expert, backend)?;
            if vector.dimension() != self.dimension {
                return Err(RegistryError::DimensionMismatch {
                    what: format!("expert {:?}", expert.expert_id),
                    expected: self.dimension,
                    got: vector.dimension(),
                });
            }
            cache.insert(key, vector.values().to_vec());
            expert.embedding = Some(vector);
            dirty = true;
        }
        if dirty {
            if let Some(p) = cache_path {
                cache.save_atomic(p).map_err(|source| RegistryError::Io {
                    path: p.to_path_buf(),
                    source,
                })?;
            }
        }
        Ok(())
    }
}

/// Load and validate a roster file.
pub fn load_registry(path: &Path) -> Result<Registry, RegistryError> {
    let text = fs::read_to_string(path).map_err(|source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: RosterFile = toml::from_str(&text).map_err(|e| RegistryError::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    registry_from_file(file)
}

fn registry_from_file(file: RosterFile) -> Result<Registry, RegistryError> {
    if file.experts.is_empty() {
        return Err(RegistryError::EmptyRoster);
    }
    let defaults = default_region_map();
    let mut region_map: BTreeMap<String, String> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    let mut experts = Vec::with_capacity(file.experts.len());

    for record in file.experts {
        if !seen.insert(record.expert_id.clone()) {
            return Err(RegistryError::DuplicateExpert(record.expert_id));
        }
        if record.persona_text.trim().is_empty() {
            return Err(RegistryError::EmptyPersona(record.expert_id));
        }
        if record.prompt_library.is_empty() {
            return Err(RegistryError::InvalidExpert {
                expert_id: record.expert_id,
                detail: "prompt_library is empty".into(),
            });
        }
        let known = defaults.get(&record.country);
        let region = match (&record.region, known) {
            (Some(given), Some(expected)) if given != expected => {
                return Err(RegistryError::RegionConflict {
                    expert_id: record.expert_id,
                    country: record.country,
                    given: given.clone(),
                    expected: expected.clone(),
                });
            }
            (Some(given), _) => given.clone(),
            (None, Some(expected)) => expected.clone(),
            (None, None) => {
                return Err(RegistryError::MissingRegion {
                    expert_id: record.expert_id,
                    country: record.country,
                });
            }
        };
        if let Some(existing) = region_map.get(&record.country) {
            if existing != &region {
                return Err(RegistryError::RegionConflict {
                    expert_id: record.expert_id,
                    country: record.country,
                    given: region,
                    expected: existing.clone(),
                });
            }
        } else {
            region_map.insert(record.country.clone(), region.clone());
        }
        let embedding = match record.embedding {
            None => None,
            Some(values) => {
                if values.len() != file.dimension {
                    return Err(RegistryError::DimensionMismatch {
                        what: format!("expert {:?}", record.expert_id),
                        expected: file.dimension,
                        got: values.len(),
                    });
                }
                Some(
                    EmbeddingVector::new(values).map_err(|e| RegistryError::InvalidExpert {
                        expert_id: record.expert_id.clone(),
                        detail: e.to_string(),
                    })?,
                )
            }
        };
        experts.push(ExpertProfile {
            expert_id: record.expert_id,
            country: record.country,
            region,
            persona_text: record.persona_text,
            prompt_library: record.prompt_library,
            embedding,
        });
    }

    Ok(Registry {
        experts,
        region_map,
        dimension: file.dimension,
    })
}

/// Serialize a registry back to the roster file format, preserving expert
/// order and any cached embeddings.
pub fn save_registry(registry: &Registry, path: &Path) -> Result<(), RegistryError> {
    let file = RosterFile {
        schema_version: 1,
        dimension: registry.dimension,
        experts: registry
            .experts
            .iter()
            .map(|e| ExpertRecord {
                expert_id: e.expert_id.clone(),
                country: e.country.clone(),
                region: Some(e.region.clone()),
                persona_text: e.persona_text.clone(),
                prompt_library: e.prompt_library.clone(),
                embedding: e.embedding.as_ref().map(|v| v.values().to_vec()),
            })
            .collect(),
    };
    let text = toml::to_string_pretty(&file).map_err(|e| RegistryError::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    write_atomic(path, text.as_bytes()).map_err(|source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Embed one expert's persona text. Deterministic for a fixed backend.
pub fn embed_expert(
    expert: &ExpertProfile,
    backend: &dyn GenerationBackend,
) -> Result<EmbeddingVector, RegistryError> {
    if expert.persona_text.trim().is_empty() {
        return Err(RegistryError::EmptyPersona(expert.expert_id.clone()));
    }
    Ok(backend.embed(&expert.persona_text)?)
}

/// Embed a user profile via its canonical serialization.
pub fn embed_user(
    profile: &UserProfile,
    backend: &dyn GenerationBackend,
) -> Result<EmbeddingVector, RegistryError> {
    Ok(backend.embed(&profile.canonical_text())?)
}

// ---------------------------------------------------------------------------
// User profile files
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct ProfilesFile {
    #[serde(default = "default_schema_version")]
    #[allow(dead_code)]
    schema_version: u32,
    #[serde(rename = "profile")]
    profiles: Vec<ProfileRecord>,
}

/// On-disk profile record. Attribute groups (demographic, psychological,
/// lifestyle) are merged into one demographics map at load; duplicate keys
/// across groups are rejected.
#[derive(Debug, Deserialize)]
struct ProfileRecord {
    profile_id: String,
    country: String,
    persona_text: String,
    #[serde(default)]
    demographic: BTreeMap<String, String>,
    #[serde(default)]
    psychological: BTreeMap<String, String>,
    #[serde(default)]
    lifestyle: BTreeMap<String, String>,
    #[serde(default)]
    survey_answers: Vec<SurveyAnswer>,
}

/// Load and validate user profiles.
pub fn load_profiles(path: &Path) -> Result<Vec<UserProfile>, RegistryError> {
    let text = fs::read_to_string(path).map_err(|source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: ProfilesFile = toml::from_str(&text).map_err(|e| RegistryError::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let mut seen = BTreeSet::new();
    let mut profiles = Vec::with_capacity(file.profiles.len());
    for record in file.profiles {
        if !seen.insert(record.profile_id.clone()) {
            return Err(RegistryError::DuplicateProfile(record.profile_id));
        }
        let mut demographics = BTreeMap::new();
        for group in [
            &record.demographic,
            &record.psychological,
            &record.lifestyle,
        ] {
            for (key, value) in group {
                if demographics.insert(key.clone(), value.clone()).is_some() {
                    return Err(RegistryError::InvalidProfile {
                        profile_id: record.profile_id.clone(),
                        detail: format!("attribute {key:?} appears in more than one group"),
                    });
                }
            }
        }
        let mut question_ids = BTreeSet::new();
        for answer in &record.survey_answers {
            if !question_ids.insert(answer.question_id.clone()) {
                return Err(RegistryError::InvalidProfile {
                    profile_id: record.profile_id.clone(),
                    detail: format!("duplicate survey question_id {:?}", answer.question_id),
                });
            }
        }
        profiles.push(UserProfile {
            profile_id: record.profile_id,
            country: record.country,
            demographics,
            survey_answers: record.survey_answers,
            persona_text: record.persona_text,
        });
    }
    Ok(profiles)
}

// ---------------------------------------------------------------------------
// Embedding cache sidecar
// ---------------------------------------------------------------------------

/// Cache key: FNV-1a over backend fingerprint, dimension, and text.
pub fn cache_key(backend_fingerprint: &str, dimension: usize, text: &str) -> String {
    let material = format!("{backend_fingerprint}\u{1}{dimension}\u{1}{text}");
    format!("{:016x}", fnv1a64(material.as_bytes()))
}

/// Content-hash-keyed vector cache. Entries that fail to parse or carry
/// the wrong dimension are treated as absent.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingCache {
    /// Load a cache file; a missing or unreadable file yields an empty
    /// cache, and individually corrupt entries are dropped.
    pub fn load(path: &Path) -> Self {
        let Ok(text) = fs::read_to_string(path) else {
            return Self::default();
        };
        let Ok(raw) = serde_json::from_str::<BTreeMap<String, serde_json::Value>>(&text) else {
            return Self::default();
        };
        let mut entries = BTreeMap::new();
        for (key, value) in raw {
            if let Ok(vector) = serde_json::from_value::<Vec<f64>>(value) {
                if !vector.is_empty() && vector.iter().all(|v| v.is_finite()) {
                    entries.insert(key, vector);
                }
            }
        }
        Self { entries }
    }

    pub fn get(&self, key: &str, dimension: usize) -> Option<EmbeddingVector> {
        let values = self.entries.get(key)?;
        if values.len() != dimension {
            return None;
        }
        EmbeddingVector::new(values.clone()).ok()
    }

    pub fn insert(&mut self, key: String, values: Vec<f64>) {
        self.entries.insert(key, values);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save_atomic(&self, path: &Path) -> Result<(), std::io::Error> {
        let text = serde_json::to_string_pretty(&self.entries).expect("cache serializes");
        write_atomic(path, text.as_bytes())
    }
}

/// Write via a temp file in the same directory, then rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), std::io::Error> {
    let tmp = match path.file_name() {
        Some(name) => {
            let mut n = name.to_os_string();
            n.push(".tmp");
            path.with_file_name(n)
        }
        None => path.with_extension("tmp"),
    };
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Default sidecar location for a roster's embedding cache.
pub fn default_cache_path(roster_path: &Path) -> PathBuf {
    let mut name = roster_path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".embcache.json");
    roster_path.with_file_name(name)
}
