//! Validation of the shipped roster, profiles, and prompt templates.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use cultura_core::backend::MockBackend;
use cultura_core::pipeline::PromptTemplates;
use cultura_core::registry::{load_profiles, load_registry, save_registry};

fn workspace_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

#[test]
fn default_roster_covers_twenty_countries_in_eight_regions() {
    let registry = load_registry(&workspace_path("assets/experts.toml")).unwrap();
    assert_eq!(registry.experts().len(), 20);
    assert_eq!(registry.region_map().len(), 20);

    let mut by_region: BTreeMap<&str, usize> = BTreeMap::new();
    for region in registry.region_map().values() {
        *by_region.entry(region).or_insert(0) += 1;
    }
    let expected: BTreeMap<&str, usize> = [
        ("North America", 2),
        ("South America", 1),
        ("Europe", 5),
        ("Middle East", 2),
        ("Africa", 3),
        ("East Asia", 2),
        ("South Asia", 1),
        ("Southeast Asia", 4),
    ]
    .into_iter()
    .collect();
    assert_eq!(by_region, expected);

    // Countries partition: each appears exactly once.
    let countries: BTreeSet<&str> = registry
        .experts()
        .iter()
        .map(|e| e.country.as_str())
        .collect();
    assert_eq!(countries.len(), 20);
}

#[test]
fn default_roster_round_trips_after_embedding() {
    let mut registry = load_registry(&workspace_path("assets/experts.toml")).unwrap();
    registry
        .ensure_embedded(&MockBackend::new(1024, 42), None)
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("roster.toml");
    save_registry(&registry, &path).unwrap();
    assert_eq!(load_registry(&path).unwrap(), registry);
}

#[test]
fn shipped_profiles_and_templates_load() {
    let profiles = load_profiles(&workspace_path("assets/profiles.toml")).unwrap();
    assert!(profiles.len() >= 6);
    let registry = load_registry(&workspace_path("assets/experts.toml")).unwrap();
    for profile in &profiles {
        assert!(
            registry.region_of(&profile.country).is_some(),
            "profile {} has unmapped country {}",
            profile.profile_id,
            profile.country
        );
        assert!(!profile.persona_text.is_empty());
    }
    let templates = PromptTemplates::load(&workspace_path("assets/prompts")).unwrap();
    for (name, body, placeholder) in [
        ("sentopic", &templates.sentopic, "{{query}}"),
        ("topic_extraction", &templates.topic_extraction, "{{query}}"),
        ("planner", &templates.planner, "{{regions}}"),
        ("composer", &templates.composer, "{{expert_sections}}"),
    ] {
        assert!(body.contains(placeholder), "{name} lacks {placeholder}");
    }
}

#[test]
fn golden_fixture_rosters_carry_pinned_embeddings() {
    for test in ["test1", "test2", "test3"] {
        let registry =
            load_registry(&workspace_path(&format!("fixtures/{test}/experts.toml"))).unwrap();
        assert_eq!(registry.experts().len(), 20, "{test}");
        assert_eq!(registry.dimension(), 8, "{test}");
        for expert in registry.experts() {
            assert!(
                expert.embedding.is_some(),
                "{test}: expert {} lacks a pinned embedding",
                expert.expert_id
            );
        }
        // Pinned geometry: matrix assembles without any backend call.
        assert_eq!(registry.build_expert_matrix().unwrap().len(), 20);
    }
}
