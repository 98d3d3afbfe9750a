//! Acceptance suite: every criterion below prints one `[PASS]` line on
//! success; a failing criterion shows up as a failing test.
//!
//! The routing oracle in `oracle` is an independent line-by-line
//! re-implementation of the selection algorithm (its own centroid, fusion,
//! distance, sort, clustering, and softmax code); it shares nothing with
//! the library implementation it checks.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cultura_core::backend::MockBackend;
use cultura_core::metrics::{
    self, cultural_alignment_score, diversity_entropy, response_completeness, stm_rate,
    summarize_batch, topic_coverage, unique_cultures, MetricsConfig, MetricsReport,
};
use cultura_core::pipeline::{run_baseline, run_pipeline, Depth, PipelineConfig, PromptTemplates};
use cultura_core::registry::{default_region_map, load_profiles, load_registry};
use cultura_core::router::{route, RouterExpert};
use cultura_core::trace::TraceDoc;
use cultura_core::vector::{
    kmeans_centroids, softmax_weights, EmbeddingVector, ExpertMatrix, RoutingParams, TopicMatrix,
};
use cultura_core::RetryPolicy;

const TOL: f64 = 1e-9;

fn workspace_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

// ---------------------------------------------------------------------------
// Deterministic instance generator (test-local, independent of crate rng)
// ---------------------------------------------------------------------------

struct Lcg {
    state: u64,
}

impl Lcg {
    fn new(seed: u64) -> Self {
        Self {
            state: seed
                .wrapping_mul(2862933555777941757)
                .wrapping_add(3037000493),
        }
    }
    fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.state >> 1
    }
    fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64
    }
    fn below(&mut self, bound: u64) -> u64 {
        self.next_u64() % bound
    }
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

struct Instance {
    topics: Vec<Vec<f64>>,
    user: Vec<f64>,
    experts: Vec<Vec<f64>>,
    k: usize,
    lambda1: f64,
    lambda2: f64,
    tau: f64,
    num_clusters: usize,
    cluster_seed: u64,
}

fn random_instance(rng: &mut Lcg) -> Instance {
    let n = 1 + rng.below(10) as usize;
    let d = 1 + rng.below(8) as usize;
    let m = 1 + rng.below(4) as usize;
    let k = 1 + rng.below(n as u64) as usize;
    let num_clusters = 1 + rng.below(n as u64) as usize;
    let mut lambda1 = rng.uniform(0.0, 2.0);
    let mut lambda2 = rng.uniform(0.0, 2.0);
    if lambda1 + lambda2 < 1e-6 {
        lambda1 = 1.0;
        lambda2 = 1.0;
    }
    // Mix disabled thresholds with thresholds low and high enough to
    // exercise both branches.
    let tau = match rng.below(10) {
        0..=2 => f64::NEG_INFINITY,
        3..=5 => rng.uniform(-4.0 * d as f64, 0.0),
        _ => rng.uniform(0.0, 1.0),
    };
    let coord = |rng: &mut Lcg| rng.uniform(-2.0, 2.0);
    Instance {
        topics: (0..m)
            .map(|_| (0..d).map(|_| coord(rng)).collect())
            .collect(),
        user: (0..d).map(|_| coord(rng)).collect(),
        experts: (0..n)
            .map(|_| (0..d).map(|_| coord(rng)).collect())
            .collect(),
        k,
        lambda1,
        lambda2,
        tau,
        num_clusters,
        cluster_seed: rng.next_u64() & 0xffff,
    }
}

// ---------------------------------------------------------------------------
// Independent transliteration of the routing algorithm
// ---------------------------------------------------------------------------

mod oracle {
    pub struct Outcome {
        pub indices: Vec<usize>,
        pub weights: Vec<f64>,
        pub fallback: bool,
        pub pre_fallback_max: f64,
    }

    struct SplitMix {
        state: u64,
    }

    impl SplitMix {
        fn next(&mut self) -> u64 {
            self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = self.state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^ (z >> 31)
        }
    }

    fn neg_l1(experts: &[Vec<f64>], target: &[f64]) -> Vec<f64> {
        experts
            .iter()
            .map(|e| {
                -e.iter()
                    .zip(target)
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            })
            .collect()
    }

    fn top_k(scores: &[f64], k: usize) -> (Vec<f64>, Vec<usize>) {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        order.truncate(k);
        (order.iter().map(|&i| scores[i]).collect(), order)
    }

    fn lloyd(rows: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
        let n = rows.len();
        let d = rows[0].len();
        let mut rng = SplitMix { state: seed };
        let mut pool: Vec<usize> = (0..n).collect();
        let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
        for i in 0..k {
            let j = i + (rng.next() % (n - i) as u64) as usize;
            pool.swap(i, j);
            centroids.push(rows[pool[i]].clone());
        }
        let mut assignment = vec![usize::MAX; n];
        for _ in 0..100 {
            let mut next = vec![0usize; n];
            for (i, row) in rows.iter().enumerate() {
                let mut best = 0;
                let mut best_dist = f64::INFINITY;
                for (c, centroid) in centroids.iter().enumerate() {
                    let dist: f64 = row
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
                let members: Vec<&Vec<f64>> = assignment
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
                    for (m, v) in mean.iter_mut().zip(member.iter()) {
                        *m += v;
                    }
                }
                for m in mean.iter_mut() {
                    *m /= members.len() as f64;
                }
                *centroid = mean;
            }
        }
        centroids
    }

    #[allow(clippy::too_many_arguments)]
    pub fn run(
        topics: &[Vec<f64>],
        user: &[f64],
        experts: &[Vec<f64>],
        k: usize,
        lambda1: f64,
        lambda2: f64,
        tau: f64,
        num_clusters: usize,
        cluster_seed: u64,
    ) -> Outcome {
        let d = user.len();
        let m = topics.len() as f64;
        let mut t_bar = vec![0.0; d];
        for row in topics {
            for (acc, v) in t_bar.iter_mut().zip(row) {
                *acc += v;
            }
        }
        for v in t_bar.iter_mut() {
            *v /= m;
        }

        let mut z = vec![0.0; d];
        for i in 0..d {
            z[i] = (lambda1 * t_bar[i] + lambda2 * user[i]) / (lambda1 + lambda2);
        }

        let scores = neg_l1(experts, &z);
        let (mut s_top, mut indices) = top_k(&scores, k);
        let pre_fallback_max = s_top[0];
        let fallback = pre_fallback_max < tau;
        if fallback {
            let centroids = lloyd(experts, num_clusters, cluster_seed);
            let mut best = 0;
            let mut best_dist = f64::INFINITY;
            for (i, c) in centroids.iter().enumerate() {
                let dist: f64 = user.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist < best_dist {
                    best_dist = dist;
                    best = i;
                }
            }
            let rescored = neg_l1(experts, &centroids[best]);
            let (a, b) = top_k(&rescored, k);
            s_top = a;
            indices = b;
        }

        let s_max = s_top.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = s_top.iter().map(|s| (s - s_max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Outcome {
            indices,
            weights: exps.iter().map(|e| e / total).collect(),
            fallback,
            pre_fallback_max,
        }
    }
}

fn run_library_route(instance: &Instance) -> (Vec<usize>, Vec<f64>, bool) {
    let topics = TopicMatrix::new(
        instance
            .topics
            .iter()
            .map(|r| EmbeddingVector::new(r.clone()).unwrap())
            .collect(),
    )
    .unwrap();
    let user = EmbeddingVector::new(instance.user.clone()).unwrap();
    let matrix = ExpertMatrix::new(
        instance
            .experts
            .iter()
            .map(|r| EmbeddingVector::new(r.clone()).unwrap())
            .collect(),
    )
    .unwrap();
    let ids: Vec<String> = (0..instance.experts.len()).map(|i| i.to_string()).collect();
    let library = vec!["{{query}}".to_string()];
    let views: Vec<RouterExpert<'_>> = ids
        .iter()
        .map(|id| RouterExpert {
            expert_id: id,
            persona_text: "p",
            prompt_library: &library,
        })
        .collect();
    let params = RoutingParams {
        k: instance.k,
        lambda1: instance.lambda1,
        lambda2: instance.lambda2,
        tau: instance.tau,
        num_clusters: instance.num_clusters,
        cluster_seed: instance.cluster_seed,
    };
    let decision = route(Some(&topics), &[], &user, &matrix, &views, &params, "q").unwrap();
    let indices: Vec<usize> = decision
        .activated
        .iter()
        .map(|a| a.expert_id.parse().unwrap())
        .collect();
    let weights: Vec<f64> = decision.activated.iter().map(|a| a.weight).collect();
    (indices, weights, decision.fallback_used)
}

// ---------------------------------------------------------------------------
// C1 + C2: routing oracle equivalence and fallback exactness
// ---------------------------------------------------------------------------

#[test]
fn acceptance_c01_c02_routing_matches_transliteration_oracle() {
    let started = Instant::now();
    let mut rng = Lcg::new(0xC0FFEE);
    let mut fallback_count = 0usize;
    let mut direct_count = 0usize;

    for trial in 0..1000 {
        let instance = random_instance(&mut rng);
        let expected = oracle::run(
            &instance.topics,
            &instance.user,
            &instance.experts,
            instance.k,
            instance.lambda1,
            instance.lambda2,
            instance.tau,
            instance.num_clusters,
            instance.cluster_seed,
        );
        let (indices, weights, fallback_used) = run_library_route(&instance);

        assert_eq!(
            indices, expected.indices,
            "trial {trial}: selected indices diverge from the oracle"
        );
        for (w, e) in weights.iter().zip(&expected.weights) {
            assert!(
                (w - e).abs() < TOL,
                "trial {trial}: weight {w} vs oracle {e}"
            );
        }

        // C2: the fallback fires exactly when the best pre-fallback score
        // is below tau.
        assert_eq!(
            fallback_used, expected.fallback,
            "trial {trial}: fallback flag diverges"
        );
        assert_eq!(
            fallback_used,
            expected.pre_fallback_max < instance.tau,
            "trial {trial}: fallback flag contradicts max(s_top) < tau"
        );
        if fallback_used {
            fallback_count += 1;
        } else {
            direct_count += 1;
        }
    }

    assert!(fallback_count >= 100, "fallback branch under-exercised");
    assert!(direct_count >= 100, "direct branch under-exercised");
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 10,
        "criterion 1 runtime budget exceeded: {elapsed:?}"
    );
    println!(
        "[PASS] C1: route() matches the transliteration oracle on 1000 random instances \
         ({direct_count} direct, {fallback_count} fallback) in {elapsed:?}"
    );
    println!("[PASS] C2: fallback_used <=> max(s_top) < tau held with zero exceptions");
}

// ---------------------------------------------------------------------------
// C3: softmax contract
// ---------------------------------------------------------------------------

#[test]
fn acceptance_c03_softmax_contract() {
    let mut rng = Lcg::new(0xBADA55);
    for _ in 0..1000 {
        let len = 1 + rng.below(10) as usize;
        let scores: Vec<f64> = (0..len).map(|_| rng.uniform(-60.0, 10.0)).collect();
        let weights = softmax_weights(&scores).unwrap();

        let total: f64 = weights.iter().sum();
        assert!((total - 1.0).abs() < TOL, "weights sum {total}");

        let offset = rng.uniform(-100.0, 100.0);
        let shifted: Vec<f64> = scores.iter().map(|s| s + offset).collect();
        let shifted_weights = softmax_weights(&shifted).unwrap();
        for (a, b) in weights.iter().zip(&shifted_weights) {
            assert!((a - b).abs() < TOL, "shift invariance violated");
        }

        for i in 0..len {
            for j in 0..len {
                if scores[i] >= scores[j] {
                    assert!(
                        weights[i] >= weights[j] - TOL,
                        "order preservation violated"
                    );
                }
            }
        }
    }
    println!(
        "[PASS] C3: softmax sums to 1, is shift-invariant, and preserves order on 1000 vectors"
    );
}

// ---------------------------------------------------------------------------
// C4: entropy reference value
// ---------------------------------------------------------------------------

#[test]
fn acceptance_c04_uniform_five_culture_entropy() {
    let cultures: Vec<String> = ["United States", "Vietnam", "India", "Thailand", "China"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let entropy = diversity_entropy(&cultures);
    assert!(
        (entropy - 2.322).abs() <= 0.001,
        "entropy {entropy} differs from 2.322"
    );
    println!("[PASS] C4: five uniformly distributed cultures score entropy {entropy:.3} (2.322 +/- 0.001)");
}

// ---------------------------------------------------------------------------
// C5: metric bounds on randomized inputs
// ---------------------------------------------------------------------------

#[test]
fn acceptance_c05_metric_bounds_randomized() {
    let started = Instant::now();
    let region_map = default_region_map();
    let countries: Vec<&String> = region_map.keys().collect();
    let regions: Vec<&String> = region_map.values().collect();
    let words = [
        "tradition",
        "family",
        "media",
        "ritual",
        "harvest",
        "school",
        "market",
        "festival",
    ];
    let mut rng = Lcg::new(0x51D0);

    for _ in 0..10_000 {
        let topic_count = rng.below(5) as usize;
        let topics: Vec<String> = (0..topic_count)
            .map(|_| words[rng.below(words.len() as u64) as usize].to_string())
            .collect();

        let response_count = rng.below(7) as usize;
        let mut texts = Vec::with_capacity(response_count);
        let mut cultures = Vec::with_capacity(response_count);
        for _ in 0..response_count {
            let mut text = String::new();
            for _ in 0..rng.below(12) {
                text.push_str(words[rng.below(words.len() as u64) as usize]);
                text.push(' ');
            }
            texts.push(text);
            cultures.push(countries[rng.below(countries.len() as u64) as usize].clone());
        }
        let text_refs: Vec<&str> = texts.iter().map(String::as_str).collect();

        let mut relevant = BTreeSet::new();
        for _ in 0..rng.below(4) {
            relevant.insert(regions[rng.below(regions.len() as u64) as usize].clone());
        }
        let markers: Vec<String> = (0..rng.below(3))
            .map(|_| words[rng.below(words.len() as u64) as usize].to_string())
            .collect();

        let cas = cultural_alignment_score(&cultures, &relevant, &region_map).unwrap();
        let stm = stm_rate(&text_refs, &topics);
        let (coverage, _) = topic_coverage(&text_refs, &topics);
        let completeness = response_completeness(&text_refs, &markers);
        assert!((0.0..=1.0).contains(&cas), "cas {cas} out of bounds");
        assert!((0.0..=1.0).contains(&stm), "stm {stm} out of bounds");
        assert!(
            (0.0..=1.0).contains(&coverage),
            "coverage {coverage} out of bounds"
        );
        assert!(
            (0.0..=1.0).contains(&completeness),
            "completeness {completeness} out of bounds"
        );

        let entropy = diversity_entropy(&cultures);
        let unique = unique_cultures(&cultures);
        assert!(entropy >= -TOL);
        if unique >= 1 {
            assert!(
                entropy <= (unique as f64).log2() + TOL,
                "entropy {entropy} exceeds log2({unique})"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 5,
        "criterion 5 runtime budget exceeded: {elapsed:?}"
    );
    println!(
        "[PASS] C5: metric bounds held on 10000 randomized response/topic sets in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// C6: golden end-to-end fixtures
// ---------------------------------------------------------------------------

struct GoldenRun {
    state: cultura_core::GraphState,
    trace: String,
}

fn run_golden(test: &str) -> GoldenRun {
    let dir = workspace_path(&format!("fixtures/{test}"));
    let mut registry = load_registry(&dir.join("experts.toml")).unwrap();
    let profiles = load_profiles(&dir.join("profiles.toml")).unwrap();
    let backend = MockBackend::from_fixture_file(&dir.join("backend.toml"), 8, 42).unwrap();
    registry.ensure_embedded(&backend, None).unwrap();
    let templates = PromptTemplates::load(&workspace_path("assets/prompts")).unwrap();
    let config = PipelineConfig {
        routing: RoutingParams {
            k: 5,
            lambda1: 1.0,
            lambda2: 1.0,
            tau: f64::NEG_INFINITY,
            num_clusters: 8,
            cluster_seed: 7,
        },
        retry: RetryPolicy::none(),
        ..PipelineConfig::default()
    };
    let query = match test {
        "test1" => "How important do you consider it that your neighbors are drug addicts?",
        "test2" => "To what extent do you trust television?",
        "test3" => {
            "Would you agree that being a housewife can be just as fulfilling as having a career?"
        }
        _ => unreachable!(),
    };
    let state = run_pipeline(
        query,
        &profiles[0],
        &registry,
        &backend,
        &templates,
        &config,
    )
    .unwrap_or_else(|e| panic!("{test} pipeline failed: {e}"));
    let trace = TraceDoc::from_state(&state).to_json();

    // Rerun: identical trace bytes.
    let again = run_pipeline(
        query,
        &profiles[0],
        &registry,
        &backend,
        &templates,
        &config,
    )
    .unwrap();
    assert_eq!(
        trace,
        TraceDoc::from_state(&again).to_json(),
        "{test}: reruns must produce byte-identical traces"
    );
    GoldenRun { state, trace }
}

fn culture_set(run: &GoldenRun, depth: Depth) -> BTreeSet<String> {
    run.state
        .expert_responses()
        .iter()
        .filter(|r| r.depth == depth)
        .map(|r| r.culture.clone())
        .collect()
}

fn named(set: &[&str]) -> BTreeSet<String> {
    set.iter().map(|s| s.to_string()).collect()
}

#[test]
fn acceptance_c06_golden_end_to_end() {
    // Test 1: high sensitivity, five full experts.
    let run1 = run_golden("test1");
    let verdict = run1.state.verdict().unwrap();
    assert!(verdict.is_sensitive);
    assert_eq!(verdict.score, 9);
    assert_eq!(run1.state.expert_responses().len(), 5);
    assert_eq!(
        culture_set(&run1, Depth::Full),
        named(&["United States", "Vietnam", "India", "Thailand", "China"])
    );
    assert!(culture_set(&run1, Depth::Brief).is_empty());
    assert!(!run1.state.routing().unwrap().fallback_used);
    let parsed: TraceDoc = serde_json::from_str(&run1.trace).unwrap();
    assert_eq!(parsed.expert_responses.len(), 5);

    // Test 2: low sensitivity, one full expert plus four brief inputs.
    let run2 = run_golden("test2");
    let verdict = run2.state.verdict().unwrap();
    assert!(verdict.is_sensitive);
    assert_eq!(verdict.score, 2);
    assert_eq!(run2.state.expert_responses().len(), 5);
    assert_eq!(culture_set(&run2, Depth::Full), named(&["Germany"]));
    assert_eq!(
        culture_set(&run2, Depth::Brief),
        named(&["United States", "Spain", "India", "Indonesia"])
    );

    // Test 3: high sensitivity, five full experts.
    let run3 = run_golden("test3");
    let verdict = run3.state.verdict().unwrap();
    assert!(verdict.is_sensitive);
    assert_eq!(verdict.score, 8);
    assert_eq!(
        culture_set(&run3, Depth::Full),
        named(&["United States", "India", "Japan", "China", "Philippines"])
    );
    assert!(culture_set(&run3, Depth::Brief).is_empty());

    // Metrics spot-check against the reference values for test 1.
    let dir = workspace_path("fixtures/test1");
    let registry = {
        let mut r = load_registry(&dir.join("experts.toml")).unwrap();
        r.ensure_embedded(&MockBackend::new(8, 42), None).unwrap();
        r
    };
    let report = metrics::score_run(&run1.state, &registry, &MetricsConfig::default()).unwrap();
    assert!((report.diversity_entropy - 2.322).abs() <= 0.001);
    assert_eq!(report.unique_cultures, 5);
    assert_eq!(report.expert_response_count, 5);
    assert!((report.cas - 1.0).abs() < TOL);
    assert!((report.stm_rate - 1.0).abs() < TOL);
    assert!((report.topic_coverage - 1.0).abs() < TOL);

    println!("[PASS] C6: golden fixtures reproduce verdicts 9/2/8, the expected full/brief expert sets, and byte-identical traces");
}

// ---------------------------------------------------------------------------
// C7: baseline shape
// ---------------------------------------------------------------------------

#[test]
fn acceptance_c07_baseline_shape() {
    let backend = MockBackend::new(8, 42);
    let config = PipelineConfig {
        retry: RetryPolicy::none(),
        ..PipelineConfig::default()
    };
    let queries = [
        "How important do you consider it that your neighbors are drug addicts?",
        "To what extent do you trust television?",
        "Would you agree that being a housewife can be just as fulfilling as having a career?",
        "Is a handshake an acceptable greeting everywhere?",
        "Should national holidays be mandatory days off?",
    ];
    for query in queries {
        let state = run_baseline(query, &backend, &config).unwrap();
        assert_eq!(state.expert_responses().len(), 1, "{query}");
        let cultures: Vec<String> = state
            .expert_responses()
            .iter()
            .map(|r| r.culture.clone())
            .collect();
        assert!(unique_cultures(&cultures) <= 1, "{query}");
    }
    println!("[PASS] C7: baseline yields expert_response_count = 1 and unique_cultures <= 1 on every query");
}

// ---------------------------------------------------------------------------
// C8: k-cap on the 20-expert default roster
// ---------------------------------------------------------------------------

fn generic_rules() -> Vec<cultura_core::backend::FixtureRule> {
    use cultura_core::backend::FixtureRule;
    vec![
        FixtureRule {
            stage: "sensitivity".into(),
            contains: vec!["cultural sensitivity judge".into()],
            response: "Culturally Sensitive: Yes\nScore: 5/10\nRationale: synthetic".into(),
        },
        FixtureRule {
            stage: "topics".into(),
            contains: vec!["topic extraction agent".into()],
            response: "Belonging/Authority".into(),
        },
        FixtureRule {
            stage: "planner".into(),
            contains: vec!["planning agent".into()],
            response: "Relevant Regions: Europe, East Asia\nIntent: synthetic".into(),
        },
        FixtureRule {
            stage: "composer".into(),
            contains: vec!["composition agent".into()],
            response: "a synthetic composition".into(),
        },
    ]
}

#[test]
fn acceptance_c08_default_roster_activates_exactly_five() {
    let mut registry = load_registry(&workspace_path("assets/experts.toml")).unwrap();
    assert_eq!(registry.experts().len(), 20);
    let backend = MockBackend::new(1024, 42).with_rules(generic_rules());
    registry.ensure_embedded(&backend, None).unwrap();
    let profiles = load_profiles(&workspace_path("assets/profiles.toml")).unwrap();
    let templates = PromptTemplates::load(&workspace_path("assets/prompts")).unwrap();
    let config = PipelineConfig {
        routing: RoutingParams::default(), // k = 5, clusters = 8
        retry: RetryPolicy::none(),
        ..PipelineConfig::default()
    };
    let queries = [
        "Should children be expected to care for aging parents at home?",
        "Is it acceptable to decline a wedding invitation from a close relative?",
        "To what extent do you trust television?",
    ];
    let mut runs = 0;
    for profile in profiles.iter().take(4) {
        for query in queries {
            let state =
                run_pipeline(query, profile, &registry, &backend, &templates, &config).unwrap();
            assert_eq!(state.routing().unwrap().activated.len(), 5);
            assert_eq!(state.expert_responses().len(), 5);
            runs += 1;
        }
    }
    println!("[PASS] C8: k = 5 against the 20-expert default roster activated exactly 5 experts in all {runs} runs");
}

// ---------------------------------------------------------------------------
// C9: completeness with configured markers
// ---------------------------------------------------------------------------

#[test]
fn acceptance_c09_completeness_with_configured_markers() {
    // Direct operation: all four markers present in every response.
    let markers: Vec<String> = ["(a)", "(b)", "(c)", "(d)"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let texts = [
        "Options weighed: (a) strongly agree, (b) agree, (c) disagree, (d) strongly disagree.",
        "Each of (a), (b), (c), and (d) has cultural weight.",
    ];
    let refs: Vec<&str> = texts.to_vec();
    assert_eq!(response_completeness(&refs, &markers), 1.0);

    // End to end: a marker every fixture response contains.
    let run = run_golden("test1");
    let dir = workspace_path("fixtures/test1");
    let mut registry = load_registry(&dir.join("experts.toml")).unwrap();
    registry
        .ensure_embedded(&MockBackend::new(8, 42), None)
        .unwrap();
    let config = MetricsConfig {
        completeness_markers: vec!["drug addiction".to_string()],
    };
    let report = metrics::score_run(&run.state, &registry, &config).unwrap();
    assert_eq!(report.completeness, 1.0);
    println!(
        "[PASS] C9: response_completeness = 1.000 with configured markers present in all responses"
    );
}

// ---------------------------------------------------------------------------
// C10: batch statistics oracle
// ---------------------------------------------------------------------------

fn synthetic_report(x: f64) -> MetricsReport {
    MetricsReport {
        cas: x, // the x series
        cav: 0.0,
        diversity_entropy: 2.0 * x + 1.0, // y = 2x + 1
        stm_rate: -x,                     // the negated series
        topic_coverage: 1.0,
        covered_topics: 0,
        completeness: 1.0,
        avg_response_length: 0.0,
        length_stddev: 0.0,
        unique_cultures: 0,
        expert_response_count: 1,
        latency_seconds: 0.0,
        gaps: vec![],
        warnings: vec![],
    }
}

#[test]
fn acceptance_c10_batch_statistics_oracle() {
    let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.37 + 0.11).collect();
    let reports: Vec<MetricsReport> = xs.iter().map(|&x| synthetic_report(x)).collect();
    let summary = summarize_batch(&reports);

    // Independent closed-form oracle for mean/std of the x series.
    let n = xs.len() as f64;
    let mean: f64 = xs.iter().sum::<f64>() / n;
    let variance: f64 = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let stat = summary
        .stats
        .iter()
        .find(|s| s.name == "cultural_alignment")
        .unwrap();
    assert!((stat.mean - mean).abs() < TOL);
    assert!((stat.std - variance.sqrt()).abs() < TOL);

    let matrix = summary.correlations.unwrap();
    let index = |name: &str| matrix.names.iter().position(|n| n == name).unwrap();
    let x_i = index("cultural_alignment");
    let y_i = index("diversity_entropy");
    let neg_i = index("stm_rate");
    assert!(
        (matrix.values[x_i][y_i] - 1.0).abs() < TOL,
        "r(x, 2x+1) must be 1"
    );
    assert!(
        (matrix.values[x_i][neg_i] + 1.0).abs() < TOL,
        "r(x, -x) must be -1"
    );
    assert!((matrix.values[x_i][x_i] - 1.0).abs() < TOL);
    for i in 0..matrix.values.len() {
        for j in 0..matrix.values.len() {
            assert!((matrix.values[i][j] - matrix.values[j][i]).abs() < TOL);
        }
    }
    println!("[PASS] C10: batch mean/std/Pearson agree with the closed-form oracle (r = 1 for y = 2x + 1)");
}

// ---------------------------------------------------------------------------
// C11: k-means determinism and sanity
// ---------------------------------------------------------------------------

#[test]
fn acceptance_c11_kmeans_determinism_and_sanity() {
    let rows = |data: &[[f64; 2]]| {
        ExpertMatrix::new(
            data.iter()
                .map(|r| EmbeddingVector::new(r.to_vec()).unwrap())
                .collect(),
        )
        .unwrap()
    };

    // Determinism: same seed, bitwise-identical centroids.
    let cloud = rows(&[
        [0.1, 0.9],
        [0.4, 0.2],
        [0.8, 0.7],
        [0.3, 0.5],
        [0.9, 0.1],
        [0.6, 0.6],
    ]);
    for seed in [0u64, 1, 99, 4096] {
        let a = kmeans_centroids(&cloud, 3, seed).unwrap();
        let b = kmeans_centroids(&cloud, 3, seed).unwrap();
        assert_eq!(a, b, "seed {seed} is not reproducible");
    }

    // K = 1: the global mean.
    let single = kmeans_centroids(&cloud, 1, 7).unwrap();
    let mut mean = [0.0f64; 2];
    for row in cloud.rows() {
        mean[0] += row.values()[0];
        mean[1] += row.values()[1];
    }
    mean[0] /= cloud.len() as f64;
    mean[1] /= cloud.len() as f64;
    assert!((single[0].values()[0] - mean[0]).abs() < TOL);
    assert!((single[0].values()[1] - mean[1]).abs() < TOL);

    // Two tight groups separated by far more than 10x their spread.
    let grouped = rows(&[
        [0.0, 0.0],
        [0.4, 0.1],
        [0.1, 0.4],
        [0.3, 0.3],
        [20.0, 20.0],
        [20.4, 20.1],
        [20.1, 20.4],
        [20.3, 20.3],
    ]);
    let group_a = [0.2, 0.2];
    let group_b = [20.2, 20.2];
    for seed in [0u64, 3, 11] {
        let mut centroids = kmeans_centroids(&grouped, 2, seed).unwrap();
        centroids.sort_by(|a, b| a.values()[0].total_cmp(&b.values()[0]));
        assert!(
            (centroids[0].values()[0] - group_a[0]).abs() < 1e-6,
            "seed {seed}"
        );
        assert!(
            (centroids[0].values()[1] - group_a[1]).abs() < 1e-6,
            "seed {seed}"
        );
        assert!(
            (centroids[1].values()[0] - group_b[0]).abs() < 1e-6,
            "seed {seed}"
        );
        assert!(
            (centroids[1].values()[1] - group_b[1]).abs() < 1e-6,
            "seed {seed}"
        );
    }
    println!("[PASS] C11: k-means is seed-reproducible, K=1 recovers the global mean, and separated clusters recover their group means");
}
