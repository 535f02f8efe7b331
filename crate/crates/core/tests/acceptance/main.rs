//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod oracles;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::json;

use studymate::gateway::{
    ChatClient, ChatMessage, GatewayError, MockServer, MockServerConfig, OpenAiCompatClient,
    ProviderCatalog, ProviderConfig,
};
use studymate::gateway::mock::DEFAULT_FALLBACK;
use studymate::profile::{default_profile, BloomLevel, Dimension, LearnerProfile, UnitTrait};
use studymate::prompt::{DetailLevel, PromptComposer, TeachingStyle, TemplateSet};
use studymate::replay::{run_fixture, Fixture};
use studymate::sensory::{IntentCategory, KeywordDictionary};
use studymate::store::{SqliteStore, Store};
use studymate::strategy::{generate_strategy, RuleSet};
use studymate::tools::eval_expression;
use studymate::updater::{update_profile_from_interaction, UpdatePolicy};

type Check = Result<String, String>;

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn strategy_truth_table() -> Check {
    let rules = RuleSet::default();
    let grid_size = oracles::EFFICACY_GRID.len()
        * oracles::MOTIVATION_GRID.len()
        * oracles::WEAK_GRID.len()
        * BloomLevel::ALL.len()
        * oracles::PREF_GRID.len();
    let mut profiles = Vec::with_capacity(grid_size);
    for (e, eff) in oracles::EFFICACY_GRID.iter().enumerate() {
        for (m, mot) in oracles::MOTIVATION_GRID.iter().enumerate() {
            for (w, weak) in oracles::WEAK_GRID.iter().enumerate() {
                for (b, bloom) in BloomLevel::ALL.iter().enumerate() {
                    for (p, pref) in oracles::PREF_GRID.iter().enumerate() {
                        let mut prof = default_profile("grid", 5, &[], "").unwrap();
                        prof.emotional.self_efficacy = UnitTrait::new(*eff).unwrap();
                        prof.emotional.motivation = UnitTrait::new(*mot).unwrap();
                        for i in 0..*weak {
                            prof.mark_weak_topic(&format!("topic-{i}"));
                        }
                        prof.cognitive.bloom_level = *bloom;
                        prof.metacognitive.preferred_strategy = *pref;
                        profiles.push((prof, oracles::expected_rules(e, m, w, b, p)));
                    }
                }
            }
        }
    }
    ensure!(profiles.len() == grid_size, "grid has {} profiles", profiles.len());

    let start = Instant::now();
    let blocks: Vec<_> = profiles.iter().map(|(p, _)| rules.generate(p)).collect();
    let elapsed = start.elapsed();

    for ((profile, expected), block) in profiles.iter().zip(&blocks) {
        let got: Vec<&str> = block.fired.iter().map(|r| r.code()).collect();
        ensure!(
            &got == expected,
            "efficacy {} motivation {} weak {} bloom {} pref {:?}: fired {got:?}, expected {expected:?}",
            profile.emotional.self_efficacy.value(),
            profile.emotional.motivation.value(),
            profile.cognitive.weak_topics.len(),
            profile.cognitive.bloom_level,
            profile.metacognitive.preferred_strategy
        );
    }
    ensure!(elapsed < std::time::Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!(
        "{grid_size}/{grid_size} match, boundaries silent, {:.2} ms",
        elapsed.as_secs_f64() * 1e3
    ))
}

fn strategy_listing() -> Check {
    let golden_path = manifest_dir().join("tests/golden/strategy_listing.txt");
    let golden = std::fs::read_to_string(&golden_path).map_err(|e| e.to_string())?;
    let mut p = default_profile("listing", 4, &["math"], "").unwrap();
    p.emotional.self_efficacy = UnitTrait::new(0.25).unwrap();
    p.cognitive.bloom_level = BloomLevel::Apply;
    p.metacognitive.preferred_strategy = studymate::profile::StrategyPreference::Guided;
    let block = generate_strategy(&p);
    let codes: Vec<&str> = block.fired.iter().map(|r| r.code()).collect();
    ensure!(codes == ["R1", "R5", "R6"], "fired {codes:?}");
    ensure!(
        block.rendered == golden,
        "rendered block differs from golden file:\n{}\n---\n{golden}",
        block.rendered
    );
    let bullets = block.rendered.lines().filter(|l| l.starts_with("- ")).count();
    ensure!(bullets == 3, "{bullets} bullets");
    Ok("R1, R5, R6 rendered byte-identical to golden listing".into())
}

async fn case_replays() -> Check {
    let mut summary = Vec::new();
    for n in 1..=5 {
        let path = manifest_dir().join(format!("fixtures/case{n}.json"));
        let fixture = Fixture::from_path(&path).map_err(|e| e.to_string())?;
        let first = run_fixture(&fixture).await.map_err(|e| e.to_string())?;
        ensure!(
            first.passed(),
            "case{n}: {}",
            first.failures().join("; ")
        );
        let second = run_fixture(&fixture).await.map_err(|e| e.to_string())?;
        let (a, b) = (
            serde_json::to_string(&first).unwrap(),
            serde_json::to_string(&second).unwrap(),
        );
        ensure!(a == b, "case{n}: two replays differ");
        summary.push(format!("case{n} {} turns", first.turns.len()));
    }
    Ok(format!("{}, all deterministic", summary.join(", ")))
}

fn profile_fuzz() -> Check {
    let dict = KeywordDictionary::default_english();
    let policy = UpdatePolicy::default();
    let mut rng = StdRng::seed_from_u64(0x5EED_0001);
    let mut changes = 0usize;
    for case in 0..10_000 {
        let mut profile = oracles::random_profile(&mut rng, case);
        let len = rng.random_range(1..=6);
        let messages: Vec<String> = (0..len).map(|_| oracles::random_message(&mut rng)).collect();

        // whole sequence as one interaction
        let (after, delta) = update_profile_from_interaction(&profile, &messages, &dict, &policy);
        ensure!(
            after.cognitive.bloom_level >= profile.cognitive.bloom_level,
            "case {case}: bloom fell from {} to {}",
            profile.cognitive.bloom_level,
            after.cognitive.bloom_level
        );
        for (name, v) in oracles::unit_traits(&after) {
            ensure!((0.0..=1.0).contains(&v), "case {case}: {name} = {v}");
        }
        let replayed = delta.apply(&profile).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(
            serde_json::to_string(&replayed).unwrap() == serde_json::to_string(&after).unwrap(),
            "case {case}: delta replay differs for {messages:?}"
        );
        changes += delta.changes.len();

        // the same messages one interaction at a time
        for msg in &messages {
            let (next, d) = update_profile_from_interaction(&profile, &[msg], &dict, &policy);
            ensure!(
                next.cognitive.bloom_level >= profile.cognitive.bloom_level,
                "case {case}: bloom fell on {msg:?}"
            );
            for (name, v) in oracles::unit_traits(&next) {
                ensure!((0.0..=1.0).contains(&v), "case {case}: {name} = {v} after {msg:?}");
            }
            let replayed = d.apply(&profile).map_err(|e| format!("case {case}: {e}"))?;
            ensure!(
                serde_json::to_string(&replayed).unwrap() == serde_json::to_string(&next).unwrap(),
                "case {case}: per-message delta replay differs for {msg:?}"
            );
            profile = next;
        }
    }
    Ok(format!("10000 sequences, {changes} recorded changes, all invariants hold"))
}

fn calculator_oracle() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5EED_0002);
    let sanity = [
        ("2+3*4", Some(14.0)),
        ("-2*3", Some(-6.0)),
        ("2*-3", Some(-6.0)),
        ("10-4-3", Some(3.0)),
        ("-(1+2)*2", Some(-6.0)),
        ("1/0", None),
        ("(1", None),
    ];
    for (src, want) in sanity {
        ensure!(oracles::shunting_yard(src) == want, "reference evaluator wrong on {src}");
    }
    let mut compared = 0;
    let mut div_zero = 0;
    while compared < 10_000 {
        let expr = oracles::random_expression(&mut rng, 6);
        if expr.chars().count() > studymate::tools::calculator::MAX_INPUT_LEN {
            continue;
        }
        compared += 1;
        let ours = eval_expression(&expr);
        let reference = oracles::shunting_yard(&expr);
        match (ours, reference) {
            (Ok(a), Some(b)) => {
                let scale = a.abs().max(b.abs());
                let agree = (a - b).abs() <= 1e-12 * scale;
                ensure!(
                    agree,
                    "{expr}: calculator {a}, reference {b}"
                );
            }
            (Err(e), None) if !e.is_syntax() => div_zero += 1,
            (Err(e), Some(b)) if !b.is_finite() && !e.is_syntax() => div_zero += 1,
            (ours, reference) => {
                return Err(format!("{expr}: calculator {ours:?}, reference {reference:?}"))
            }
        }
    }
    for bad in ["import os", "a+b", "2;2", "__import__('os').system('ls')", "2**3", "eval(1)", "1e5", "x=1"] {
        match eval_expression(bad) {
            Err(e) if e.is_syntax() => {}
            other => return Err(format!("{bad:?} gave {other:?}")),
        }
    }
    Ok(format!(
        "10000 expressions agree ({div_zero} division-by-zero agreed), injection inputs rejected"
    ))
}

fn persistence() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("profiles.db");
    let mut rng = StdRng::seed_from_u64(0x5EED_0003);
    let profiles: Vec<LearnerProfile> =
        (0..100).map(|i| oracles::random_profile(&mut rng, i)).collect();
    {
        let store = SqliteStore::open(&path).map_err(|e| e.to_string())?;
        for p in &profiles {
            store.save_profile(p).map_err(|e| e.to_string())?;
        }
    }
    let store = SqliteStore::open(&path).map_err(|e| e.to_string())?;
    ensure!(store.profile_count().unwrap() == 100, "row count");
    for p in &profiles {
        let loaded = store
            .load_profile(&p.student_id)
            .map_err(|e| e.to_string())?
            .ok_or_else(|| format!("{} missing", p.student_id))?;
        if &loaded != p {
            return Err(format!(
                "{} changed on round trip:\n{}\n{}",
                p.student_id,
                serde_json::to_string(p).unwrap(),
                serde_json::to_string(&loaded).unwrap()
            ));
        }
    }

    // a row written before `motivation`, `question_total`, and
    // `knowledge_tracing` existed, with one field from a later version
    store
        .put_raw_row(
            "old-row",
            [
                json!({"bloom_level": "understand", "weak_topics": [], "knowledge_state": {}}),
                json!({"session_count": 7, "question_frequency": 1.5, "tool_usage": {}}),
                json!({"current_mood": "curious", "self_efficacy": 0.4, "frustration_count": 2}),
                json!({"self_regulation": 0.6, "preferred_strategy": "guided", "reflection_ability": 0.3}),
                json!({"grade": 4, "subject_focus": ["math"], "learning_goal": "", "future_field": {"x": 1}}),
            ],
            chrono::DateTime::<chrono::Utc>::UNIX_EPOCH,
        )
        .map_err(|e| e.to_string())?;
    let old = store
        .load_profile(&studymate::profile::StudentId::new("old-row").unwrap())
        .map_err(|e| format!("old row: {e}"))?
        .ok_or("old row missing")?;
    ensure!(old.emotional.motivation.value() == 0.5, "motivation default");
    ensure!(old.behavioral.question_total == 0, "question_total default");
    ensure!(old.cognitive.knowledge_tracing.is_empty(), "tracing default");
    ensure!(old.emotional.self_efficacy.value() == 0.4, "kept value");
    ensure!(old.behavioral.session_count == 7, "kept count");
    let doc = old.dimension_json(Dimension::Contextual);
    ensure!(doc["future_field"] == json!({"x": 1}), "unknown field dropped");
    Ok("100 random profiles intact after reopen, legacy row loads with defaults".into())
}

const CONSTRAINTS: [&str; 7] = [
    "Never give direct answers. Use Socratic questioning to guide self-discovery.",
    "Proceed step by step, confirming understanding at each stage.",
    "Praise specific efforts, not generic traits. Respond to mistakes with effort validation.",
    "Adjust language and examples based on the learner's grade and profile.",
    "Only discuss learning-related topics.",
    "Prompt reflection on the learner's own thinking processes.",
    "Help the learner develop skills for collaborating with AI, not dependency on AI.",
];

fn prompt_composition() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5EED_0004);
    let rules = RuleSet::default();
    let mut composed = 0;
    for i in 0..60 {
        let profile = oracles::random_profile(&mut rng, i);
        let strategy = rules.generate(&profile);
        for style in TeachingStyle::ALL {
            for detail in DetailLevel::ALL {
                let a = PromptComposer::new(TemplateSet::bundled(), style, detail);
                let b = PromptComposer::new(TemplateSet::bundled(), style, detail);
                for subject in IntentCategory::ALL {
                    let first = a.compose(subject, &profile, &strategy);
                    let again = a.compose(subject, &profile, &strategy);
                    let fresh = b.compose(subject, &profile.clone(), &strategy.clone());
                    ensure!(
                        first.system_prompt.as_bytes() == again.system_prompt.as_bytes()
                            && first == fresh,
                        "non-deterministic prompt for {subject}/{style}/{detail}"
                    );
                    for c in CONSTRAINTS {
                        ensure!(
                            first.system_prompt.contains(c),
                            "{subject}/{style}/{detail}: missing constraint {c:?}"
                        );
                    }
                    if !strategy.is_empty() {
                        ensure!(
                            first.system_prompt.contains(&strategy.rendered),
                            "strategy block not injected"
                        );
                    }
                    composed += 1;
                }
            }
        }
    }
    Ok(format!("{composed} prompts carry all seven constraints, byte-identical on repeat"))
}

fn path_of(url: &str) -> &str {
    let after_scheme = url.split_once("://").map_or(url, |(_, rest)| rest);
    after_scheme.find('/').map_or("", |i| &after_scheme[i..])
}

async fn gateway() -> Check {
    let server = MockServer::start(MockServerConfig::default())
        .await
        .map_err(|e| e.to_string())?;
    let catalog = ProviderCatalog::shipped();
    ensure!(catalog.providers.len() == 7, "{} shipped providers", catalog.providers.len());
    let convo = [ChatMessage::system("system prompt"), ChatMessage::user("hello")];

    for shipped in &catalog.providers {
        server.clear_requests();
        let path = path_of(&shipped.base_url).to_string();
        let config = ProviderConfig {
            base_url: format!("{}{path}", server.url()),
            backoff_ms: 1,
            ..shipped.clone()
        };
        let key = format!("test-key-{}", shipped.name);
        let client = OpenAiCompatClient::with_key_lookup(config, |_| Some(key.clone()))
            .map_err(|e| e.to_string())?;
        let reply = client.complete(&convo).await.map_err(|e| format!("{}: {e}", shipped.name))?;
        ensure!(reply.content == DEFAULT_FALLBACK, "{}: reply {:?}", shipped.name, reply.content);
        let log = server.requests();
        ensure!(log.len() == 1, "{}: {} requests", shipped.name, log.len());
        let req = &log[0];
        ensure!(
            req.path == format!("{path}/chat/completions"),
            "{}: path {}",
            shipped.name,
            req.path
        );
        ensure!(
            req.authorization.as_deref() == Some(format!("Bearer {key}").as_str()),
            "{}: auth header",
            shipped.name
        );
        let expected = json!({
            "model": shipped.model,
            "messages": [
                {"role": "system", "content": "system prompt"},
                {"role": "user", "content": "hello"}
            ]
        });
        ensure!(req.body == expected, "{}: body {}", shipped.name, req.body);
    }

    // retry schedule: two injected failures, three retries allowed
    let mut cfg = ProviderConfig::local("retry", &server.url());
    cfg.max_retries = 3;
    cfg.backoff_ms = 1;
    let client = OpenAiCompatClient::new(cfg.clone()).map_err(|e| e.to_string())?;
    server.clear_requests();
    server.fail_next(2);
    client.complete(&convo).await.map_err(|e| format!("retry: {e}"))?;
    ensure!(server.requests().len() == 3, "succeeded after {} attempts", server.requests().len());

    // more failures than the default budget of two retries
    cfg.max_retries = 2;
    let client = OpenAiCompatClient::new(cfg).map_err(|e| e.to_string())?;
    server.clear_requests();
    server.fail_next(10);
    let err = client.complete(&convo).await.unwrap_err();
    ensure!(
        matches!(err, GatewayError::Transport { attempts: 3, .. }),
        "exhausted retries gave {err:?}"
    );
    ensure!(server.requests().len() == 3, "{} attempts", server.requests().len());
    server.fail_next(0);

    let empty: [ChatMessage; 0] = [];
    let client = OpenAiCompatClient::new(ProviderConfig::local("x", &server.url())).unwrap();
    ensure!(
        matches!(client.complete(&empty).await, Err(GatewayError::Precondition(_))),
        "empty request accepted"
    );
    server.shutdown().await;
    Ok("7 shipped configs, one client type, identical request shape; retry schedule honored".into())
}

fn report(name: &str, result: &Check) -> bool {
    match result {
        Ok(detail) => {
            println!("PASS  {name}: {detail}");
            true
        }
        Err(why) => {
            println!("FAIL  {name}: {why}");
            false
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    println!("acceptance criteria");
    let results = [
        ("strategy truth table (full grid)", strategy_truth_table()),
        ("strategy listing golden file", strategy_listing()),
        ("case fixture replay (cases 1-5)", case_replays().await),
        ("profile invariants under fuzzing", profile_fuzz()),
        ("calculator oracle equivalence", calculator_oracle()),
        ("persistence round trip", persistence()),
        ("prompt composition", prompt_composition()),
        ("gateway provider configs and retries", gateway().await),
    ];
    let mut ok = true;
    for (name, result) in &results {
        ok &= report(name, result);
    }
    let passed = results.iter().filter(|(_, r)| r.is_ok()).count();
    println!("{passed}/{} criteria passed", results.len());
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
