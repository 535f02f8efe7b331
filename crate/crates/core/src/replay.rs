//! Scripted transcript replay against the mock provider.
//!
//! A fixture seeds one learner, scripts the mock's replies, and lists
//! sessions of user turns. Each turn may carry expectations about routing,
//! fired rules, profile changes, and prompt text. Replays use an in-memory
//! store and a stepping clock, so two runs of one fixture produce identical
//! reports.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::gateway::{MockProvider, ScriptEntry};
use crate::orchestrator::{Engine, EngineError, SteppingClock};
use crate::profile::{default_profile, LearnerProfile, ProfileError};
use crate::sensory::IntentCategory;
use crate::store::MemoryStore;
use crate::strategy::RuleId;
use crate::updater::{set_pointer, ProfileDelta, UpdateError};

const NUMERIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read fixture {path}: {message}")]
    Load { path: String, message: String },
    #[error("fixture seed: {0}")]
    Seed(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl From<ProfileError> for ReplayError {
    fn from(e: ProfileError) -> Self {
        ReplayError::Seed(e.to_string())
    }
}

impl From<UpdateError> for ReplayError {
    fn from(e: UpdateError) -> Self {
        ReplayError::Seed(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureStudent {
    pub id: String,
    pub grade: i64,
    #[serde(default)]
    pub subjects: Vec<String>,
    #[serde(default)]
    pub goal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeExpect {
    pub path: String,
    #[serde(default)]
    pub from: Option<Value>,
    #[serde(default)]
    pub to: Option<Value>,
    /// Expected numeric difference `to - from`.
    #[serde(default)]
    pub by: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileExpect {
    pub path: String,
    #[serde(default)]
    pub equals: Option<Value>,
    /// For arrays: an element that must be present.
    #[serde(default)]
    pub contains: Option<Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurnExpect {
    pub routed: Option<IntentCategory>,
    pub active_subject: Option<IntentCategory>,
    pub fired_include: Vec<RuleId>,
    pub fired_exclude: Vec<RuleId>,
    pub changed: Vec<ChangeExpect>,
    pub unchanged: Vec<String>,
    pub profile: Vec<ProfileExpect>,
    pub prompt_contains: Vec<String>,
    pub prompt_excludes: Vec<String>,
    pub reply: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureTurn {
    pub user: String,
    #[serde(default)]
    pub expect: TurnExpect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSession {
    pub turns: Vec<FixtureTurn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub student: FixtureStudent,
    /// JSON-pointer overrides applied to the default profile.
    #[serde(default)]
    pub seed: BTreeMap<String, Value>,
    #[serde(default)]
    pub mock_script: Vec<ScriptEntry>,
    pub sessions: Vec<FixtureSession>,
}

impl Fixture {
    pub fn from_json_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn from_path(path: &Path) -> Result<Self, ReplayError> {
        let load = |message: String| ReplayError::Load {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| load(e.to_string()))?;
        Fixture::from_json_str(&text).map_err(|e| load(e.to_string()))
    }

    pub fn seeded_profile(&self) -> Result<LearnerProfile, ReplayError> {
        let s = &self.student;
        let subjects: Vec<&str> = s.subjects.iter().map(String::as_str).collect();
        let base = default_profile(&s.id, s.grade, &subjects, &s.goal)?;
        let mut doc = serde_json::to_value(&base).map_err(|e| ReplayError::Seed(e.to_string()))?;
        for (path, value) in &self.seed {
            set_pointer(&mut doc, path, value.clone())?;
        }
        let profile: LearnerProfile =
            serde_json::from_value(doc).map_err(|e| ReplayError::Seed(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnRecord {
    pub session: usize,
    pub turn: usize,
    pub user: String,
    pub routed: IntentCategory,
    pub active_subject: IntentCategory,
    pub fired: Vec<RuleId>,
    pub delta: ProfileDelta,
    pub strategy: String,
    pub system_prompt: String,
    pub reply: String,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub fixture: String,
    pub turns: Vec<TurnRecord>,
    pub final_profile: LearnerProfile,
}

impl ReplayReport {
    pub fn failures(&self) -> Vec<String> {
        self.turns
            .iter()
            .flat_map(|t| {
                t.failures
                    .iter()
                    .map(move |f| format!("session {} turn {}: {f}", t.session + 1, t.turn + 1))
            })
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.turns.iter().all(|t| t.failures.is_empty())
    }

    /// Checked expectations, as text.
    pub fn render(&self, show_internals: bool) -> String {
        let mut out = format!("replay {}\n", self.fixture);
        for t in &self.turns {
            out.push_str(&format!(
                "\n[session {} turn {}] routed: {} (companion: {})\nstudent: {}\ncompanion: {}\n",
                t.session + 1,
                t.turn + 1,
                t.routed,
                t.active_subject,
                t.user,
                t.reply
            ));
            if show_internals {
                if !t.delta.is_empty() {
                    out.push_str(&format!("[delta]\n{}\n", t.delta.render()));
                }
                if !t.strategy.is_empty() {
                    out.push_str(&format!("[strategy]\n{}\n", t.strategy));
                }
            }
            for f in &t.failures {
                out.push_str(&format!("FAIL: {f}\n"));
            }
        }
        let failures = self.failures().len();
        out.push_str(&format!(
            "\n{} turn(s), {} failed expectation(s)\n",
            self.turns.len(),
            failures
        ));
        out
    }
}

fn values_match(actual: &Value, expected: &Value) -> bool {
    match (actual.as_f64(), expected.as_f64()) {
        (Some(a), Some(e)) => (a - e).abs() <= NUMERIC_TOLERANCE,
        _ => actual == expected,
    }
}

fn check_turn(
    expect: &TurnExpect,
    record: &TurnRecord,
    profile_doc: &Value,
    failures: &mut Vec<String>,
) {
    if let Some(r) = expect.routed {
        if r != record.routed {
            failures.push(format!("routed {} but expected {r}", record.routed));
        }
    }
    if let Some(a) = expect.active_subject {
        if a != record.active_subject {
            failures.push(format!("companion {} but expected {a}", record.active_subject));
        }
    }
    for rule in &expect.fired_include {
        if !record.fired.contains(rule) {
            failures.push(format!("{rule} did not fire (fired: {:?})", record.fired));
        }
    }
    for rule in &expect.fired_exclude {
        if record.fired.contains(rule) {
            failures.push(format!("{rule} fired unexpectedly"));
        }
    }
    for c in &expect.changed {
        let Some((old, new)) = record.delta.net_change(&c.path) else {
            failures.push(format!("{} did not change", c.path));
            continue;
        };
        if let Some(from) = &c.from {
            if !values_match(&old, from) {
                failures.push(format!("{} started at {old}, expected {from}", c.path));
            }
        }
        if let Some(to) = &c.to {
            if !values_match(&new, to) {
                failures.push(format!("{} ended at {new}, expected {to}", c.path));
            }
        }
        if let Some(by) = c.by {
            match (old.as_f64(), new.as_f64()) {
                (Some(o), Some(n)) if ((n - o) - by).abs() <= NUMERIC_TOLERANCE => {}
                _ => failures.push(format!("{} moved {old} -> {new}, expected step {by}", c.path)),
            }
        }
    }
    for path in &expect.unchanged {
        if let Some((old, new)) = record.delta.net_change(path) {
            failures.push(format!("{path} changed {old} -> {new}, expected no change"));
        }
    }
    for p in &expect.profile {
        let Some(actual) = profile_doc.pointer(&p.path) else {
            failures.push(format!("profile has no {}", p.path));
            continue;
        };
        if let Some(eq) = &p.equals {
            if !values_match(actual, eq) {
                failures.push(format!("profile {} is {actual}, expected {eq}", p.path));
            }
        }
        if let Some(member) = &p.contains {
            let present = actual
                .as_array()
                .is_some_and(|items| items.iter().any(|i| values_match(i, member)));
            if !present {
                failures.push(format!("profile {} = {actual} lacks {member}", p.path));
            }
        }
    }
    for needle in &expect.prompt_contains {
        if !record.system_prompt.contains(needle.as_str()) {
            failures.push(format!("prompt lacks {needle:?}"));
        }
    }
    for needle in &expect.prompt_excludes {
        if record.system_prompt.contains(needle.as_str()) {
            failures.push(format!("prompt contains {needle:?}"));
        }
    }
    if let Some(reply) = &expect.reply {
        if &record.reply != reply {
            failures.push(format!("reply {:?}, expected {reply:?}", record.reply));
        }
    }
}

/// Replays `fixture` on a fresh in-memory engine.
pub async fn run_fixture(fixture: &Fixture) -> Result<ReplayReport, ReplayError> {
    let profile = fixture.seeded_profile()?;
    let store = Arc::new(MemoryStore::new());
    let client = Arc::new(MockProvider::new().with_script(fixture.mock_script.clone()));
    let engine = Engine::builder()
        .clock(Arc::new(SteppingClock::default()))
        .build(store, client);
    engine.register_learner(&profile).await?;
    let id = profile.student_id.clone();

    let mut turns = Vec::new();
    for (si, session) in fixture.sessions.iter().enumerate() {
        let state = engine.open_session(&id).await?;
        for (ti, turn) in session.turns.iter().enumerate() {
            let out = engine.handle_turn(&state.session_id, &turn.user).await?;
            let after = engine.profile(&id)?;
            let doc = serde_json::to_value(&after).map_err(|e| ReplayError::Seed(e.to_string()))?;
            let mut record = TurnRecord {
                session: si,
                turn: ti,
                user: turn.user.clone(),
                routed: out.routed,
                active_subject: out.active_subject,
                fired: out.strategy.fired.clone(),
                delta: out.delta,
                strategy: out.strategy.rendered,
                system_prompt: out.prompt.system_prompt,
                reply: out.reply,
                failures: Vec::new(),
            };
            let mut failures = Vec::new();
            check_turn(&turn.expect, &record, &doc, &mut failures);
            record.failures = failures;
            turns.push(record);
        }
        engine.close_session(&state.session_id).await?;
    }
    Ok(ReplayReport {
        fixture: fixture.name.clone(),
        turns,
        final_profile: engine.profile(&id)?,
    })
}
