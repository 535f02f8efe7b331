//! Session lifecycle and the per-turn pipeline.
//!
//! A turn runs these steps in order: load the profile, route the message,
//! fold the session's not-yet-consumed user messages into the profile and
//! persist it, generate the strategy block, compose the system prompt, and
//! call the model. The profile is saved before the model call, so a failed
//! completion still keeps the learning signals of that message.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, Utc};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::assessment::{assess_profile_with, AssessmentConfig, AssessmentError, AssessmentReport};
use crate::config::{EngineConfig, MOCK_PROVIDER};
use crate::gateway::{ChatClient, ChatMessage, GatewayError, MockProvider, OpenAiCompatClient};
use crate::profile::{LearnerProfile, ProfileError, StudentId};
use crate::prompt::{PromptBundle, PromptComposer, PromptError, TemplateSet};
use crate::sensory::{route, IntentCategory, KeywordDictionary, SensoryError};
use crate::store::{MemoryCategory, MemoryRecord, Store, StoreError};
use crate::strategy::{RuleSet, StrategyBlock, StrategyError};
use crate::tools::{KnowledgeBase, ToolError, ToolRegistry};
use crate::updater::{begin_session, record_tool_use, update_profile_from_interaction, ProfileDelta, UpdatePolicy};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("message text is empty")]
    EmptyMessage,
    #[error("no open session '{0}'")]
    UnknownSession(String),
    #[error("no learner profile for '{0}'")]
    UnknownLearner(String),
    #[error("model call failed: {0}")]
    Provider(#[from] GatewayError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Assessment(#[from] AssessmentError),
    #[error("loading data files: {0}")]
    Data(String),
}

impl From<SensoryError> for EngineError {
    fn from(e: SensoryError) -> Self {
        match e {
            SensoryError::EmptyMessage => EngineError::EmptyMessage,
            other => EngineError::Data(other.to_string()),
        }
    }
}

impl From<PromptError> for EngineError {
    fn from(e: PromptError) -> Self {
        EngineError::Data(e.to_string())
    }
}

impl From<StrategyError> for EngineError {
    fn from(e: StrategyError) -> Self {
        EngineError::Data(e.to_string())
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock: starts at `start` and advances one second per
/// reading.
#[derive(Debug)]
pub struct SteppingClock {
    start: DateTime<Utc>,
    ticks: AtomicI64,
}

impl SteppingClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        SteppingClock {
            start,
            ticks: AtomicI64::new(0),
        }
    }
}

impl Default for SteppingClock {
    fn default() -> Self {
        SteppingClock::new(DateTime::<Utc>::UNIX_EPOCH)
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        let n = self.ticks.fetch_add(1, Ordering::SeqCst);
        self.start + Duration::seconds(n)
    }
}

/// Builds the chat client named by `config.provider`.
pub fn build_client(config: &EngineConfig) -> Result<Arc<dyn ChatClient>, GatewayError> {
    if config.provider == MOCK_PROVIDER {
        return Ok(Arc::new(MockProvider::new()));
    }
    let catalog = config.provider_catalog();
    let provider = catalog
        .get(&config.provider)
        .ok_or_else(|| GatewayError::Config(format!("unknown provider '{}'", config.provider)))?;
    Ok(Arc::new(OpenAiCompatClient::new(provider.clone())?))
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionState {
    pub session_id: String,
    pub student_id: StudentId,
    pub active_subject: IntentCategory,
    /// User and assistant turns, alternating. The system prompt is rebuilt
    /// every turn and is not stored here.
    pub history: Vec<ChatMessage>,
    pub provider: String,
    pub started_at: DateTime<Utc>,
    /// Every user message of the session, including ones whose model call
    /// failed.
    pub user_messages: Vec<String>,
    /// How many of `user_messages` have been folded into the profile.
    pub consumed: usize,
    pub subjects_seen: BTreeSet<IntentCategory>,
    pub last_prompt: Option<PromptBundle>,
    pub last_strategy: Option<StrategyBlock>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TurnOutcome {
    pub reply: String,
    pub routed: IntentCategory,
    /// Companion that answered; differs from `routed` only when the message
    /// carried no subject keywords.
    pub active_subject: IntentCategory,
    pub switched_from: Option<IntentCategory>,
    pub delta: ProfileDelta,
    pub strategy: StrategyBlock,
    pub prompt: PromptBundle,
}

type SessionSlot = Arc<tokio::sync::Mutex<SessionState>>;

pub struct Engine {
    dict: KeywordDictionary,
    composer: PromptComposer,
    rules: RuleSet,
    policy: UpdatePolicy,
    assessment: AssessmentConfig,
    tools: ToolRegistry,
    store: Arc<dyn Store>,
    client: Arc<dyn ChatClient>,
    clock: Arc<dyn Clock>,
    sessions: Mutex<HashMap<String, SessionSlot>>,
    students: Mutex<HashMap<StudentId, Arc<tokio::sync::Mutex<()>>>>,
}

pub struct EngineBuilder {
    dict: KeywordDictionary,
    composer: PromptComposer,
    rules: RuleSet,
    policy: UpdatePolicy,
    assessment: AssessmentConfig,
    tools: ToolRegistry,
    clock: Arc<dyn Clock>,
}

impl Default for EngineBuilder {
    fn default() -> Self {
        EngineBuilder {
            dict: KeywordDictionary::default_english(),
            composer: PromptComposer::default(),
            rules: RuleSet::default(),
            policy: UpdatePolicy::default(),
            assessment: AssessmentConfig::default(),
            tools: ToolRegistry::with_builtins(KnowledgeBase::bundled()),
            clock: Arc::new(SystemClock),
        }
    }
}

impl EngineBuilder {
    /// Applies the data-file overrides, styles, and policy from `config`.
    pub fn from_config(config: &EngineConfig) -> Result<Self, EngineError> {
        config
            .validate()
            .map_err(|e| EngineError::Data(e.to_string()))?;
        let dict = match &config.dictionary_path {
            Some(p) => KeywordDictionary::from_path(p)?,
            None => KeywordDictionary::default_english(),
        };
        let templates = match &config.template_dir {
            Some(d) => TemplateSet::from_dir(d)?,
            None => TemplateSet::bundled(),
        };
        let rules = match &config.rules_path {
            Some(p) => RuleSet::from_path(p)?,
            None => RuleSet::default(),
        };
        Ok(EngineBuilder {
            dict,
            composer: PromptComposer::new(templates, config.teaching_style, config.detail_level),
            rules,
            policy: config.policy,
            assessment: config.assessment.clone(),
            ..EngineBuilder::default()
        })
    }

    pub fn dictionary(mut self, dict: KeywordDictionary) -> Self {
        self.dict = dict;
        self
    }

    pub fn composer(mut self, composer: PromptComposer) -> Self {
        self.composer = composer;
        self
    }

    pub fn policy(mut self, policy: UpdatePolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn tools(mut self, tools: ToolRegistry) -> Self {
        self.tools = tools;
        self
    }

    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn build(self, store: Arc<dyn Store>, client: Arc<dyn ChatClient>) -> Engine {
        Engine {
            dict: self.dict,
            composer: self.composer,
            rules: self.rules,
            policy: self.policy,
            assessment: self.assessment,
            tools: self.tools,
            store,
            client,
            clock: self.clock,
            sessions: Mutex::default(),
            students: Mutex::default(),
        }
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn session_summary(state: &SessionState, profile: &LearnerProfile) -> String {
    let subjects: Vec<&str> = state.subjects_seen.iter().map(|s| s.as_str()).collect();
    let weak: Vec<&str> = profile.cognitive.weak_topics.iter().map(String::as_str).collect();
    format!(
        "Session {} with {} turn(s). Subjects: {}. Bloom level: {}. Mood: {}. Weak topics: {}.",
        state.session_id,
        state.history.len() / 2,
        if subjects.is_empty() { "none".into() } else { subjects.join(", ") },
        profile.cognitive.bloom_level,
        profile.emotional.current_mood.as_str(),
        if weak.is_empty() { "none".into() } else { weak.join(", ") },
    )
}

fn progress_notes(delta: &ProfileDelta) -> Vec<String> {
    let mut notes = Vec::new();
    if let Some((old, new)) = delta.net_change("/cognitive/bloom_level") {
        notes.push(format!("Bloom level moved from {} to {}.", plain(&old), plain(&new)));
    }
    if let Some((old, new)) = delta.net_change("/cognitive/weak_topics") {
        let before: BTreeSet<String> = serde_json::from_value(old).unwrap_or_default();
        let after: BTreeSet<String> = serde_json::from_value(new).unwrap_or_default();
        for topic in after.difference(&before) {
            notes.push(format!("New weak topic: {topic}."));
        }
    }
    notes
}

fn plain(v: &Value) -> String {
    v.as_str().map_or_else(|| v.to_string(), String::from)
}

impl Engine {
    pub fn builder() -> EngineBuilder {
        EngineBuilder::default()
    }

    pub fn store(&self) -> &Arc<dyn Store> {
        &self.store
    }

    pub fn tools(&self) -> &ToolRegistry {
        &self.tools
    }

    pub fn provider_name(&self) -> &str {
        self.client.provider_name()
    }

    fn student_lock(&self, id: &StudentId) -> Arc<tokio::sync::Mutex<()>> {
        lock(&self.students).entry(id.clone()).or_default().clone()
    }

    fn slot(&self, session_id: &str) -> Result<SessionSlot, EngineError> {
        lock(&self.sessions)
            .get(session_id)
            .cloned()
            .ok_or_else(|| EngineError::UnknownSession(session_id.to_string()))
    }

    fn load(&self, id: &StudentId) -> Result<LearnerProfile, EngineError> {
        self.store
            .load_profile(id)?
            .ok_or_else(|| EngineError::UnknownLearner(id.to_string()))
    }

    fn save(&self, profile: &mut LearnerProfile) -> Result<(), EngineError> {
        profile.updated_at = self.clock.now();
        self.store.save_profile(profile)?;
        Ok(())
    }

    fn remember(&self, id: &StudentId, category: MemoryCategory, text: String) -> Result<(), EngineError> {
        let record = MemoryRecord::new(id.clone(), category, text, self.clock.now())?;
        self.store.append_memory(&record)?;
        Ok(())
    }

    /// Stores `profile` unless the student already has one. Returns whether
    /// it was stored.
    pub async fn register_learner(&self, profile: &LearnerProfile) -> Result<bool, EngineError> {
        profile.validate()?;
        let guard = self.student_lock(&profile.student_id);
        let _held = guard.lock().await;
        if self.store.load_profile(&profile.student_id)?.is_some() {
            return Ok(false);
        }
        self.store.save_profile(profile)?;
        let c = &profile.contextual;
        self.remember(
            &profile.student_id,
            MemoryCategory::StudentProfile,
            format!(
                "Grade {}. Subjects: {}. Goal: {}.",
                c.grade,
                if c.subject_focus.is_empty() { "none".into() } else { c.subject_focus.join(", ") },
                if c.learning_goal.is_empty() { "not set" } else { &c.learning_goal },
            ),
        )?;
        Ok(true)
    }

    pub fn profile(&self, student_id: &StudentId) -> Result<LearnerProfile, EngineError> {
        self.load(student_id)
    }

    pub fn assessment(&self, student_id: &StudentId) -> Result<AssessmentReport, EngineError> {
        let profile = self.load(student_id)?;
        Ok(assess_profile_with(&profile, &self.assessment, self.clock.now())?)
    }

    /// Opens a session and counts it in the learner's profile.
    pub async fn open_session(&self, student_id: &StudentId) -> Result<SessionState, EngineError> {
        let guard = self.student_lock(student_id);
        let _held = guard.lock().await;
        let mut profile = begin_session(&self.load(student_id)?);
        self.save(&mut profile)?;
        let state = SessionState {
            session_id: format!("sess-{}", uuid::Uuid::new_v4().simple()),
            student_id: student_id.clone(),
            active_subject: IntentCategory::General,
            history: Vec::new(),
            provider: self.client.provider_name().to_string(),
            started_at: self.clock.now(),
            user_messages: Vec::new(),
            consumed: 0,
            subjects_seen: BTreeSet::new(),
            last_prompt: None,
            last_strategy: None,
        };
        lock(&self.sessions).insert(
            state.session_id.clone(),
            Arc::new(tokio::sync::Mutex::new(state.clone())),
        );
        Ok(state)
    }

    /// Closes a session and appends exactly one session summary record.
    pub async fn close_session(&self, session_id: &str) -> Result<MemoryRecord, EngineError> {
        let slot = lock(&self.sessions)
            .remove(session_id)
            .ok_or_else(|| EngineError::UnknownSession(session_id.to_string()))?;
        let state = slot.lock().await;
        let guard = self.student_lock(&state.student_id);
        let _held = guard.lock().await;
        let profile = self.load(&state.student_id)?;
        let record = MemoryRecord::new(
            state.student_id.clone(),
            MemoryCategory::SessionSummary,
            session_summary(&state, &profile),
            self.clock.now(),
        )?;
        self.store.append_memory(&record)?;
        Ok(record)
    }

    pub async fn session(&self, session_id: &str) -> Result<SessionState, EngineError> {
        Ok(self.slot(session_id)?.lock().await.clone())
    }

    pub async fn last_prompt(&self, session_id: &str) -> Result<Option<PromptBundle>, EngineError> {
        Ok(self.slot(session_id)?.lock().await.last_prompt.clone())
    }

    /// Runs one turn. Turns within a session are serialized.
    pub async fn handle_turn(&self, session_id: &str, text: &str) -> Result<TurnOutcome, EngineError> {
        if text.trim().is_empty() {
            return Err(EngineError::EmptyMessage);
        }
        let slot = self.slot(session_id)?;
        let mut state = slot.lock().await;
        // closed while this turn waited for the session lock
        if !lock(&self.sessions).contains_key(session_id) {
            return Err(EngineError::UnknownSession(session_id.to_string()));
        }

        let (delta, strategy, prompt, routed, switched_from) = {
            let guard = self.student_lock(&state.student_id);
            let _held = guard.lock().await;
            let profile = self.load(&state.student_id)?;

            let routed = route(text, &self.dict)?;
            let previous = state.active_subject;
            if routed != IntentCategory::General || previous == IntentCategory::General {
                state.active_subject = routed;
            }
            let switched_from = (state.active_subject != previous
                && previous != IntentCategory::General)
                .then_some(previous);
            let active = state.active_subject;
            state.subjects_seen.insert(active);

            state.user_messages.push(text.to_string());
            let fresh = &state.user_messages[state.consumed..];
            let (mut profile, delta) =
                update_profile_from_interaction(&profile, fresh, &self.dict, &self.policy);
            state.consumed = state.user_messages.len();
            self.save(&mut profile)?;
            for note in progress_notes(&delta) {
                self.remember(&state.student_id, MemoryCategory::LearningProgress, note)?;
            }

            let strategy = self.rules.generate(&profile);
            let prompt = self.composer.compose(active, &profile, &strategy);
            (delta, strategy, prompt, routed, switched_from)
        };
        state.last_prompt = Some(prompt.clone());
        state.last_strategy = Some(strategy.clone());

        let mut request = Vec::with_capacity(state.history.len() + 2);
        request.push(ChatMessage::system(prompt.system_prompt.clone()));
        request.extend(state.history.iter().cloned());
        request.push(ChatMessage::user(text));
        let reply = self.client.complete(&request).await?;

        state.history.push(ChatMessage::user(text));
        state.history.push(ChatMessage::assistant(reply.content.clone()));
        Ok(TurnOutcome {
            reply: reply.content,
            routed,
            active_subject: state.active_subject,
            switched_from,
            delta,
            strategy,
            prompt,
        })
    }

    /// Runs a registered tool for the session's student and counts the use.
    pub async fn use_tool(
        &self,
        session_id: &str,
        tool: &str,
        args: &Value,
    ) -> Result<(String, ProfileDelta), EngineError> {
        let student = self.slot(session_id)?.lock().await.student_id.clone();
        let output = self.tools.dispatch(tool, args)?;
        let guard = self.student_lock(&student);
        let _held = guard.lock().await;
        let (mut profile, delta) = record_tool_use(&self.load(&student)?, tool);
        self.save(&mut profile)?;
        Ok((output, delta))
    }
}
