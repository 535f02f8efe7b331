//! Learner-profiled study companion engine.
//!
//! Each student message is routed to a subject companion, scanned for
//! profiling signals, folded into a five-dimension learner profile, turned
//! into an adaptive strategy block, and composed into the system prompt of
//! an OpenAI-compatible chat completion.

pub mod profile;
pub mod sensory;
pub mod updater;
pub mod strategy;
pub mod prompt;
pub mod assessment;
pub mod store;
pub mod tools;
pub mod gateway;
pub mod config;
pub mod orchestrator;
pub mod replay;

pub use assessment::{assess_profile, AssessmentConfig, AssessmentReport, AssessmentWeights};
pub use config::{load_or_setup, run_setup_wizard, EngineConfig, Prompter, StudentInfo, WizardStep};
pub use gateway::{
    ChatClient, ChatMessage, GatewayError, MockProvider, MockServer, MockServerConfig,
    OpenAiCompatClient, ProviderCatalog, ProviderConfig, Role,
};
pub use orchestrator::{build_client, Engine, EngineBuilder, EngineError, SessionState, TurnOutcome};
pub use profile::{default_profile, BloomLevel, Dimension, Grade, LearnerProfile, Mood, StudentId, UnitTrait};
pub use prompt::{DetailLevel, PromptBundle, PromptComposer, TeachingStyle};
pub use sensory::{route, IntentCategory, KeywordDictionary};
pub use store::{MemoryCategory, MemoryRecord, MemoryStore, SqliteStore, Store};
pub use strategy::{generate_strategy, RuleId, RuleSet, StrategyBlock};
pub use tools::{eval_expression, ToolRegistry};
pub use updater::{update_profile_from_interaction, FieldChange, ProfileDelta, UpdatePolicy};
