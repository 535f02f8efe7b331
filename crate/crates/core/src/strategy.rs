//! Rule-based adaptive strategy engine.
//!
//! Seven fixed rules inspect the profile; every rule that fires contributes
//! one bullet to the instruction block, always in rule order. Predicates
//! live here; the instruction wording lives in a template file so it can
//! be read and edited without touching code.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{BloomLevel, LearnerProfile, StrategyPreference};

const DEFAULT_RULES: &str = include_str!("../data/strategy_rules.json");

pub const LOW_EFFICACY_THRESHOLD: f64 = 0.3;
pub const FRUSTRATION_COUNT_THRESHOLD: u64 = 5;
pub const HIGH_MOTIVATION_THRESHOLD: f64 = 0.8;
pub const WEAK_TOPIC_THRESHOLD: usize = 3;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("strategy templates: rule {0} has no instruction text")]
    MissingRule(RuleId),
    #[error("strategy templates: header is empty")]
    EmptyHeader,
    #[error("reading strategy templates {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing strategy templates: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
}

impl RuleId {
    pub const ALL: [RuleId; 7] = [
        RuleId::R1,
        RuleId::R2,
        RuleId::R3,
        RuleId::R4,
        RuleId::R5,
        RuleId::R6,
        RuleId::R7,
    ];

    pub fn code(self) -> &'static str {
        match self {
            RuleId::R1 => "R1",
            RuleId::R2 => "R2",
            RuleId::R3 => "R3",
            RuleId::R4 => "R4",
            RuleId::R5 => "R5",
            RuleId::R6 => "R6",
            RuleId::R7 => "R7",
        }
    }

    /// Symbolic name used in logs.
    pub fn name(self) -> &'static str {
        match self {
            RuleId::R1 => "low_self_efficacy",
            RuleId::R2 => "high_motivation",
            RuleId::R3 => "many_weak_topics",
            RuleId::R4 => "bloom_remember",
            RuleId::R5 => "bloom_apply",
            RuleId::R6 => "prefers_guided",
            RuleId::R7 => "prefers_exploratory",
        }
    }

    /// Whether the rule fires for `profile`. Thresholds are strict.
    pub fn fires(self, profile: &LearnerProfile) -> bool {
        let emo = &profile.emotional;
        match self {
            RuleId::R1 => {
                emo.self_efficacy.value() < LOW_EFFICACY_THRESHOLD
                    || emo.frustration_count > FRUSTRATION_COUNT_THRESHOLD
            }
            RuleId::R2 => emo.motivation.value() > HIGH_MOTIVATION_THRESHOLD,
            RuleId::R3 => profile.cognitive.weak_topics.len() > WEAK_TOPIC_THRESHOLD,
            RuleId::R4 => profile.cognitive.bloom_level == BloomLevel::Remember,
            RuleId::R5 => profile.cognitive.bloom_level == BloomLevel::Apply,
            RuleId::R6 => profile.metacognitive.preferred_strategy == StrategyPreference::Guided,
            RuleId::R7 => {
                profile.metacognitive.preferred_strategy == StrategyPreference::Exploratory
            }
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// On-disk form of the instruction templates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyTemplates {
    pub header: String,
    pub rules: BTreeMap<RuleId, Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct StrategyRule {
    pub id: RuleId,
    pub instruction: Vec<String>,
}

/// The rule table with its rendered wording.
#[derive(Debug, Clone)]
pub struct RuleSet {
    header: String,
    rules: Vec<StrategyRule>,
}

/// Fired rules and the instruction text injected into the system prompt.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StrategyBlock {
    pub fired: Vec<RuleId>,
    pub rendered: String,
}

impl StrategyBlock {
    pub fn is_empty(&self) -> bool {
        self.fired.is_empty()
    }
}

impl RuleSet {
    pub fn from_templates(templates: StrategyTemplates) -> Result<Self, StrategyError> {
        if templates.header.trim().is_empty() {
            return Err(StrategyError::EmptyHeader);
        }
        let mut rules = Vec::with_capacity(RuleId::ALL.len());
        for id in RuleId::ALL {
            let lines: Vec<String> = templates
                .rules
                .get(&id)
                .map(|l| l.iter().filter(|s| !s.trim().is_empty()).cloned().collect())
                .unwrap_or_default();
            if lines.is_empty() {
                return Err(StrategyError::MissingRule(id));
            }
            rules.push(StrategyRule {
                id,
                instruction: lines,
            });
        }
        Ok(RuleSet {
            header: templates.header,
            rules,
        })
    }

    pub fn from_json_str(json: &str) -> Result<Self, StrategyError> {
        RuleSet::from_templates(serde_json::from_str(json)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, StrategyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| StrategyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        RuleSet::from_json_str(&text)
    }

    pub fn header(&self) -> &str {
        &self.header
    }

    pub fn rules(&self) -> &[StrategyRule] {
        &self.rules
    }

    pub fn generate(&self, profile: &LearnerProfile) -> StrategyBlock {
        let fired: Vec<&StrategyRule> = self.rules.iter().filter(|r| r.id.fires(profile)).collect();
        if fired.is_empty() {
            return StrategyBlock::default();
        }
        let mut lines = vec![self.header.clone()];
        for rule in &fired {
            let mut it = rule.instruction.iter();
            if let Some(first) = it.next() {
                lines.push(format!("- {first}"));
            }
            lines.extend(it.map(|l| format!("  {l}")));
        }
        StrategyBlock {
            fired: fired.iter().map(|r| r.id).collect(),
            rendered: lines.join("\n"),
        }
    }
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet::from_json_str(DEFAULT_RULES).expect("bundled strategy templates are valid")
    }
}

/// Evaluates the bundled rule table against `profile`.
pub fn generate_strategy(profile: &LearnerProfile) -> StrategyBlock {
    static BUNDLED: OnceLock<RuleSet> = OnceLock::new();
    BUNDLED.get_or_init(RuleSet::default).generate(profile)
}
