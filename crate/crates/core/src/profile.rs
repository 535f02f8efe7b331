//! The five-dimension learner profile.
//!
//! A profile is plain data. Every module that changes it produces a new
//! value; nothing mutates a profile behind the store's back. Each dimension
//! serializes to its own JSON document with snake_case field names, and
//! fields unknown to this version are carried through in `extra` so a newer
//! writer's data survives a rewrite by an older reader.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Errors raised while constructing or validating a profile.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("grade {0} is outside the K-12 range 1-12")]
    InvalidGrade(i64),
    #[error("student id must not be empty")]
    EmptyStudentId,
    #[error("trait value {0} is outside [0, 1]")]
    TraitOutOfRange(f64),
    #[error("weak topic '{0}' has no knowledge tracing entry")]
    UntracedWeakTopic(String),
}

/// Bloom's taxonomy level. Variant order is the ordinal order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum BloomLevel {
    #[default]
    Remember = 1,
    Understand = 2,
    Apply = 3,
    Analyze = 4,
    Evaluate = 5,
    Create = 6,
}

impl BloomLevel {
    pub const ALL: [BloomLevel; 6] = [
        BloomLevel::Remember,
        BloomLevel::Understand,
        BloomLevel::Apply,
        BloomLevel::Analyze,
        BloomLevel::Evaluate,
        BloomLevel::Create,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BloomLevel::Remember => "remember",
            BloomLevel::Understand => "understand",
            BloomLevel::Apply => "apply",
            BloomLevel::Analyze => "analyze",
            BloomLevel::Evaluate => "evaluate",
            BloomLevel::Create => "create",
        }
    }
}

impl fmt::Display for BloomLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A real-valued trait saturating in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct UnitTrait(f64);

/// Trait arithmetic is snapped to this grid so repeated fixed steps land on
/// the decimal values an educator expects (0.35 - 0.1 == 0.25, not 0.2499...).
const TRAIT_GRID: f64 = 1e9;

impl UnitTrait {
    pub const ZERO: UnitTrait = UnitTrait(0.0);
    pub const ONE: UnitTrait = UnitTrait(1.0);
    pub const MIDPOINT: UnitTrait = UnitTrait(0.5);

    pub fn new(value: f64) -> Result<Self, ProfileError> {
        if (0.0..=1.0).contains(&value) {
            Ok(UnitTrait(value))
        } else {
            Err(ProfileError::TraitOutOfRange(value))
        }
    }

    /// Builds a trait by clamping into `[0, 1]`. NaN maps to 0.
    pub fn clamped(value: f64) -> Self {
        if value.is_nan() {
            return UnitTrait(0.0);
        }
        UnitTrait(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Saturating add: `min(1, max(0, value + delta))`.
    pub fn adjust(self, delta: f64) -> Self {
        let raw = ((self.0 + delta) * TRAIT_GRID).round() / TRAIT_GRID;
        UnitTrait::clamped(raw)
    }
}

/// Free-function form of [`UnitTrait::adjust`].
pub fn adjust_trait(value: UnitTrait, delta: f64) -> UnitTrait {
    value.adjust(delta)
}

impl Default for UnitTrait {
    fn default() -> Self {
        UnitTrait::MIDPOINT
    }
}

impl TryFrom<f64> for UnitTrait {
    type Error = ProfileError;
    fn try_from(value: f64) -> Result<Self, Self::Error> {
        UnitTrait::new(value)
    }
}

impl From<UnitTrait> for f64 {
    fn from(t: UnitTrait) -> f64 {
        t.0
    }
}

impl fmt::Display for UnitTrait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mood {
    Confident,
    Curious,
    Frustrated,
    Anxious,
    Engaged,
    #[default]
    Neutral,
}

impl Mood {
    pub const ALL: [Mood; 6] = [
        Mood::Confident,
        Mood::Curious,
        Mood::Frustrated,
        Mood::Anxious,
        Mood::Engaged,
        Mood::Neutral,
    ];

    /// Tie-break priority for dominant-mood selection; lower wins.
    /// Negative states win ties because they drive the encouragement rules.
    pub fn tie_priority(self) -> u8 {
        match self {
            Mood::Frustrated => 0,
            Mood::Anxious => 1,
            Mood::Confident => 2,
            Mood::Curious => 3,
            Mood::Engaged => 4,
            Mood::Neutral => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mood::Confident => "confident",
            Mood::Curious => "curious",
            Mood::Frustrated => "frustrated",
            Mood::Anxious => "anxious",
            Mood::Engaged => "engaged",
            Mood::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Mood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StrategyPreference {
    Guided,
    Exploratory,
    #[default]
    Unset,
}

impl StrategyPreference {
    pub const ALL: [StrategyPreference; 3] = [
        StrategyPreference::Guided,
        StrategyPreference::Exploratory,
        StrategyPreference::Unset,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyPreference::Guided => "guided",
            StrategyPreference::Exploratory => "exploratory",
            StrategyPreference::Unset => "unset",
        }
    }
}

impl fmt::Display for StrategyPreference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// School grade, 1 through 12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct Grade(u8);

impl Grade {
    pub fn new(grade: i64) -> Result<Self, ProfileError> {
        if (1..=12).contains(&grade) {
            Ok(Grade(grade as u8))
        } else {
            Err(ProfileError::InvalidGrade(grade))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl Default for Grade {
    fn default() -> Self {
        Grade(1)
    }
}

impl TryFrom<i64> for Grade {
    type Error = ProfileError;
    fn try_from(value: i64) -> Result<Self, Self::Error> {
        Grade::new(value)
    }
}

impl From<Grade> for i64 {
    fn from(g: Grade) -> i64 {
        g.0 as i64
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StudentId(String);

impl StudentId {
    pub fn new(id: impl Into<String>) -> Result<Self, ProfileError> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(ProfileError::EmptyStudentId);
        }
        Ok(StudentId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StudentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct CognitiveDim {
    pub bloom_level: BloomLevel,
    pub knowledge_state: BTreeMap<String, String>,
    pub weak_topics: BTreeSet<String>,
    pub knowledge_tracing: BTreeMap<String, UnitTrait>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct BehavioralDim {
    pub session_count: u64,
    /// Questions per session, averaged over every session so far.
    pub question_frequency: f64,
    /// Running sum behind `question_frequency`.
    pub question_total: u64,
    pub tool_usage: BTreeMap<String, u64>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EmotionalDim {
    pub current_mood: Mood,
    pub self_efficacy: UnitTrait,
    pub motivation: UnitTrait,
    pub frustration_count: u64,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct MetacognitiveDim {
    pub self_regulation: UnitTrait,
    pub preferred_strategy: StrategyPreference,
    pub reflection_ability: UnitTrait,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ContextualDim {
    pub grade: Grade,
    pub subject_focus: Vec<String>,
    pub learning_goal: String,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// One learner's profile: the system's central state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerProfile {
    pub student_id: StudentId,
    pub cognitive: CognitiveDim,
    pub behavioral: BehavioralDim,
    pub emotional: EmotionalDim,
    pub metacognitive: MetacognitiveDim,
    pub contextual: ContextualDim,
    pub updated_at: DateTime<Utc>,
}

/// Names of the five dimensions, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Cognitive,
    Behavioral,
    Emotional,
    Metacognitive,
    Contextual,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::Cognitive,
        Dimension::Behavioral,
        Dimension::Emotional,
        Dimension::Metacognitive,
        Dimension::Contextual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Cognitive => "cognitive",
            Dimension::Behavioral => "behavioral",
            Dimension::Emotional => "emotional",
            Dimension::Metacognitive => "metacognitive",
            Dimension::Contextual => "contextual",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Builds a fresh profile. Traits start at the 0.5 midpoint, Bloom at
/// `remember`, mood `neutral`, all counters at zero.
pub fn default_profile(
    student_id: &str,
    grade: i64,
    subjects: &[&str],
    goal: &str,
) -> Result<LearnerProfile, ProfileError> {
    let student_id = StudentId::new(student_id)?;
    let grade = Grade::new(grade)?;
    Ok(LearnerProfile {
        student_id,
        cognitive: CognitiveDim::default(),
        behavioral: BehavioralDim::default(),
        emotional: EmotionalDim::default(),
        metacognitive: MetacognitiveDim::default(),
        contextual: ContextualDim {
            grade,
            subject_focus: subjects.iter().map(|s| s.to_string()).collect(),
            learning_goal: goal.to_string(),
            extra: BTreeMap::new(),
        },
        updated_at: DateTime::<Utc>::UNIX_EPOCH,
    })
}

impl LearnerProfile {
    /// Checks the cross-field invariants that the type system does not.
    pub fn validate(&self) -> Result<(), ProfileError> {
        for topic in &self.cognitive.weak_topics {
            if !self.cognitive.knowledge_tracing.contains_key(topic) {
                return Err(ProfileError::UntracedWeakTopic(topic.clone()));
            }
        }
        Ok(())
    }

    /// JSON document for one dimension, as stored.
    pub fn dimension_json(&self, dim: Dimension) -> Value {
        let v = match dim {
            Dimension::Cognitive => serde_json::to_value(&self.cognitive),
            Dimension::Behavioral => serde_json::to_value(&self.behavioral),
            Dimension::Emotional => serde_json::to_value(&self.emotional),
            Dimension::Metacognitive => serde_json::to_value(&self.metacognitive),
            Dimension::Contextual => serde_json::to_value(&self.contextual),
        };
        v.expect("profile dimensions always serialize")
    }

    /// Marks `topic` weak, creating its tracing entry at the midpoint if needed.
    pub fn mark_weak_topic(&mut self, topic: &str) {
        self.cognitive.weak_topics.insert(topic.to_string());
        self.cognitive
            .knowledge_tracing
            .entry(topic.to_string())
            .or_insert(UnitTrait::MIDPOINT);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults() {
        let p = default_profile("s1", 3, &["math"], "fractions").unwrap();
        assert_eq!(p.contextual.grade.get(), 3);
        assert_eq!(p.contextual.subject_focus, vec!["math".to_string()]);
        assert_eq!(p.contextual.learning_goal, "fractions");
        assert_eq!(p.emotional.self_efficacy.value(), 0.5);
        assert_eq!(p.emotional.motivation.value(), 0.5);
        assert_eq!(p.metacognitive.self_regulation.value(), 0.5);
        assert_eq!(p.metacognitive.reflection_ability.value(), 0.5);
        assert_eq!(p.cognitive.bloom_level, BloomLevel::Remember);
        assert_eq!(p.emotional.current_mood, Mood::Neutral);
        assert_eq!(p.emotional.frustration_count, 0);
        assert_eq!(p.behavioral.session_count, 0);
        assert_eq!(p.behavioral.question_frequency, 0.0);
        assert!(p.behavioral.tool_usage.is_empty());
        assert_eq!(p.metacognitive.preferred_strategy, StrategyPreference::Unset);
    }

    #[test]
    fn rejects_bad_grade() {
        assert_eq!(
            default_profile("s1", 0, &["math"], "x").unwrap_err(),
            ProfileError::InvalidGrade(0)
        );
        assert!(default_profile("s1", 13, &[], "").is_err());
        assert!(default_profile("  ", 3, &[], "").is_err());
    }

    #[test]
    fn adjust_examples() {
        let t = UnitTrait::new(0.35).unwrap();
        assert_eq!(adjust_trait(t, -0.1).value(), 0.25);
        assert_eq!(UnitTrait::new(0.05).unwrap().adjust(-0.1).value(), 0.0);
        assert_eq!(UnitTrait::new(0.95).unwrap().adjust(0.1).value(), 1.0);
    }

    #[test]
    fn bloom_max_matches_ordinals() {
        for a in BloomLevel::ALL {
            for b in BloomLevel::ALL {
                let by_ord = if a.ordinal() >= b.ordinal() { a } else { b };
                assert_eq!(a.max(b), by_ord);
                assert_eq!(a < b, a.ordinal() < b.ordinal());
            }
        }
    }

    #[test]
    fn dimension_field_names() {
        let p = default_profile("s1", 3, &["math"], "g").unwrap();
        let cog = p.dimension_json(Dimension::Cognitive);
        for key in ["bloom_level", "knowledge_state", "weak_topics", "knowledge_tracing"] {
            assert!(cog.get(key).is_some(), "{key}");
        }
        let emo = p.dimension_json(Dimension::Emotional);
        for key in ["current_mood", "self_efficacy", "motivation", "frustration_count"] {
            assert!(emo.get(key).is_some(), "{key}");
        }
        assert_eq!(cog["bloom_level"], "remember");
    }

    #[test]
    fn out_of_range_trait_rejected_on_load() {
        let bad = r#"{"current_mood":"neutral","self_efficacy":1.5}"#;
        assert!(serde_json::from_str::<EmotionalDim>(bad).is_err());
    }

    proptest! {
        #[test]
        fn adjust_stays_in_unit_interval(
            start in 0.0f64..=1.0,
            deltas in proptest::collection::vec(-2.0f64..2.0, 0..64),
        ) {
            let mut t = UnitTrait::new(start).unwrap();
            for d in deltas {
                t = t.adjust(d);
                prop_assert!((0.0..=1.0).contains(&t.value()));
            }
        }

        #[test]
        fn default_profile_is_deterministic(grade in 1i64..=12, goal in "[a-z ]{0,12}") {
            let a = default_profile("kid", grade, &["math", "science"], &goal).unwrap();
            let b = default_profile("kid", grade, &["math", "science"], &goal).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
