//! Sensory layer: intent routing and keyword-based signal extraction.
//!
//! All matching is case-insensitive substring matching over a normalized
//! copy of the message. A phrase counts at most once per message. This is
//! deliberately simple and locale-portable; it is also fragile to
//! paraphrase, which is the known cost of keyword dictionaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{BloomLevel, Mood, StrategyPreference};

const DEFAULT_DICTIONARY: &str = include_str!("../data/dictionary.en.json");

#[derive(Debug, Error)]
pub enum SensoryError {
    #[error("message is empty")]
    EmptyMessage,
    #[error("dictionary {field}: empty phrase")]
    EmptyPhrase { field: &'static str },
    #[error("dictionary sentiment: phrase '{phrase}' maps to both {first} and {second}")]
    ConflictingMood {
        phrase: String,
        first: Mood,
        second: Mood,
    },
    #[error("reading dictionary {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing dictionary: {0}")]
    Parse(#[from] serde_json::Error),
}

/// The seven companion categories. Declaration order is the routing tie-break order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum IntentCategory {
    Math,
    Chinese,
    Science,
    Writing,
    Reading,
    Emotional,
    #[default]
    General,
}

impl IntentCategory {
    pub const ALL: [IntentCategory; 7] = [
        IntentCategory::Math,
        IntentCategory::Chinese,
        IntentCategory::Science,
        IntentCategory::Writing,
        IntentCategory::Reading,
        IntentCategory::Emotional,
        IntentCategory::General,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IntentCategory::Math => "math",
            IntentCategory::Chinese => "chinese",
            IntentCategory::Science => "science",
            IntentCategory::Writing => "writing",
            IntentCategory::Reading => "reading",
            IntentCategory::Emotional => "emotional",
            IntentCategory::General => "general",
        }
    }
}

impl fmt::Display for IntentCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IntentCategory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IntentCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim().to_lowercase())
            .ok_or_else(|| format!("unknown category '{s}'"))
    }
}

/// Locale-specific phrase tables driving routing and signal extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct KeywordDictionary {
    pub locale: String,
    pub bloom_patterns: BTreeMap<String, BloomLevel>,
    pub error_markers: Vec<String>,
    pub sentiment: BTreeMap<String, Mood>,
    pub frustration_markers: Vec<String>,
    pub engagement_markers: Vec<String>,
    pub reflection_markers: Vec<String>,
    pub strategy_markers: BTreeMap<String, StrategyPreference>,
    /// topic id -> phrases that identify the topic
    pub subject_keywords: BTreeMap<String, Vec<String>>,
    pub intent_keywords: BTreeMap<IntentCategory, Vec<String>>,
    /// Phrases that make a message count as a question even without a `?`.
    pub question_markers: Vec<String>,
}

/// Lowercases and canonicalizes quotes and whitespace.
pub fn normalize(text: &str) -> String {
    let mapped: String = text
        .chars()
        .map(|c| match c {
            '\u{2018}' | '\u{2019}' | '\u{02BC}' => '\'',
            '\u{201C}' | '\u{201D}' => '"',
            other => other,
        })
        .collect();
    mapped
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn normalize_list(field: &'static str, list: &mut Vec<String>) -> Result<(), SensoryError> {
    for phrase in list.iter_mut() {
        *phrase = normalize(phrase);
        if phrase.is_empty() {
            return Err(SensoryError::EmptyPhrase { field });
        }
    }
    list.sort();
    list.dedup();
    Ok(())
}

fn normalize_map<V: Copy + PartialEq>(
    field: &'static str,
    map: BTreeMap<String, V>,
    mut on_conflict: impl FnMut(&str, V, V) -> Option<SensoryError>,
) -> Result<BTreeMap<String, V>, SensoryError> {
    let mut out = BTreeMap::new();
    for (phrase, value) in map {
        let key = normalize(&phrase);
        if key.is_empty() {
            return Err(SensoryError::EmptyPhrase { field });
        }
        if let Some(&prev) = out.get(&key) {
            if prev != value {
                if let Some(err) = on_conflict(&key, prev, value) {
                    return Err(err);
                }
            }
        }
        out.insert(key, value);
    }
    Ok(out)
}

impl KeywordDictionary {
    /// The bundled English dictionary.
    pub fn default_english() -> Self {
        KeywordDictionary::from_json_str(DEFAULT_DICTIONARY)
            .expect("bundled dictionary is valid")
    }

    pub fn from_json_str(json: &str) -> Result<Self, SensoryError> {
        let raw: KeywordDictionary = serde_json::from_str(json)?;
        raw.normalized()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, SensoryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SensoryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        KeywordDictionary::from_json_str(&text)
    }

    /// Normalizes every phrase and enforces the table invariants.
    pub fn normalized(mut self) -> Result<Self, SensoryError> {
        normalize_list("error_markers", &mut self.error_markers)?;
        normalize_list("frustration_markers", &mut self.frustration_markers)?;
        normalize_list("engagement_markers", &mut self.engagement_markers)?;
        normalize_list("reflection_markers", &mut self.reflection_markers)?;
        normalize_list("question_markers", &mut self.question_markers)?;
        for list in self.subject_keywords.values_mut() {
            normalize_list("subject_keywords", list)?;
        }
        for list in self.intent_keywords.values_mut() {
            normalize_list("intent_keywords", list)?;
        }
        self.bloom_patterns = normalize_map(
            "bloom_patterns",
            std::mem::take(&mut self.bloom_patterns),
            |_, _, _| None,
        )?;
        self.sentiment = normalize_map(
            "sentiment",
            std::mem::take(&mut self.sentiment),
            |phrase, first, second| {
                Some(SensoryError::ConflictingMood {
                    phrase: phrase.to_string(),
                    first,
                    second,
                })
            },
        )?;
        self.strategy_markers = normalize_map(
            "strategy_markers",
            std::mem::take(&mut self.strategy_markers),
            |_, _, _| None,
        )?;
        Ok(self)
    }
}

/// Signals found in one message, or merged over several.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SignalSet {
    pub bloom_hits: BTreeSet<BloomLevel>,
    pub weak_topic_hits: BTreeSet<String>,
    pub mood_hits: BTreeMap<Mood, u32>,
    pub frustration_hits: u32,
    pub engagement_hits: u32,
    pub reflection_hits: u32,
    pub strategy_hit: Option<StrategyPreference>,
    pub question_count: u32,
}

impl SignalSet {
    pub fn is_empty(&self) -> bool {
        *self == SignalSet::default()
    }

    /// Component-wise union/sum. `strategy_hit` takes `other`'s value when
    /// present, since it models the latest stated preference.
    pub fn merge(mut self, other: &SignalSet) -> SignalSet {
        self.bloom_hits.extend(other.bloom_hits.iter().copied());
        self.weak_topic_hits
            .extend(other.weak_topic_hits.iter().cloned());
        for (mood, n) in &other.mood_hits {
            *self.mood_hits.entry(*mood).or_default() += n;
        }
        self.frustration_hits += other.frustration_hits;
        self.engagement_hits += other.engagement_hits;
        self.reflection_hits += other.reflection_hits;
        self.strategy_hit = other.strategy_hit.or(self.strategy_hit);
        self.question_count += other.question_count;
        self
    }

    pub fn max_bloom(&self) -> Option<BloomLevel> {
        self.bloom_hits.iter().max().copied()
    }

    /// Most frequent mood; ties go to the higher-priority (more negative) mood.
    pub fn dominant_mood(&self) -> Option<Mood> {
        self.mood_hits
            .iter()
            .filter(|(_, n)| **n > 0)
            .min_by_key(|(mood, n)| (std::cmp::Reverse(**n), mood.tie_priority()))
            .map(|(mood, _)| *mood)
    }
}

fn count_present(text: &str, phrases: &[String]) -> u32 {
    phrases.iter().filter(|p| text.contains(p.as_str())).count() as u32
}

/// Routes a message to a companion category.
///
/// The category with the most matching intent phrases wins; ties go to the
/// earlier category in [`IntentCategory::ALL`]. No match routes to `general`.
pub fn route(message: &str, dict: &KeywordDictionary) -> Result<IntentCategory, SensoryError> {
    let text = normalize(message);
    if text.is_empty() {
        return Err(SensoryError::EmptyMessage);
    }
    let mut best = (0u32, IntentCategory::General);
    for category in IntentCategory::ALL {
        let hits = dict
            .intent_keywords
            .get(&category)
            .map(|phrases| count_present(&text, phrases))
            .unwrap_or(0);
        if hits > best.0 {
            best = (hits, category);
        }
    }
    Ok(best.1)
}

/// Scans one message for profiling signals.
pub fn extract_signals(message: &str, dict: &KeywordDictionary) -> SignalSet {
    let text = normalize(message);
    let mut signals = SignalSet::default();
    if text.is_empty() {
        return signals;
    }

    for (phrase, level) in &dict.bloom_patterns {
        if text.contains(phrase.as_str()) {
            signals.bloom_hits.insert(*level);
        }
    }

    if dict.error_markers.iter().any(|m| text.contains(m.as_str())) {
        for (topic, phrases) in &dict.subject_keywords {
            if phrases.iter().any(|p| text.contains(p.as_str())) {
                signals.weak_topic_hits.insert(topic.clone());
            }
        }
    }

    for (phrase, mood) in &dict.sentiment {
        if text.contains(phrase.as_str()) {
            *signals.mood_hits.entry(*mood).or_default() += 1;
        }
    }

    signals.frustration_hits = count_present(&text, &dict.frustration_markers);
    signals.engagement_hits = count_present(&text, &dict.engagement_markers);
    signals.reflection_hits = count_present(&text, &dict.reflection_markers);

    // Several strategy phrases in one message: the one stated last wins.
    signals.strategy_hit = dict
        .strategy_markers
        .iter()
        .filter_map(|(phrase, pref)| text.rfind(phrase.as_str()).map(|pos| (pos, *pref)))
        .max_by_key(|(pos, _)| *pos)
        .map(|(_, pref)| pref);

    let is_question =
        text.contains('?') || dict.question_markers.iter().any(|m| text.contains(m.as_str()));
    signals.question_count = u32::from(is_question);

    signals
}

/// Extracts and merges signals over several messages.
pub fn extract_all<'a>(
    messages: impl IntoIterator<Item = &'a str>,
    dict: &KeywordDictionary,
) -> SignalSet {
    messages
        .into_iter()
        .fold(SignalSet::default(), |acc, m| acc.merge(&extract_signals(m, dict)))
}
