//! Folds extracted signals into a learner profile.
//!
//! Every change is recorded as a [`FieldChange`] addressed by JSON pointer
//! into the serialized profile, so the resulting [`ProfileDelta`] can be
//! audited line by line and replayed over the pre-state.
//!
//! Hits are applied one at a time in message order. Because traits clamp,
//! this differs from summing first and clamping once: from 0.05, a
//! frustration hit followed by an engagement hit ends at 0.1, not 0.05.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::profile::{LearnerProfile, Mood, UnitTrait};
use crate::sensory::{extract_signals, KeywordDictionary, SignalSet};

#[derive(Debug, Error, PartialEq)]
pub enum UpdateError {
    #[error("policy step {name} = {value} is outside (0, 0.5]")]
    StepOutOfRange { name: &'static str, value: f64 },
    #[error("delta path '{0}' does not address the profile")]
    BadPath(String),
    #[error("replayed profile is invalid: {0}")]
    Replay(String),
}

/// Fixed step sizes for trait updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpdatePolicy {
    pub efficacy_step: f64,
    pub motivation_step: f64,
    pub reflection_step: f64,
    pub kt_step: f64,
}

impl Default for UpdatePolicy {
    fn default() -> Self {
        UpdatePolicy {
            efficacy_step: 0.1,
            motivation_step: 0.1,
            reflection_step: 0.05,
            kt_step: 0.1,
        }
    }
}

impl UpdatePolicy {
    pub fn validate(&self) -> Result<(), UpdateError> {
        for (name, value) in [
            ("efficacy_step", self.efficacy_step),
            ("motivation_step", self.motivation_step),
            ("reflection_step", self.reflection_step),
            ("kt_step", self.kt_step),
        ] {
            if !(value > 0.0 && value <= 0.5) {
                return Err(UpdateError::StepOutOfRange { name, value });
            }
        }
        Ok(())
    }
}

/// One recorded field change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldChange {
    /// JSON pointer into the serialized profile, e.g. `/emotional/self_efficacy`.
    pub path: String,
    /// `null` when the field did not exist before.
    pub old: Value,
    pub new: Value,
    pub trigger: String,
}

/// Ordered audit log of an update.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProfileDelta {
    pub changes: Vec<FieldChange>,
}

impl ProfileDelta {
    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    pub fn extend(&mut self, other: ProfileDelta) {
        self.changes.extend(other.changes);
    }

    /// All changes to one path, in order.
    pub fn changes_to<'a>(&'a self, path: &'a str) -> impl Iterator<Item = &'a FieldChange> + 'a {
        self.changes.iter().filter(move |c| c.path == path)
    }

    /// First old value and last new value recorded for `path`.
    pub fn net_change(&self, path: &str) -> Option<(Value, Value)> {
        let first = self.changes_to(path).next()?;
        let last = self.changes_to(path).last()?;
        Some((first.old.clone(), last.new.clone()))
    }

    /// Replays the recorded changes over `base`.
    pub fn apply(&self, base: &LearnerProfile) -> Result<LearnerProfile, UpdateError> {
        let mut doc = serde_json::to_value(base).map_err(|e| UpdateError::Replay(e.to_string()))?;
        for change in &self.changes {
            set_pointer(&mut doc, &change.path, change.new.clone())?;
        }
        serde_json::from_value(doc).map_err(|e| UpdateError::Replay(e.to_string()))
    }

    /// One line per change, like `/emotional/self_efficacy: 0.35 -> 0.25 (frustration marker)`.
    pub fn render(&self) -> String {
        self.changes
            .iter()
            .map(|c| format!("{}: {} -> {} ({})", c.path, c.old, c.new, c.trigger))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Escapes one JSON pointer reference token.
pub fn pointer_token(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn unescape_token(token: &str) -> String {
    token.replace("~1", "/").replace("~0", "~")
}

/// Sets the object member addressed by `path`, creating the last token if
/// absent.
pub fn set_pointer(doc: &mut Value, path: &str, value: Value) -> Result<(), UpdateError> {
    let bad = || UpdateError::BadPath(path.to_string());
    let rest = path.strip_prefix('/').ok_or_else(bad)?;
    let tokens: Vec<String> = rest.split('/').map(unescape_token).collect();
    let (last, parents) = tokens.split_last().ok_or_else(bad)?;
    let mut cursor = doc;
    for token in parents {
        cursor = cursor
            .as_object_mut()
            .and_then(|o| o.get_mut(token))
            .ok_or_else(bad)?;
    }
    cursor
        .as_object_mut()
        .ok_or_else(bad)?
        .insert(last.clone(), value);
    Ok(())
}

/// Mutates a working copy while logging each change.
struct Recorder {
    profile: LearnerProfile,
    delta: ProfileDelta,
}

impl Recorder {
    fn record(&mut self, path: impl Into<String>, old: Value, new: Value, trigger: impl Into<String>) {
        if old != new {
            self.delta.changes.push(FieldChange {
                path: path.into(),
                old,
                new,
                trigger: trigger.into(),
            });
        }
    }

    fn step_trait(
        &mut self,
        path: &str,
        select: fn(&mut LearnerProfile) -> &mut UnitTrait,
        delta: f64,
        trigger: &str,
    ) {
        let slot = select(&mut self.profile);
        let old = *slot;
        let new = old.adjust(delta);
        *slot = new;
        self.record(path, old.value().into(), new.value().into(), trigger);
    }

    fn apply_message(&mut self, index: usize, signals: &SignalSet, policy: &UpdatePolicy) {
        let tag = |what: &str| format!("message {}: {what}", index + 1);

        if let Some(level) = signals.max_bloom() {
            let current = self.profile.cognitive.bloom_level;
            if level > current {
                self.profile.cognitive.bloom_level = level;
                self.record(
                    "/cognitive/bloom_level",
                    current.as_str().into(),
                    level.as_str().into(),
                    tag("bloom evidence"),
                );
            }
        }

        for topic in &signals.weak_topic_hits {
            let kt_path = format!("/cognitive/knowledge_tracing/{}", pointer_token(topic));
            let old_kt = self.profile.cognitive.knowledge_tracing.get(topic).copied();
            let new_kt = old_kt.unwrap_or(UnitTrait::MIDPOINT).adjust(-policy.kt_step);
            self.profile
                .cognitive
                .knowledge_tracing
                .insert(topic.clone(), new_kt);
            self.record(
                kt_path,
                old_kt.map_or(Value::Null, |t| t.value().into()),
                new_kt.value().into(),
                tag("error marker with topic keyword"),
            );

            if !self.profile.cognitive.weak_topics.contains(topic) {
                let old = serde_json::to_value(&self.profile.cognitive.weak_topics).unwrap();
                self.profile.cognitive.weak_topics.insert(topic.clone());
                let new = serde_json::to_value(&self.profile.cognitive.weak_topics).unwrap();
                self.record("/cognitive/weak_topics", old, new, tag("weak topic added"));
            }
        }

        for _ in 0..signals.frustration_hits {
            self.step_trait(
                "/emotional/self_efficacy",
                |p| &mut p.emotional.self_efficacy,
                -policy.efficacy_step,
                &tag("frustration marker"),
            );
            self.step_trait(
                "/emotional/motivation",
                |p| &mut p.emotional.motivation,
                -policy.motivation_step,
                &tag("frustration marker"),
            );
        }
        for _ in 0..signals.engagement_hits {
            self.step_trait(
                "/emotional/self_efficacy",
                |p| &mut p.emotional.self_efficacy,
                policy.efficacy_step,
                &tag("engagement marker"),
            );
            self.step_trait(
                "/emotional/motivation",
                |p| &mut p.emotional.motivation,
                policy.motivation_step,
                &tag("engagement marker"),
            );
        }
        if signals.frustration_hits > 0 {
            let old = self.profile.emotional.frustration_count;
            let new = old + u64::from(signals.frustration_hits);
            self.profile.emotional.frustration_count = new;
            self.record(
                "/emotional/frustration_count",
                old.into(),
                new.into(),
                tag("frustration marker"),
            );
        }

        for _ in 0..signals.reflection_hits {
            self.step_trait(
                "/metacognitive/reflection_ability",
                |p| &mut p.metacognitive.reflection_ability,
                policy.reflection_step,
                &tag("reflection marker"),
            );
        }
        if let Some(pref) = signals.strategy_hit {
            let old = self.profile.metacognitive.preferred_strategy;
            self.profile.metacognitive.preferred_strategy = pref;
            self.record(
                "/metacognitive/preferred_strategy",
                old.as_str().into(),
                pref.as_str().into(),
                tag("strategy-choice marker"),
            );
        }
    }

    fn set_mood(&mut self, mood: Mood) {
        let old = self.profile.emotional.current_mood;
        self.profile.emotional.current_mood = mood;
        self.record(
            "/emotional/current_mood",
            old.as_str().into(),
            mood.as_str().into(),
            "dominant sentiment",
        );
    }

    fn refresh_question_frequency(&mut self, trigger: &str) {
        let behavioral = &mut self.profile.behavioral;
        let old = behavioral.question_frequency;
        let new = behavioral.question_total as f64 / behavioral.session_count.max(1) as f64;
        behavioral.question_frequency = new;
        self.record("/behavioral/question_frequency", old.into(), new.into(), trigger);
    }
}

/// Applies all signals found in `messages` to `profile`.
///
/// Bloom level is a max-fold, weak topics accumulate and lose `kt_step` of
/// tracing per hit, traits move by a fixed step per marker, and the mood is
/// replaced by the interaction's dominant sentiment when there is one.
/// Contextual fields are left alone.
pub fn update_profile_from_interaction<S: AsRef<str>>(
    profile: &LearnerProfile,
    messages: &[S],
    dict: &KeywordDictionary,
    policy: &UpdatePolicy,
) -> (LearnerProfile, ProfileDelta) {
    let mut rec = Recorder {
        profile: profile.clone(),
        delta: ProfileDelta::default(),
    };
    let mut merged = SignalSet::default();
    for (i, message) in messages.iter().enumerate() {
        let signals = extract_signals(message.as_ref(), dict);
        rec.apply_message(i, &signals, policy);
        merged = merged.merge(&signals);
    }

    if let Some(mood) = merged.dominant_mood() {
        rec.set_mood(mood);
    }

    if merged.question_count > 0 {
        let old = rec.profile.behavioral.question_total;
        let new = old + u64::from(merged.question_count);
        rec.profile.behavioral.question_total = new;
        rec.record("/behavioral/question_total", old.into(), new.into(), "questions asked");
        rec.refresh_question_frequency("questions asked");
    }

    (rec.profile, rec.delta)
}

/// Starts a new session: bumps the session counter and re-averages
/// question frequency over the larger denominator.
pub fn begin_session(profile: &LearnerProfile) -> LearnerProfile {
    let mut next = profile.clone();
    next.behavioral.session_count += 1;
    next.behavioral.question_frequency =
        next.behavioral.question_total as f64 / next.behavioral.session_count as f64;
    next
}

/// Counts one use of `tool`.
pub fn record_tool_use(profile: &LearnerProfile, tool: &str) -> (LearnerProfile, ProfileDelta) {
    let mut rec = Recorder {
        profile: profile.clone(),
        delta: ProfileDelta::default(),
    };
    let old = rec.profile.behavioral.tool_usage.get(tool).copied();
    let new = old.unwrap_or(0) + 1;
    rec.profile.behavioral.tool_usage.insert(tool.to_string(), new);
    rec.record(
        format!("/behavioral/tool_usage/{}", pointer_token(tool)),
        old.map_or(Value::Null, Value::from),
        new.into(),
        "tool call",
    );
    (rec.profile, rec.delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{default_profile, BloomLevel, StrategyPreference};
    use proptest::prelude::*;

    fn dict() -> KeywordDictionary {
        KeywordDictionary::default_english()
    }

    fn seeded(efficacy: f64) -> LearnerProfile {
        let mut p = default_profile("s1", 3, &["math"], "fractions").unwrap();
        p.emotional.self_efficacy = UnitTrait::new(efficacy).unwrap();
        p
    }

    #[test]
    fn case_one_first_turn() {
        let p = seeded(0.35);
        let (next, delta) = update_profile_from_interaction(
            &p,
            &["I keep getting fraction addition wrong..."],
            &dict(),
            &UpdatePolicy::default(),
        );
        assert_eq!(next.emotional.self_efficacy.value(), 0.25);
        assert!(next.cognitive.weak_topics.contains("fractions"));
        assert_eq!(next.cognitive.knowledge_tracing["fractions"].value(), 0.4);
        assert_eq!(next.emotional.frustration_count, 1);
        assert_eq!(next.emotional.current_mood, Mood::Frustrated);
        next.validate().unwrap();
        let (old, new) = delta.net_change("/emotional/self_efficacy").unwrap();
        assert_eq!((old.as_f64().unwrap(), new.as_f64().unwrap()), (0.35, 0.25));
    }

    #[test]
    fn what_is_and_how_to_solve_sets_apply() {
        let p = seeded(0.5);
        let (next, _) = update_profile_from_interaction(
            &p,
            &["what is a fraction", "how to solve 1/2 of 10"],
            &dict(),
            &UpdatePolicy::default(),
        );
        assert_eq!(next.cognitive.bloom_level, BloomLevel::Apply);
    }

    #[test]
    fn empty_messages_are_identity() {
        let p = seeded(0.5);
        let none: [&str; 0] = [];
        let (next, delta) =
            update_profile_from_interaction(&p, &none, &dict(), &UpdatePolicy::default());
        assert_eq!(next, p);
        assert!(delta.is_empty());
    }

    #[test]
    fn signal_free_messages_are_identity() {
        let p = seeded(0.5);
        let (next, delta) = update_profile_from_interaction(
            &p,
            &["ok", "zzz qwerty"],
            &dict(),
            &UpdatePolicy::default(),
        );
        assert_eq!(next, p);
        assert!(delta.is_empty());
    }

    #[test]
    fn clamps_at_zero() {
        let p = seeded(0.05);
        let (next, _) = update_profile_from_interaction(
            &p,
            &["this is too hard"],
            &dict(),
            &UpdatePolicy::default(),
        );
        assert_eq!(next.emotional.self_efficacy.value(), 0.0);
    }

    #[test]
    fn reflection_and_strategy() {
        let p = seeded(0.5);
        let (next, _) = update_profile_from_interaction(
            &p,
            &["let me think about it", "can you guide me"],
            &dict(),
            &UpdatePolicy::default(),
        );
        assert_eq!(next.metacognitive.reflection_ability.value(), 0.55);
        assert_eq!(
            next.metacognitive.preferred_strategy,
            StrategyPreference::Guided
        );
    }

    #[test]
    fn begin_session_counts() {
        let p = seeded(0.5);
        assert_eq!(begin_session(&p).behavioral.session_count, 1);
        let mut five = p.clone();
        five.behavioral.session_count = 5;
        assert_eq!(begin_session(&five).behavioral.session_count, 6);
    }

    #[test]
    fn question_frequency_is_mean_over_sessions() {
        let d = dict();
        let policy = UpdatePolicy::default();
        let asks = |n: usize| vec!["why?"; n];
        let p = begin_session(&seeded(0.5));
        let (p, _) = update_profile_from_interaction(&p, &asks(4), &d, &policy);
        let p = begin_session(&p);
        let (p, _) = update_profile_from_interaction(&p, &asks(6), &d, &policy);
        // arithmetic mean of the per-session counts
        let oracle = [4.0, 6.0].iter().sum::<f64>() / 2.0;
        assert_eq!(p.behavioral.question_frequency, oracle);
        assert_eq!(oracle, 5.0);
    }

    #[test]
    fn policy_validation() {
        assert!(UpdatePolicy::default().validate().is_ok());
        let bad = UpdatePolicy {
            kt_step: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = UpdatePolicy {
            efficacy_step: 0.6,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tool_use_counter() {
        let p = seeded(0.5);
        let (p, d1) = record_tool_use(&p, "calculator");
        let (p, _) = record_tool_use(&p, "calculator");
        assert_eq!(p.behavioral.tool_usage["calculator"], 2);
        assert_eq!(d1.changes[0].old, Value::Null);
    }

    #[test]
    fn replay_handles_slash_in_topic() {
        let p = seeded(0.5);
        let mut d = KeywordDictionary {
            error_markers: vec!["wrong".into()],
            ..KeywordDictionary::default()
        };
        d.subject_keywords
            .insert("a/b~c".into(), vec!["ratio".into()]);
        let (next, delta) =
            update_profile_from_interaction(&p, &["ratio wrong"], &d, &UpdatePolicy::default());
        assert_eq!(delta.apply(&p).unwrap(), next);
    }

    /// Applies hits one at a time, clamping after each, independently of
    /// the recorder.
    fn sequential_oracle(start: f64, hits: &[bool]) -> f64 {
        let mut v: f64 = start;
        for &engaged in hits {
            let step = if engaged { 0.1 } else { -0.1 };
            v = ((v + step) * 1e9).round() / 1e9;
            v = v.clamp(0.0, 1.0);
        }
        v
    }

    proptest! {
        #[test]
        fn efficacy_matches_sequential_oracle(
            start in 0u32..=20,
            hits in prop::collection::vec(any::<bool>(), 0..20),
        ) {
            let start = start as f64 / 20.0;
            let p = seeded(start);
            let msgs: Vec<&str> = hits
                .iter()
                .map(|&e| if e { "interesting" } else { "too hard" })
                .collect();
            let (next, _) = update_profile_from_interaction(&p, &msgs, &dict(), &UpdatePolicy::default());
            let expected = sequential_oracle(start, &hits);
            prop_assert!((next.emotional.self_efficacy.value() - expected).abs() < 1e-12);
        }
    }
}
