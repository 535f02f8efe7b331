//! Motor layer: system prompt composition.
//!
//! A prompt is the HEADS base template with its subject extension, followed
//! by the learner summary and, when any rule fired, the strategy block.
//! Templates are plain text with `{{anchor}}` placeholders. Substitution is
//! single-pass, so text inserted into an anchor is never re-scanned.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::LearnerProfile;
use crate::sensory::IntentCategory;
use crate::strategy::StrategyBlock;

/// The seven behavioral constraints every prompt must carry verbatim.
pub const HEADS_CONSTRAINTS: [&str; 7] = [
    "Never give direct answers. Use Socratic questioning to guide self-discovery.",
    "Proceed step by step, confirming understanding at each stage.",
    "Praise specific efforts, not generic traits. Respond to mistakes with effort validation.",
    "Adjust language and examples based on the learner's grade and profile.",
    "Only discuss learning-related topics.",
    "Prompt reflection on the learner's own thinking processes.",
    "Help the learner develop skills for collaborating with AI, not dependency on AI.",
];

const ANCHOR_SUBJECT: &str = "subject_extension";
const ANCHOR_SUMMARY: &str = "learner_summary";
const ANCHOR_STRATEGY: &str = "strategy_block";
const ANCHOR_STYLE: &str = "teaching_style";
const ANCHOR_DETAIL: &str = "detail_level";

const BASE: &str = include_str!("../data/templates/base.txt");
const MATH: &str = include_str!("../data/templates/math.txt");
const CHINESE: &str = include_str!("../data/templates/chinese.txt");
const SCIENCE: &str = include_str!("../data/templates/science.txt");
const GENERAL: &str = include_str!("../data/templates/general.txt");
const WRITING_NOTE: &str = include_str!("../data/templates/writing.txt");
const READING_NOTE: &str = include_str!("../data/templates/reading.txt");
const EMOTIONAL_NOTE: &str = include_str!("../data/templates/emotional.txt");
const STYLES: &str = include_str!("../data/templates/styles.json");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("base template is missing constraint {index}: '{text}'")]
    MissingConstraint { index: usize, text: &'static str },
    #[error("base template is missing anchor {{{{{0}}}}}")]
    MissingAnchor(&'static str),
    #[error("style table has no phrasing for '{0}'")]
    MissingStyle(String),
    #[error("reading template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing style table: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Which HEADS template family a companion uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadsSubject {
    Base,
    Math,
    Chinese,
    Science,
    General,
}

impl HeadsSubject {
    /// Writing, reading, and emotional companions share the general template.
    pub fn for_category(category: IntentCategory) -> Self {
        match category {
            IntentCategory::Math => HeadsSubject::Math,
            IntentCategory::Chinese => HeadsSubject::Chinese,
            IntentCategory::Science => HeadsSubject::Science,
            IntentCategory::Writing
            | IntentCategory::Reading
            | IntentCategory::Emotional
            | IntentCategory::General => HeadsSubject::General,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TeachingStyle {
    #[default]
    Socratic,
    Encouraging,
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DetailLevel {
    Brief,
    #[default]
    Standard,
    Detailed,
}

impl TeachingStyle {
    pub const ALL: [TeachingStyle; 3] = [
        TeachingStyle::Socratic,
        TeachingStyle::Encouraging,
        TeachingStyle::Structured,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TeachingStyle::Socratic => "socratic",
            TeachingStyle::Encouraging => "encouraging",
            TeachingStyle::Structured => "structured",
        }
    }
}

impl DetailLevel {
    pub const ALL: [DetailLevel; 3] = [DetailLevel::Brief, DetailLevel::Standard, DetailLevel::Detailed];

    pub fn as_str(self) -> &'static str {
        match self {
            DetailLevel::Brief => "brief",
            DetailLevel::Standard => "standard",
            DetailLevel::Detailed => "detailed",
        }
    }
}

impl fmt::Display for TeachingStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for DetailLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TeachingStyle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_lowercase();
        TeachingStyle::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown teaching style '{s}'"))
    }
}

impl FromStr for DetailLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_lowercase();
        DetailLevel::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown detail level '{s}'"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StyleTable {
    teaching_style: BTreeMap<String, String>,
    detail_level: BTreeMap<String, String>,
}

/// All prompt templates, loaded once and shared read-only.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    base: String,
    subjects: BTreeMap<HeadsSubject, String>,
    companion_notes: BTreeMap<IntentCategory, String>,
    styles: StyleTable,
}

impl TemplateSet {
    pub fn bundled() -> Self {
        TemplateSet::from_parts(
            |name| {
                Some(
                    match name {
                        "base.txt" => BASE,
                        "math.txt" => MATH,
                        "chinese.txt" => CHINESE,
                        "science.txt" => SCIENCE,
                        "general.txt" => GENERAL,
                        "writing.txt" => WRITING_NOTE,
                        "reading.txt" => READING_NOTE,
                        "emotional.txt" => EMOTIONAL_NOTE,
                        "styles.json" => STYLES,
                        _ => return None,
                    }
                    .to_string(),
                )
            },
        )
        .expect("bundled templates are valid")
    }

    /// Loads templates from `dir`; any file not present falls back to the bundled copy.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let bundled = TemplateSet::bundled();
        let mut read_err = None;
        let set = TemplateSet::from_parts(|name| {
            let path = dir.join(name);
            if path.exists() {
                match std::fs::read_to_string(&path) {
                    Ok(text) => Some(text),
                    Err(source) => {
                        read_err = Some(PromptError::Io {
                            path: path.display().to_string(),
                            source,
                        });
                        None
                    }
                }
            } else {
                bundled.raw_file(name)
            }
        });
        match read_err {
            Some(err) => Err(err),
            None => set,
        }
    }

    fn raw_file(&self, name: &str) -> Option<String> {
        match name {
            "base.txt" => Some(self.base.clone()),
            "math.txt" => self.subjects.get(&HeadsSubject::Math).cloned(),
            "chinese.txt" => self.subjects.get(&HeadsSubject::Chinese).cloned(),
            "science.txt" => self.subjects.get(&HeadsSubject::Science).cloned(),
            "general.txt" => self.subjects.get(&HeadsSubject::General).cloned(),
            "writing.txt" => self.companion_notes.get(&IntentCategory::Writing).cloned(),
            "reading.txt" => self.companion_notes.get(&IntentCategory::Reading).cloned(),
            "emotional.txt" => self.companion_notes.get(&IntentCategory::Emotional).cloned(),
            "styles.json" => serde_json::to_string(&self.styles).ok(),
            _ => None,
        }
    }

    fn from_parts(mut load: impl FnMut(&str) -> Option<String>) -> Result<Self, PromptError> {
        let mut get = |name: &str| load(name).unwrap_or_default();
        let base = get("base.txt");
        for (index, text) in HEADS_CONSTRAINTS.iter().enumerate() {
            if !base.contains(text) {
                return Err(PromptError::MissingConstraint {
                    index: index + 1,
                    text,
                });
            }
        }
        for anchor in [ANCHOR_SUBJECT, ANCHOR_SUMMARY, ANCHOR_STRATEGY] {
            if !base.contains(&format!("{{{{{anchor}}}}}")) {
                return Err(PromptError::MissingAnchor(anchor));
            }
        }
        let subjects = BTreeMap::from([
            (HeadsSubject::Math, get("math.txt").trim_end().to_string()),
            (HeadsSubject::Chinese, get("chinese.txt").trim_end().to_string()),
            (HeadsSubject::Science, get("science.txt").trim_end().to_string()),
            (HeadsSubject::General, get("general.txt").trim_end().to_string()),
        ]);
        let companion_notes = BTreeMap::from([
            (IntentCategory::Writing, get("writing.txt").trim().to_string()),
            (IntentCategory::Reading, get("reading.txt").trim().to_string()),
            (IntentCategory::Emotional, get("emotional.txt").trim().to_string()),
        ]);
        let styles: StyleTable = serde_json::from_str(&get("styles.json"))?;
        for style in TeachingStyle::ALL {
            if !styles.teaching_style.contains_key(style.as_str()) {
                return Err(PromptError::MissingStyle(style.to_string()));
            }
        }
        for level in DetailLevel::ALL {
            if !styles.detail_level.contains_key(level.as_str()) {
                return Err(PromptError::MissingStyle(level.to_string()));
            }
        }
        Ok(TemplateSet {
            base,
            subjects,
            companion_notes,
            styles,
        })
    }

    /// The subject extension text used for `category`.
    pub fn subject_extension(&self, category: IntentCategory) -> String {
        let subject = HeadsSubject::for_category(category);
        let mut text = self.subjects.get(&subject).cloned().unwrap_or_default();
        if let Some(note) = self.companion_notes.get(&category).filter(|n| !n.is_empty()) {
            text.push('\n');
            text.push_str(note);
        }
        text
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet::bundled()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Heads,
    ProfileSummary,
    StrategyBlock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSection {
    pub kind: SectionKind,
    pub text: String,
}

/// A composed system prompt plus the sections it was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_prompt: String,
    pub sections: Vec<PromptSection>,
}

impl PromptBundle {
    pub fn section(&self, kind: SectionKind) -> Option<&str> {
        self.sections
            .iter()
            .find(|s| s.kind == kind)
            .map(|s| s.text.as_str())
    }
}

fn fill_anchors(template: &str, values: &BTreeMap<&str, &str>) -> String {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = after[..end].trim();
                match values.get(name) {
                    Some(v) => out.push_str(v),
                    None => out.push_str(&rest[start..start + 2 + end + 2]),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Collapses runs of blank lines left by empty anchors.
fn tidy(text: &str) -> String {
    let mut out: Vec<&str> = Vec::new();
    for line in text.lines() {
        let blank = line.trim().is_empty();
        if blank && out.last().is_none_or(|l| l.trim().is_empty()) {
            continue;
        }
        out.push(line.trim_end());
    }
    while out.last().is_some_and(|l| l.is_empty()) {
        out.pop();
    }
    out.join("\n")
}

fn join_or(items: impl IntoIterator<Item = impl AsRef<str>>, empty: &str) -> String {
    let joined = items
        .into_iter()
        .map(|s| s.as_ref().to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if joined.is_empty() {
        empty.to_string()
    } else {
        joined
    }
}

/// Human-readable profile summary for prompt injection.
///
/// Only fields listed here ever leave the process; the student id, tool
/// usage, and free-text knowledge notes are deliberately absent.
pub fn render_learner_summary(profile: &LearnerProfile) -> String {
    let ctx = &profile.contextual;
    let goal = if ctx.learning_goal.trim().is_empty() {
        "not set"
    } else {
        ctx.learning_goal.trim()
    };
    [
        "[Learner Profile]".to_string(),
        format!("Grade: {}", ctx.grade),
        format!("Subject focus: {}", join_or(&ctx.subject_focus, "none")),
        format!("Learning goal: {goal}"),
        format!("Bloom level: {}", profile.cognitive.bloom_level),
        format!("Current mood: {}", profile.emotional.current_mood),
        format!("Self-efficacy: {}", profile.emotional.self_efficacy),
        format!("Motivation: {}", profile.emotional.motivation),
        format!("Weak topics: {}", join_or(&profile.cognitive.weak_topics, "none")),
        format!("Preferred strategy: {}", profile.metacognitive.preferred_strategy),
    ]
    .join("\n")
}

/// Composes system prompts from a template set and a style selection.
#[derive(Debug, Clone, Default)]
pub struct PromptComposer {
    pub templates: TemplateSet,
    pub style: TeachingStyle,
    pub detail: DetailLevel,
}

impl PromptComposer {
    pub fn new(templates: TemplateSet, style: TeachingStyle, detail: DetailLevel) -> Self {
        PromptComposer {
            templates,
            style,
            detail,
        }
    }

    pub fn compose(
        &self,
        subject: IntentCategory,
        profile: &LearnerProfile,
        strategy: &StrategyBlock,
    ) -> PromptBundle {
        let styles = &self.templates.styles;
        let extension = self.templates.subject_extension(subject);
        let style_text = styles.teaching_style[self.style.as_str()].as_str();
        let detail_text = styles.detail_level[self.detail.as_str()].as_str();

        let heads_values = BTreeMap::from([
            (ANCHOR_SUBJECT, extension.as_str()),
            (ANCHOR_STYLE, style_text),
            (ANCHOR_DETAIL, detail_text),
            (ANCHOR_SUMMARY, ""),
            (ANCHOR_STRATEGY, ""),
        ]);
        let heads = tidy(&fill_anchors(&self.templates.base, &heads_values));

        let summary = render_learner_summary(profile);
        let strategy_text = if strategy.is_empty() {
            ""
        } else {
            strategy.rendered.as_str()
        };
        let values = BTreeMap::from([
            (ANCHOR_SUBJECT, extension.as_str()),
            (ANCHOR_STYLE, style_text),
            (ANCHOR_DETAIL, detail_text),
            (ANCHOR_SUMMARY, summary.as_str()),
            (ANCHOR_STRATEGY, strategy_text),
        ]);
        let system_prompt = tidy(&fill_anchors(&self.templates.base, &values));

        let mut sections = vec![
            PromptSection {
                kind: SectionKind::Heads,
                text: heads,
            },
            PromptSection {
                kind: SectionKind::ProfileSummary,
                text: summary,
            },
        ];
        if !strategy.is_empty() {
            sections.push(PromptSection {
                kind: SectionKind::StrategyBlock,
                text: strategy.rendered.clone(),
            });
        }
        PromptBundle {
            system_prompt,
            sections,
        }
    }
}

/// Composes with the bundled templates and default style.
pub fn compose_system_prompt(
    subject: IntentCategory,
    profile: &LearnerProfile,
    strategy: &StrategyBlock,
) -> PromptBundle {
    static COMPOSER: OnceLock<PromptComposer> = OnceLock::new();
    COMPOSER
        .get_or_init(PromptComposer::default)
        .compose(subject, profile, strategy)
}
