//! Engine configuration file and the first-run setup wizard.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assessment::AssessmentConfig;
use crate::gateway::{ProviderCatalog, ProviderConfig};
use crate::profile::{default_profile, Grade, LearnerProfile, ProfileError, StudentId};
use crate::prompt::{DetailLevel, TeachingStyle};
use crate::store::{Store, StoreError};
use crate::updater::UpdatePolicy;

/// Provider name that selects the in-process mock instead of a network client.
pub const MOCK_PROVIDER: &str = "mock";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("setup ended before the {0} step was answered")]
    Aborted(WizardStep),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentInfo {
    pub name: String,
    pub grade: Grade,
    #[serde(default)]
    pub subjects: Vec<String>,
    #[serde(default)]
    pub goal: String,
}

impl StudentInfo {
    pub fn student_id(&self) -> Result<StudentId, ProfileError> {
        StudentId::new(&self.name)
    }

    /// A fresh profile carrying this student's contextual fields.
    pub fn initial_profile(&self) -> Result<LearnerProfile, ProfileError> {
        let subjects: Vec<&str> = self.subjects.iter().map(String::as_str).collect();
        default_profile(&self.name, i64::from(self.grade.get()), &subjects, &self.goal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub provider: String,
    pub teaching_style: TeachingStyle,
    pub detail_level: DetailLevel,
    pub store_path: PathBuf,
    /// Overrides for the bundled data files.
    pub dictionary_path: Option<PathBuf>,
    pub template_dir: Option<PathBuf>,
    pub rules_path: Option<PathBuf>,
    pub student: Option<StudentInfo>,
    pub policy: UpdatePolicy,
    pub assessment: AssessmentConfig,
    /// Extra providers, or replacements for bundled ones with the same name.
    #[serde(rename = "provider_entry", skip_serializing_if = "Vec::is_empty")]
    pub providers: Vec<ProviderConfig>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            provider: MOCK_PROVIDER.into(),
            teaching_style: TeachingStyle::default(),
            detail_level: DetailLevel::default(),
            store_path: PathBuf::from("studymate.db"),
            dictionary_path: None,
            template_dir: None,
            rules_path: None,
            student: None,
            policy: UpdatePolicy::default(),
            assessment: AssessmentConfig::default(),
            providers: Vec::new(),
        }
    }
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let config = EngineConfig::from_toml_str(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        let write_err = |source| ConfigError::Write {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(write_err)?;
        }
        std::fs::write(path, self.to_toml_string()).map_err(write_err)
    }

    /// Bundled providers merged with this config's entries.
    pub fn provider_catalog(&self) -> ProviderCatalog {
        let mut catalog = ProviderCatalog::shipped();
        for p in &self.providers {
            match catalog.providers.iter_mut().find(|q| q.name == p.name) {
                Some(existing) => *existing = p.clone(),
                None => catalog.providers.push(p.clone()),
            }
        }
        catalog
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.policy
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.assessment
            .weights
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.assessment.behavioral_saturation == 0 {
            return Err(ConfigError::Invalid(
                "assessment.behavioral_saturation must be positive".into(),
            ));
        }
        let catalog = self.provider_catalog();
        catalog
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.provider != MOCK_PROVIDER && catalog.get(&self.provider).is_none() {
            return Err(ConfigError::Invalid(format!(
                "unknown provider '{}'",
                self.provider
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WizardStep {
    Provider,
    TeachingStyle,
    DetailLevel,
    StudentInfo,
}

impl fmt::Display for WizardStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WizardStep::Provider => "provider",
            WizardStep::TeachingStyle => "teaching style",
            WizardStep::DetailLevel => "detail level",
            WizardStep::StudentInfo => "student information",
        })
    }
}

/// Source of wizard answers: a terminal, or a fixed script in tests.
pub trait Prompter {
    /// Asks one question and returns the answer, or `None` when input ended.
    fn ask(&mut self, step: WizardStep, question: &str) -> Option<String>;
    /// Reports a rejected answer before the question is asked again.
    fn reject(&mut self, step: WizardStep, reason: &str);
}

/// Answers taken in order from a list.
#[derive(Debug, Default)]
pub struct ScriptedAnswers {
    answers: std::collections::VecDeque<String>,
    pub questions: Vec<(WizardStep, String)>,
    pub rejections: Vec<(WizardStep, String)>,
}

impl ScriptedAnswers {
    pub fn new<S: Into<String>>(answers: impl IntoIterator<Item = S>) -> Self {
        ScriptedAnswers {
            answers: answers.into_iter().map(Into::into).collect(),
            ..ScriptedAnswers::default()
        }
    }
}

impl Prompter for ScriptedAnswers {
    fn ask(&mut self, step: WizardStep, question: &str) -> Option<String> {
        self.questions.push((step, question.to_string()));
        self.answers.pop_front()
    }

    fn reject(&mut self, step: WizardStep, reason: &str) {
        self.rejections.push((step, reason.to_string()));
    }
}

fn ask_until<T>(
    io: &mut dyn Prompter,
    step: WizardStep,
    question: &str,
    mut parse: impl FnMut(&str) -> Result<T, String>,
) -> Result<T, ConfigError> {
    loop {
        let answer = io.ask(step, question).ok_or(ConfigError::Aborted(step))?;
        match parse(answer.trim()) {
            Ok(v) => return Ok(v),
            Err(reason) => io.reject(step, &reason),
        }
    }
}

/// Accepts an option by name or by 1-based number.
fn pick<'a>(options: &[&'a str], answer: &str, default: &'a str) -> Result<&'a str, String> {
    if answer.is_empty() {
        return Ok(default);
    }
    if let Ok(n) = answer.parse::<usize>() {
        return options
            .get(n.wrapping_sub(1))
            .copied()
            .ok_or_else(|| format!("choose a number from 1 to {}", options.len()));
    }
    let lower = answer.to_lowercase();
    options
        .iter()
        .find(|o| **o == lower)
        .copied()
        .ok_or_else(|| format!("'{answer}' is not one of: {}", options.join(", ")))
}

fn numbered(title: &str, options: &[&str], default: &str) -> String {
    let mut q = format!("{title} (default {default})");
    for (i, o) in options.iter().enumerate() {
        q.push_str(&format!("\n  {}. {o}", i + 1));
    }
    q
}

/// Runs the four setup steps: provider, teaching style, detail level, and
/// student information (name, grade, subjects, optional goal). A rejected
/// answer repeats the same question.
pub fn run_setup_wizard(
    base: EngineConfig,
    io: &mut dyn Prompter,
) -> Result<(EngineConfig, LearnerProfile), ConfigError> {
    let catalog = base.provider_catalog();
    let mut providers: Vec<&str> = vec![MOCK_PROVIDER];
    providers.extend(catalog.names());

    let provider = ask_until(
        io,
        WizardStep::Provider,
        &numbered("Step 1/4: choose an LLM provider", &providers, MOCK_PROVIDER),
        |a| pick(&providers, a, MOCK_PROVIDER).map(String::from),
    )?;

    let styles: Vec<&str> = TeachingStyle::ALL.iter().map(|s| s.as_str()).collect();
    let default_style = TeachingStyle::default().as_str();
    let teaching_style = ask_until(
        io,
        WizardStep::TeachingStyle,
        &numbered("Step 2/4: choose a teaching style", &styles, default_style),
        |a| pick(&styles, a, default_style)?.parse::<TeachingStyle>(),
    )?;

    let details: Vec<&str> = DetailLevel::ALL.iter().map(|s| s.as_str()).collect();
    let default_detail = DetailLevel::default().as_str();
    let detail_level = ask_until(
        io,
        WizardStep::DetailLevel,
        &numbered("Step 3/4: choose a detail level", &details, default_detail),
        |a| pick(&details, a, default_detail)?.parse::<DetailLevel>(),
    )?;

    let step = WizardStep::StudentInfo;
    let name = ask_until(io, step, "Step 4/4: student name", |a| {
        StudentId::new(a).map(|_| a.to_string()).map_err(|e| e.to_string())
    })?;
    let grade = ask_until(io, step, "Grade (1-12)", |a| {
        let n: i64 = a.parse().map_err(|_| format!("'{a}' is not a whole number"))?;
        Grade::new(n).map_err(|e| e.to_string())
    })?;
    let subjects = ask_until(io, step, "Subjects, comma separated (e.g. math, science)", |a| {
        Ok(a.split(',')
            .map(|s| s.trim().to_lowercase())
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>())
    })?;
    let goal = ask_until(io, step, "Learning goal (optional)", |a| Ok(a.to_string()))?;

    let student = StudentInfo {
        name,
        grade,
        subjects,
        goal,
    };
    let profile = student.initial_profile()?;
    let config = EngineConfig {
        provider,
        teaching_style,
        detail_level,
        student: Some(student),
        ..base
    };
    config.validate()?;
    Ok((config, profile))
}

#[derive(Debug)]
pub struct Setup {
    pub config: EngineConfig,
    pub profile: LearnerProfile,
    /// True when an existing configuration was loaded instead of asking.
    pub loaded_existing: bool,
}

/// Loads the saved configuration and profile when `config_path` exists;
/// otherwise runs the wizard, then saves both.
pub fn load_or_setup(
    config_path: &Path,
    base: EngineConfig,
    store: &dyn Store,
    io: &mut dyn Prompter,
) -> Result<Setup, ConfigError> {
    if config_path.exists() {
        let config = EngineConfig::load(config_path)?;
        let student = config.student.clone().ok_or_else(|| {
            ConfigError::Invalid(format!("{} has no [student] section", config_path.display()))
        })?;
        let profile = match store.load_profile(&student.student_id()?)? {
            Some(p) => p,
            None => {
                let p = student.initial_profile()?;
                store.save_profile(&p)?;
                p
            }
        };
        return Ok(Setup {
            config,
            profile,
            loaded_existing: true,
        });
    }
    let (config, profile) = run_setup_wizard(base, io)?;
    config.save(config_path)?;
    if store.load_profile(&profile.student_id)?.is_none() {
        store.save_profile(&profile)?;
    }
    Ok(Setup {
        config,
        profile,
        loaded_existing: false,
    })
}
