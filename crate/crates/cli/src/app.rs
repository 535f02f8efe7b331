//! Shared plumbing for the terminal commands: configuration overrides,
//! engine construction, the stdin wizard, and the chat loop.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde_json::Value;

use studymate::replay::ReplayReport;
use studymate::{
    build_client, Engine, EngineBuilder, EngineConfig, EngineError, Prompter, SqliteStore,
    StudentId, TurnOutcome, WizardStep,
};

/// Command-line values that take precedence over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub store: Option<PathBuf>,
    pub dict: Option<PathBuf>,
    pub provider: Option<String>,
}

impl Overrides {
    pub fn apply(&self, config: &mut EngineConfig) {
        if let Some(s) = &self.store {
            config.store_path = s.clone();
        }
        if let Some(d) = &self.dict {
            config.dictionary_path = Some(d.clone());
        }
        if let Some(p) = &self.provider {
            config.provider = p.clone();
        }
    }
}

/// Loads `path` if it exists, else the defaults, then applies `overrides`.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<EngineConfig> {
    let mut config = if path.exists() {
        EngineConfig::load(path)?
    } else {
        EngineConfig::default()
    };
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

pub fn open_store(config: &EngineConfig) -> Result<Arc<SqliteStore>> {
    let store = SqliteStore::open(&config.store_path)
        .with_context(|| format!("opening store {}", config.store_path.display()))?;
    Ok(Arc::new(store))
}

pub fn build_engine(config: &EngineConfig, store: Arc<SqliteStore>) -> Result<Engine> {
    let client = build_client(config)?;
    Ok(EngineBuilder::from_config(config)?.build(store, client))
}

/// The student named in `config`, unless `explicit` is given.
pub fn student_of(config: &EngineConfig, explicit: Option<&str>) -> Result<StudentId> {
    match (explicit, &config.student) {
        (Some(id), _) => Ok(StudentId::new(id)?),
        (None, Some(s)) => Ok(s.student_id()?),
        (None, None) => bail!("no student configured; run `studymate init` or pass --student"),
    }
}

/// Wizard prompter over any reader and writer.
pub struct LinePrompter<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> LinePrompter<R, W> {
    pub fn new(input: R, output: W) -> Self {
        LinePrompter { input, output }
    }
}

impl<R: BufRead, W: Write> Prompter for LinePrompter<R, W> {
    fn ask(&mut self, step: WizardStep, question: &str) -> Option<String> {
        let _ = write!(self.output, "[{step}] {question}\n> ");
        let _ = self.output.flush();
        let mut line = String::new();
        match self.input.read_line(&mut line) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(line.trim_end_matches(['\r', '\n']).to_string()),
        }
    }

    fn reject(&mut self, _step: WizardStep, reason: &str) {
        let _ = writeln!(self.output, "  {reason}");
    }
}

/// The bracketed audit lines shown by `chat --show-internals`.
pub fn render_internals(out: &TurnOutcome) -> String {
    let mut text = format!("[routed: {} | companion: {}", out.routed, out.active_subject);
    if let Some(prev) = out.switched_from {
        text.push_str(&format!(" | switched from {prev}"));
    }
    text.push_str("]\n");
    for c in &out.delta.changes {
        text.push_str(&format!("[profile {}: {} -> {} ({})]\n", c.path, c.old, c.new, c.trigger));
    }
    if out.strategy.fired.is_empty() {
        text.push_str("[strategy: no rules fired]\n");
    } else {
        let codes: Vec<&str> = out.strategy.fired.iter().map(|r| r.code()).collect();
        text.push_str(&format!("[strategy: {}]\n{}\n", codes.join(", "), out.strategy.rendered));
    }
    text
}

const CHAT_HELP: &str = "Commands: /tool <name> <json arguments>, /tools, /profile, /report, /quit";

/// Reads student messages line by line until `/quit` or end of input.
pub async fn chat_loop(
    engine: &Engine,
    session_id: &str,
    input: impl BufRead,
    out: &mut impl Write,
    show_internals: bool,
) -> Result<()> {
    writeln!(out, "{CHAT_HELP}")?;
    let student = engine.session(session_id).await?.student_id;
    for line in input.lines() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        match text.split_once(' ').map_or((text, ""), |(a, b)| (a, b.trim())) {
            ("/quit" | "/exit", _) => break,
            ("/help", _) => writeln!(out, "{CHAT_HELP}")?,
            ("/tools", _) => {
                for t in engine.tools().describe() {
                    writeln!(out, "  {}: {}", t.name, t.description)?;
                }
            }
            ("/profile", _) => {
                writeln!(out, "{}", serde_json::to_string_pretty(&engine.profile(&student)?)?)?
            }
            ("/report", _) => write!(out, "{}", engine.assessment(&student)?.render_table())?,
            ("/tool", rest) => {
                let (name, raw) = rest.split_once(' ').unwrap_or((rest, "{}"));
                let args: Value = match serde_json::from_str(raw) {
                    Ok(v) => v,
                    Err(e) => {
                        writeln!(out, "tool arguments must be JSON: {e}")?;
                        continue;
                    }
                };
                match engine.use_tool(session_id, name, &args).await {
                    Ok((output, _)) => writeln!(out, "[{name}] {output}")?,
                    Err(EngineError::Tool(e)) => writeln!(out, "[{name}] {e}")?,
                    Err(e) => return Err(e.into()),
                }
            }
            _ => match engine.handle_turn(session_id, text).await {
                Ok(turn) => {
                    if show_internals {
                        write!(out, "{}", render_internals(&turn))?;
                    }
                    writeln!(out, "companion: {}", turn.reply)?;
                }
                Err(EngineError::Provider(e)) => writeln!(
                    out,
                    "The model provider is unavailable ({e}). Your message was noted; try again in a moment."
                )?,
                Err(e) => return Err(e.into()),
            },
        }
        out.flush()?;
    }
    Ok(())
}

/// Replay output and whether every expectation held.
pub async fn replay_fixture(path: &Path, show_internals: bool) -> Result<(String, bool)> {
    let fixture = studymate::replay::Fixture::from_path(path)?;
    let report: ReplayReport = studymate::replay::run_fixture(&fixture).await?;
    Ok((report.render(show_internals), report.passed()))
}
