//! Education-only tool registry.
//!
//! Tools are registered in code at startup and never loaded from disk or
//! the network. Every output is cut to the registry's length bound.

pub mod calculator;
pub mod knowledge;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::profile::Grade;

pub use calculator::{eval_expression, parse_expression, BinOp, CalcError, Expr};
pub use knowledge::{lookup_knowledge, KnowledgeBase, KnowledgeEntry};

pub const DEFAULT_MAX_OUTPUT_CHARS: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolError {
    #[error("unknown tool '{0}'")]
    UnknownTool(String),
    #[error("tool '{0}' is already registered")]
    Duplicate(String),
    #[error("bad arguments: {0}")]
    BadArguments(String),
    #[error(transparent)]
    Calc(#[from] CalcError),
    #[error("knowledge corpus: {0}")]
    Corpus(String),
}

pub type ToolHandler = Arc<dyn Fn(&Value) -> Result<String, ToolError> + Send + Sync>;

#[derive(Clone)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    /// JSON Schema for the arguments object.
    pub parameters: Value,
    pub handler: ToolHandler,
}

impl fmt::Debug for ToolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolSpec")
            .field("name", &self.name)
            .field("description", &self.description)
            .finish_non_exhaustive()
    }
}

/// Public description of a tool, without its handler.
#[derive(Debug, Clone, Serialize)]
pub struct ToolInfo {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

#[derive(Debug, Clone)]
pub struct ToolRegistry {
    tools: BTreeMap<String, ToolSpec>,
    max_output_chars: usize,
}

impl Default for ToolRegistry {
    fn default() -> Self {
        ToolRegistry::new(DEFAULT_MAX_OUTPUT_CHARS)
    }
}

fn truncate_chars(text: String, max: usize) -> String {
    if text.chars().count() <= max {
        return text;
    }
    let mut cut: String = text.chars().take(max.saturating_sub(1)).collect();
    cut.push('…');
    cut
}

impl ToolRegistry {
    pub fn new(max_output_chars: usize) -> Self {
        ToolRegistry {
            tools: BTreeMap::new(),
            max_output_chars: max_output_chars.max(1),
        }
    }

    /// Registry with the four built-in tools.
    pub fn with_builtins(kb: KnowledgeBase) -> Self {
        let mut reg = ToolRegistry::default();
        for spec in [calculator_tool(), knowledge_tool(kb), unit_converter_tool(), times_table_tool()] {
            reg.register(spec).expect("built-in names are unique");
        }
        reg
    }

    pub fn register(&mut self, spec: ToolSpec) -> Result<(), ToolError> {
        if self.tools.contains_key(&spec.name) {
            return Err(ToolError::Duplicate(spec.name));
        }
        self.tools.insert(spec.name.clone(), spec);
        Ok(())
    }

    pub fn max_output_chars(&self) -> usize {
        self.max_output_chars
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }

    pub fn describe(&self) -> Vec<ToolInfo> {
        self.tools
            .values()
            .map(|t| ToolInfo {
                name: t.name.clone(),
                description: t.description.clone(),
                parameters: t.parameters.clone(),
            })
            .collect()
    }

    /// Runs a registered tool. Output is bounded by `max_output_chars`.
    pub fn dispatch(&self, name: &str, args: &Value) -> Result<String, ToolError> {
        let tool = self
            .tools
            .get(name)
            .ok_or_else(|| ToolError::UnknownTool(name.to_string()))?;
        let out = (tool.handler)(args)?;
        Ok(truncate_chars(out, self.max_output_chars))
    }
}

fn str_arg<'a>(args: &'a Value, key: &str) -> Result<&'a str, ToolError> {
    args.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| ToolError::BadArguments(format!("'{key}' must be a string")))
}

fn int_arg(args: &Value, key: &str) -> Result<i64, ToolError> {
    args.get(key)
        .and_then(Value::as_i64)
        .ok_or_else(|| ToolError::BadArguments(format!("'{key}' must be an integer")))
}

fn num_arg(args: &Value, key: &str) -> Result<f64, ToolError> {
    args.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| ToolError::BadArguments(format!("'{key}' must be a number")))
}

pub fn calculator_tool() -> ToolSpec {
    ToolSpec {
        name: "calculator".into(),
        description: "Evaluate an arithmetic expression with + - * / and parentheses.".into(),
        parameters: json!({
            "type": "object",
            "properties": {"expression": {"type": "string", "maxLength": calculator::MAX_INPUT_LEN}},
            "required": ["expression"]
        }),
        handler: Arc::new(|args| {
            let value = eval_expression(str_arg(args, "expression")?)?;
            Ok(value.to_string())
        }),
    }
}

pub fn knowledge_tool(kb: KnowledgeBase) -> ToolSpec {
    let kb = Arc::new(kb);
    ToolSpec {
        name: "knowledge_base".into(),
        description: "Look up age-appropriate explanations in the curated knowledge base.".into(),
        parameters: json!({
            "type": "object",
            "properties": {
                "query": {"type": "string"},
                "grade": {"type": "integer", "minimum": 1, "maximum": 12}
            },
            "required": ["query", "grade"]
        }),
        handler: Arc::new(move |args| {
            let query = str_arg(args, "query")?;
            let grade = Grade::new(int_arg(args, "grade")?)
                .map_err(|e| ToolError::BadArguments(e.to_string()))?;
            let hits = kb.lookup(query, grade);
            if hits.is_empty() {
                return Ok("No entries found.".into());
            }
            Ok(hits
                .iter()
                .map(|e| format!("{}: {}", e.title, e.text))
                .collect::<Vec<_>>()
                .join("\n\n"))
        }),
    }
}

/// (unit, quantity kind, factor to the base unit of that kind)
const UNITS: &[(&str, &str, f64)] = &[
    ("mm", "length", 0.001),
    ("cm", "length", 0.01),
    ("m", "length", 1.0),
    ("km", "length", 1000.0),
    ("g", "mass", 0.001),
    ("kg", "mass", 1.0),
    ("ml", "volume", 0.001),
    ("l", "volume", 1.0),
    ("s", "time", 1.0),
    ("min", "time", 60.0),
    ("h", "time", 3600.0),
];

fn unit(name: &str) -> Result<(&'static str, f64), ToolError> {
    let name = name.trim().to_lowercase();
    UNITS
        .iter()
        .find(|(u, _, _)| *u == name)
        .map(|(_, kind, f)| (*kind, *f))
        .ok_or_else(|| ToolError::BadArguments(format!("unknown unit '{name}'")))
}

pub fn unit_converter_tool() -> ToolSpec {
    ToolSpec {
        name: "unit_converter".into(),
        description: "Convert between metric length, mass, volume and time units.".into(),
        parameters: json!({
            "type": "object",
            "properties": {
                "value": {"type": "number"},
                "from": {"type": "string"},
                "to": {"type": "string"}
            },
            "required": ["value", "from", "to"]
        }),
        handler: Arc::new(|args| {
            let value = num_arg(args, "value")?;
            let from = str_arg(args, "from")?;
            let to = str_arg(args, "to")?;
            let (kind_from, f_from) = unit(from)?;
            let (kind_to, f_to) = unit(to)?;
            if kind_from != kind_to {
                return Err(ToolError::BadArguments(format!(
                    "cannot convert {kind_from} to {kind_to}"
                )));
            }
            let converted = value * f_from / f_to;
            Ok(format!("{value} {from} = {converted} {to}"))
        }),
    }
}

pub fn times_table_tool() -> ToolSpec {
    ToolSpec {
        name: "times_table".into(),
        description: "List a multiplication table for practice.".into(),
        parameters: json!({
            "type": "object",
            "properties": {
                "number": {"type": "integer", "minimum": 1, "maximum": 20},
                "up_to": {"type": "integer", "minimum": 1, "maximum": 12}
            },
            "required": ["number"]
        }),
        handler: Arc::new(|args| {
            let n = int_arg(args, "number")?;
            let up_to = args.get("up_to").and_then(Value::as_i64).unwrap_or(10);
            if !(1..=20).contains(&n) || !(1..=12).contains(&up_to) {
                return Err(ToolError::BadArguments(
                    "number must be 1-20 and up_to 1-12".into(),
                ));
            }
            Ok((1..=up_to)
                .map(|k| format!("{n} x {k} = {}", n * k))
                .collect::<Vec<_>>()
                .join("\n"))
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> ToolRegistry {
        ToolRegistry::with_builtins(KnowledgeBase::bundled())
    }

    #[test]
    fn four_builtins() {
        let names: Vec<_> = registry().names().map(String::from).collect();
        assert_eq!(
            names,
            ["calculator", "knowledge_base", "times_table", "unit_converter"]
        );
    }

    #[test]
    fn unknown_tool() {
        assert_eq!(
            registry().dispatch("shell", &json!({})),
            Err(ToolError::UnknownTool("shell".into()))
        );
    }

    #[test]
    fn calculator_dispatch() {
        let out = registry()
            .dispatch("calculator", &json!({"expression": "(1/4)+(2/4)"}))
            .unwrap();
        assert_eq!(out, "0.75");
        assert!(matches!(
            registry().dispatch("calculator", &json!({"expression": "import os"})),
            Err(ToolError::Calc(CalcError::Syntax { .. }))
        ));
        assert!(matches!(
            registry().dispatch("calculator", &json!({})),
            Err(ToolError::BadArguments(_))
        ));
    }

    #[test]
    fn converter_and_table() {
        let reg = registry();
        assert_eq!(
            reg.dispatch("unit_converter", &json!({"value": 2.5, "from": "km", "to": "m"}))
                .unwrap(),
            "2.5 km = 2500 m"
        );
        assert!(reg
            .dispatch("unit_converter", &json!({"value": 1, "from": "kg", "to": "m"}))
            .is_err());
        let table = reg
            .dispatch("times_table", &json!({"number": 7, "up_to": 3}))
            .unwrap();
        assert_eq!(table, "7 x 1 = 7\n7 x 2 = 14\n7 x 3 = 21");
    }

    #[test]
    fn outputs_are_bounded() {
        let mut reg = ToolRegistry::new(10);
        reg.register(ToolSpec {
            name: "echo".into(),
            description: "".into(),
            parameters: json!({}),
            handler: Arc::new(|_| Ok("x".repeat(100))),
        })
        .unwrap();
        let out = reg.dispatch("echo", &json!({})).unwrap();
        assert_eq!(out.chars().count(), 10);
        let long_kb = registry()
            .dispatch("knowledge_base", &json!({"query": "fraction", "grade": 4}))
            .unwrap();
        assert!(long_kb.chars().count() <= DEFAULT_MAX_OUTPUT_CHARS);
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut reg = registry();
        assert_eq!(
            reg.register(calculator_tool()),
            Err(ToolError::Duplicate("calculator".into()))
        );
    }
}
