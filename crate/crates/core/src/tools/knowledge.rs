//! Curated, read-only knowledge base with grade banding.

use serde::{Deserialize, Serialize};

use crate::profile::Grade;
use crate::sensory::normalize;

use super::ToolError;

const BUNDLED_CORPUS: &str = include_str!("../../data/knowledge.jsonl");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub id: String,
    pub keywords: Vec<String>,
    /// Inclusive grade range the entry is written for.
    pub grade_band: (u8, u8),
    #[serde(default)]
    pub title: String,
    pub text: String,
}

impl KnowledgeEntry {
    pub fn covers(&self, grade: Grade) -> bool {
        (self.grade_band.0..=self.grade_band.1).contains(&grade.get())
    }

    fn matches(&self, query: &str) -> bool {
        self.keywords.iter().any(|k| {
            let k = normalize(k);
            query.contains(&k) || (query.len() >= 3 && k.contains(query))
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    entries: Vec<KnowledgeEntry>,
}

impl KnowledgeBase {
    pub fn bundled() -> Self {
        KnowledgeBase::from_jsonl(BUNDLED_CORPUS).expect("bundled corpus is valid")
    }

    /// Parses one JSON object per non-blank line.
    pub fn from_jsonl(text: &str) -> Result<Self, ToolError> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: KnowledgeEntry = serde_json::from_str(line)
                .map_err(|e| ToolError::Corpus(format!("line {}: {e}", n + 1)))?;
            if entry.grade_band.0 > entry.grade_band.1 {
                return Err(ToolError::Corpus(format!(
                    "line {}: grade band {:?} is inverted",
                    n + 1,
                    entry.grade_band
                )));
            }
            entries.push(entry);
        }
        Ok(KnowledgeBase { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries whose keywords match `query` and whose band includes `grade`,
    /// in corpus order.
    pub fn lookup(&self, query: &str, grade: Grade) -> Vec<&KnowledgeEntry> {
        let query = normalize(query);
        if query.is_empty() {
            return Vec::new();
        }
        self.entries
            .iter()
            .filter(|e| e.covers(grade) && e.matches(&query))
            .collect()
    }
}

/// Looks `query` up in the bundled corpus.
pub fn lookup_knowledge(query: &str, grade: Grade) -> Vec<KnowledgeEntry> {
    KnowledgeBase::bundled()
        .lookup(query, grade)
        .into_iter()
        .cloned()
        .collect()
}
