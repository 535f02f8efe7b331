//! Persistence: one profile row per student plus a four-category memory log.
//!
//! [`SqliteStore`] keeps both logical tables in a single database file, with
//! each profile dimension stored as its own JSON document. Adding a field to
//! a dimension needs no migration: missing fields load as defaults and
//! fields this version does not know are written back untouched.
//! [`MemoryStore`] has the same semantics without touching disk.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::profile::{Dimension, LearnerProfile, StudentId};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{context}: {source}")]
    Sqlite {
        context: String,
        #[source]
        source: rusqlite::Error,
    },
    #[error("stored profile for '{student}' is corrupt: {reason}")]
    Corrupt { student: String, reason: String },
    #[error("memory content must not be empty")]
    EmptyContent,
    #[error("store lock poisoned")]
    Poisoned,
}

trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, StoreError>;
}

impl<T> Context<T> for Result<T, rusqlite::Error> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, StoreError> {
        self.map_err(|source| StoreError::Sqlite {
            context: what(),
            source,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryCategory {
    StudentProfile,
    LearningProgress,
    SessionSummary,
    SkillMemory,
}

impl MemoryCategory {
    pub const ALL: [MemoryCategory; 4] = [
        MemoryCategory::StudentProfile,
        MemoryCategory::LearningProgress,
        MemoryCategory::SessionSummary,
        MemoryCategory::SkillMemory,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MemoryCategory::StudentProfile => "student_profile",
            MemoryCategory::LearningProgress => "learning_progress",
            MemoryCategory::SessionSummary => "session_summary",
            MemoryCategory::SkillMemory => "skill_memory",
        }
    }
}

impl fmt::Display for MemoryCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MemoryCategory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MemoryCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown memory category '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub student_id: StudentId,
    pub category: MemoryCategory,
    pub content: String,
    pub created_at: DateTime<Utc>,
}

impl MemoryRecord {
    pub fn new(
        student_id: StudentId,
        category: MemoryCategory,
        content: impl Into<String>,
        created_at: DateTime<Utc>,
    ) -> Result<Self, StoreError> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(StoreError::EmptyContent);
        }
        Ok(MemoryRecord {
            student_id,
            category,
            content,
            created_at,
        })
    }
}

/// Storage for learner profiles and education memory.
pub trait Store: Send + Sync {
    /// Inserts or replaces the row for `profile.student_id`.
    fn save_profile(&self, profile: &LearnerProfile) -> Result<(), StoreError>;
    fn load_profile(&self, student_id: &StudentId) -> Result<Option<LearnerProfile>, StoreError>;
    fn profile_count(&self) -> Result<usize, StoreError>;
    fn append_memory(&self, record: &MemoryRecord) -> Result<(), StoreError>;
    /// Records of one category for one student, newest first.
    fn list_memories(
        &self,
        student_id: &StudentId,
        category: MemoryCategory,
    ) -> Result<Vec<MemoryRecord>, StoreError>;
}

fn assemble(
    student: &str,
    dims: [String; 5],
    updated_at: &str,
) -> Result<LearnerProfile, StoreError> {
    let corrupt = |reason: String| StoreError::Corrupt {
        student: student.to_string(),
        reason,
    };
    let mut doc = serde_json::Map::new();
    doc.insert("student_id".into(), Value::String(student.to_string()));
    for (dim, text) in Dimension::ALL.iter().zip(dims) {
        let value: Value =
            serde_json::from_str(&text).map_err(|e| corrupt(format!("{dim}: {e}")))?;
        doc.insert(dim.as_str().into(), value);
    }
    doc.insert("updated_at".into(), Value::String(updated_at.to_string()));
    serde_json::from_value(Value::Object(doc)).map_err(|e| corrupt(e.to_string()))
}

fn dimension_texts(profile: &LearnerProfile) -> [String; 5] {
    Dimension::ALL.map(|d| profile.dimension_json(d).to_string())
}

/// Single-file SQLite backend.
pub struct SqliteStore {
    conn: Mutex<Connection>,
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS learner_profile (
    student_id    TEXT PRIMARY KEY,
    cognitive     TEXT NOT NULL,
    behavioral    TEXT NOT NULL,
    emotional     TEXT NOT NULL,
    metacognitive TEXT NOT NULL,
    contextual    TEXT NOT NULL,
    updated_at    TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS memories (
    id         INTEGER PRIMARY KEY AUTOINCREMENT,
    student_id TEXT NOT NULL,
    category   TEXT NOT NULL CHECK (category IN
        ('student_profile', 'learning_progress', 'session_summary', 'skill_memory')),
    content    TEXT NOT NULL,
    created_at TEXT NOT NULL,
    created_us INTEGER NOT NULL
);
CREATE INDEX IF NOT EXISTS memories_by_student ON memories (student_id, category, created_us);
";

impl SqliteStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            let _ = std::fs::create_dir_all(parent);
        }
        let conn = Connection::open(path).context(|| format!("opening {}", path.display()))?;
        SqliteStore::init(conn, &path.display().to_string())
    }

    pub fn open_in_memory() -> Result<Self, StoreError> {
        let conn = Connection::open_in_memory().context(|| "opening in-memory database".into())?;
        SqliteStore::init(conn, ":memory:")
    }

    fn init(conn: Connection, label: &str) -> Result<Self, StoreError> {
        conn.execute_batch(SCHEMA)
            .context(|| format!("creating schema in {label}"))?;
        Ok(SqliteStore {
            conn: Mutex::new(conn),
        })
    }

    fn conn(&self) -> Result<std::sync::MutexGuard<'_, Connection>, StoreError> {
        self.conn.lock().map_err(|_| StoreError::Poisoned)
    }

    /// Writes raw dimension documents, bypassing the typed profile. Used to
    /// stage rows written by other versions.
    pub fn put_raw_row(
        &self,
        student_id: &str,
        dims: [Value; 5],
        updated_at: DateTime<Utc>,
    ) -> Result<(), StoreError> {
        let [c, b, e, m, x] = dims.map(|v| v.to_string());
        self.conn()?
            .execute(
                "INSERT OR REPLACE INTO learner_profile VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
                params![student_id, c, b, e, m, x, updated_at.to_rfc3339()],
            )
            .context(|| format!("writing raw profile row for {student_id}"))?;
        Ok(())
    }
}

impl Store for SqliteStore {
    fn save_profile(&self, profile: &LearnerProfile) -> Result<(), StoreError> {
        let [c, b, e, m, x] = dimension_texts(profile);
        let id = profile.student_id.as_str();
        self.conn()?
            .execute(
                "INSERT INTO learner_profile
                     (student_id, cognitive, behavioral, emotional, metacognitive, contextual, updated_at)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)
                 ON CONFLICT(student_id) DO UPDATE SET
                     cognitive = excluded.cognitive,
                     behavioral = excluded.behavioral,
                     emotional = excluded.emotional,
                     metacognitive = excluded.metacognitive,
                     contextual = excluded.contextual,
                     updated_at = excluded.updated_at",
                params![id, c, b, e, m, x, profile.updated_at.to_rfc3339()],
            )
            .context(|| format!("saving profile for {id}"))?;
        Ok(())
    }

    fn load_profile(&self, student_id: &StudentId) -> Result<Option<LearnerProfile>, StoreError> {
        let id = student_id.as_str();
        let row = self
            .conn()?
            .query_row(
                "SELECT cognitive, behavioral, emotional, metacognitive, contextual, updated_at
                 FROM learner_profile WHERE student_id = ?1",
                params![id],
                |r| {
                    Ok((
                        [r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?],
                        r.get::<_, String>(5)?,
                    ))
                },
            )
            .optional()
            .context(|| format!("loading profile for {id}"))?;
        row.map(|(dims, updated)| assemble(id, dims, &updated))
            .transpose()
    }

    fn profile_count(&self) -> Result<usize, StoreError> {
        let n: i64 = self
            .conn()?
            .query_row("SELECT COUNT(*) FROM learner_profile", [], |r| r.get(0))
            .context(|| "counting profiles".into())?;
        Ok(n as usize)
    }

    fn append_memory(&self, record: &MemoryRecord) -> Result<(), StoreError> {
        if record.content.trim().is_empty() {
            return Err(StoreError::EmptyContent);
        }
        self.conn()?
            .execute(
                "INSERT INTO memories (student_id, category, content, created_at, created_us)
                 VALUES (?1, ?2, ?3, ?4, ?5)",
                params![
                    record.student_id.as_str(),
                    record.category.as_str(),
                    record.content,
                    record.created_at.to_rfc3339(),
                    record.created_at.timestamp_micros()
                ],
            )
            .context(|| format!("appending memory for {}", record.student_id))?;
        Ok(())
    }

    fn list_memories(
        &self,
        student_id: &StudentId,
        category: MemoryCategory,
    ) -> Result<Vec<MemoryRecord>, StoreError> {
        let conn = self.conn()?;
        let mut stmt = conn
            .prepare(
                "SELECT content, created_at FROM memories
                 WHERE student_id = ?1 AND category = ?2
                 ORDER BY created_us DESC, id DESC",
            )
            .context(|| "preparing memory query".into())?;
        let rows = stmt
            .query_map(params![student_id.as_str(), category.as_str()], |r| {
                Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?))
            })
            .context(|| format!("listing memories for {student_id}"))?;
        let mut out = Vec::new();
        for row in rows {
            let (content, created) = row.context(|| "reading memory row".into())?;
            let created_at = DateTime::parse_from_rfc3339(&created)
                .map_err(|e| StoreError::Corrupt {
                    student: student_id.to_string(),
                    reason: format!("memory timestamp: {e}"),
                })?
                .with_timezone(&Utc);
            out.push(MemoryRecord {
                student_id: student_id.clone(),
                category,
                content,
                created_at,
            });
        }
        Ok(out)
    }
}

/// In-process backend with the same serialization path as SQLite.
#[derive(Default)]
pub struct MemoryStore {
    profiles: Mutex<HashMap<StudentId, Value>>,
    memories: Mutex<Vec<MemoryRecord>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        MemoryStore::default()
    }
}

impl Store for MemoryStore {
    fn save_profile(&self, profile: &LearnerProfile) -> Result<(), StoreError> {
        let doc = json!({
            "cognitive": profile.dimension_json(Dimension::Cognitive),
            "behavioral": profile.dimension_json(Dimension::Behavioral),
            "emotional": profile.dimension_json(Dimension::Emotional),
            "metacognitive": profile.dimension_json(Dimension::Metacognitive),
            "contextual": profile.dimension_json(Dimension::Contextual),
            "updated_at": profile.updated_at.to_rfc3339(),
        });
        self.profiles
            .lock()
            .map_err(|_| StoreError::Poisoned)?
            .insert(profile.student_id.clone(), doc);
        Ok(())
    }

    fn load_profile(&self, student_id: &StudentId) -> Result<Option<LearnerProfile>, StoreError> {
        let guard = self.profiles.lock().map_err(|_| StoreError::Poisoned)?;
        let Some(doc) = guard.get(student_id) else {
            return Ok(None);
        };
        let dims = Dimension::ALL.map(|d| doc[d.as_str()].to_string());
        let updated = doc["updated_at"].as_str().unwrap_or_default().to_string();
        assemble(student_id.as_str(), dims, &updated).map(Some)
    }

    fn profile_count(&self) -> Result<usize, StoreError> {
        Ok(self.profiles.lock().map_err(|_| StoreError::Poisoned)?.len())
    }

    fn append_memory(&self, record: &MemoryRecord) -> Result<(), StoreError> {
        if record.content.trim().is_empty() {
            return Err(StoreError::EmptyContent);
        }
        self.memories
            .lock()
            .map_err(|_| StoreError::Poisoned)?
            .push(record.clone());
        Ok(())
    }

    fn list_memories(
        &self,
        student_id: &StudentId,
        category: MemoryCategory,
    ) -> Result<Vec<MemoryRecord>, StoreError> {
        let guard = self.memories.lock().map_err(|_| StoreError::Poisoned)?;
        let mut out: Vec<(usize, MemoryRecord)> = guard
            .iter()
            .enumerate()
            .filter(|(_, r)| &r.student_id == student_id && r.category == category)
            .map(|(i, r)| (i, r.clone()))
            .collect();
        out.sort_by(|(ia, a), (ib, b)| b.created_at.cmp(&a.created_at).then(ib.cmp(ia)));
        Ok(out.into_iter().map(|(_, r)| r).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{default_profile, Mood};
    use chrono::TimeZone;

    fn stores() -> Vec<Box<dyn Store>> {
        vec![
            Box::new(MemoryStore::new()),
            Box::new(SqliteStore::open_in_memory().unwrap()),
        ]
    }

    fn ts(secs: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_700_000_000 + secs, 0).unwrap()
    }

    #[test]
    fn round_trip_and_upsert() {
        for store in stores() {
            let mut p = default_profile("s1", 3, &["math"], "fractions").unwrap();
            p.mark_weak_topic("分数");
            p.updated_at = ts(5);
            store.save_profile(&p).unwrap();
            assert_eq!(store.load_profile(&p.student_id).unwrap(), Some(p.clone()));

            p.emotional.current_mood = Mood::Anxious;
            store.save_profile(&p).unwrap();
            let loaded = store.load_profile(&p.student_id).unwrap().unwrap();
            assert_eq!(loaded.emotional.current_mood, Mood::Anxious);
            assert_eq!(store.profile_count().unwrap(), 1);
        }
    }

    #[test]
    fn unknown_student_is_absent() {
        for store in stores() {
            let id = StudentId::new("nobody").unwrap();
            assert_eq!(store.load_profile(&id).unwrap(), None);
            assert!(store
                .list_memories(&id, MemoryCategory::SessionSummary)
                .unwrap()
                .is_empty());
        }
    }

    #[test]
    fn memories_newest_first() {
        for store in stores() {
            let id = StudentId::new("s1").unwrap();
            for i in 0..5 {
                let rec = MemoryRecord::new(
                    id.clone(),
                    MemoryCategory::LearningProgress,
                    format!("note {i}"),
                    ts(i),
                )
                .unwrap();
                store.append_memory(&rec).unwrap();
            }
            // same timestamp: insertion order breaks the tie
            for tag in ["a", "b"] {
                let rec =
                    MemoryRecord::new(id.clone(), MemoryCategory::SkillMemory, tag, ts(0)).unwrap();
                store.append_memory(&rec).unwrap();
            }
            let listed = store
                .list_memories(&id, MemoryCategory::LearningProgress)
                .unwrap();
            let contents: Vec<_> = listed.iter().map(|r| r.content.as_str()).collect();
            assert_eq!(contents, ["note 4", "note 3", "note 2", "note 1", "note 0"]);
            let skills = store.list_memories(&id, MemoryCategory::SkillMemory).unwrap();
            assert_eq!(skills[0].content, "b");
        }
    }

    #[test]
    fn empty_content_rejected() {
        let id = StudentId::new("s1").unwrap();
        assert!(matches!(
            MemoryRecord::new(id, MemoryCategory::SkillMemory, "  ", ts(0)),
            Err(StoreError::EmptyContent)
        ));
    }

    #[test]
    fn category_names_round_trip() {
        for c in MemoryCategory::ALL {
            assert_eq!(c.as_str().parse::<MemoryCategory>().unwrap(), c);
        }
        assert!("homework".parse::<MemoryCategory>().is_err());
    }

    #[test]
    fn io_failure_has_context() {
        let dir = tempfile::tempdir().unwrap();
        // a directory cannot be opened as a database file
        let err = SqliteStore::open(dir.path()).err().unwrap();
        assert!(err.to_string().contains(&dir.path().display().to_string()));
    }
}
