//! Tiered memory: a per-cycle scratchpad, typed long-term records and a
//! feature-hashed similarity index.
//!
//! Long-term memory is an append-only log. `rec` lines create records and
//! `acc` lines record retrieval hits, so replaying the log rebuilds the
//! store including every `last_accessed` stamp:
//!
//! ```text
//! rec=m000001 kind=reflection important=1 created=480 task=X01 app=excel content=...
//! acc=m000001 at=485
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::context::tokenize;
use crate::ids::{AppId, TaskId};
use crate::record::{parse_lines, Record, RecordError};
use crate::time::SimTime;

pub const EMBED_DIM: usize = 256;
/// Simulated minutes per agent cycle, used to express record age in cycles.
pub const CYCLE_MINUTES: u64 = 5;
pub const DEFAULT_K: usize = 5;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// Unit vector, or `Empty` for text with no word tokens.
#[derive(Debug, Clone, PartialEq)]
pub enum Embedding {
    Empty,
    Unit(Vec<f64>),
}

impl Embedding {
    pub fn is_empty(&self) -> bool {
        matches!(self, Embedding::Empty)
    }

    /// Cosine similarity; `None` when either side is the empty sentinel.
    pub fn cosine(&self, other: &Embedding) -> Option<f64> {
        match (self, other) {
            (Embedding::Unit(a), Embedding::Unit(b)) => {
                Some(a.iter().zip(b).map(|(x, y)| x * y).sum())
            }
            _ => None,
        }
    }
}

/// Hashes lowercased word tokens into [`EMBED_DIM`] buckets and L2-normalizes.
pub fn embed(text: &str) -> Embedding {
    let mut v = vec![0.0f64; EMBED_DIM];
    let mut any = false;
    for tok in tokenize(text) {
        if !tok.chars().next().is_some_and(|c| c.is_alphanumeric() || c == '_') {
            continue;
        }
        let h = fnv1a(tok.to_lowercase().as_bytes());
        v[(h % EMBED_DIM as u64) as usize] += 1.0;
        any = true;
    }
    if !any {
        return Embedding::Empty;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    Embedding::Unit(v)
}

#[derive(Debug, Clone, Default)]
pub struct SemanticStore {
    entries: BTreeMap<String, Embedding>,
}

impl SemanticStore {
    pub fn dimension(&self) -> usize {
        EMBED_DIM
    }

    pub fn insert(&mut self, record_id: &str, content: &str) {
        self.entries.insert(record_id.to_owned(), embed(content));
    }

    pub fn get(&self, record_id: &str) -> Option<&Embedding> {
        self.entries.get(record_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MemoryKind {
    MonthlyPlan,
    DailyPlan,
    ActionSummary,
    Reflection,
    Demonstration,
    Message,
}

impl MemoryKind {
    pub const ALL: [MemoryKind; 6] = [
        MemoryKind::MonthlyPlan,
        MemoryKind::DailyPlan,
        MemoryKind::ActionSummary,
        MemoryKind::Reflection,
        MemoryKind::Demonstration,
        MemoryKind::Message,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MemoryKind::MonthlyPlan => "monthly_plan",
            MemoryKind::DailyPlan => "daily_plan",
            MemoryKind::ActionSummary => "action_summary",
            MemoryKind::Reflection => "reflection",
            MemoryKind::Demonstration => "demonstration",
            MemoryKind::Message => "message",
        }
    }
}

impl fmt::Display for MemoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MemoryKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        MemoryKind::ALL.into_iter().find(|k| k.name() == s).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryRecord {
    pub record_id: String,
    kind: MemoryKind,
    pub content: String,
    pub important: bool,
    pub task_tag: Option<TaskId>,
    pub app_tag: Option<AppId>,
    pub created_at: SimTime,
    pub last_accessed: SimTime,
}

impl MemoryRecord {
    pub fn kind(&self) -> MemoryKind {
        self.kind
    }
}

/// Fields of a record before the store assigns it an id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewRecord {
    pub kind: MemoryKind,
    pub content: String,
    pub important: bool,
    pub task_tag: Option<TaskId>,
    pub app_tag: Option<AppId>,
}

impl NewRecord {
    pub fn new(kind: MemoryKind, content: impl Into<String>) -> Self {
        Self {
            kind,
            content: content.into(),
            important: false,
            task_tag: None,
            app_tag: None,
        }
    }

    pub fn important(mut self, important: bool) -> Self {
        self.important = important;
        self
    }

    pub fn task(mut self, task: impl Into<TaskId>) -> Self {
        self.task_tag = Some(task.into());
        self
    }

    pub fn app(mut self, app: impl Into<AppId>) -> Self {
        self.app_tag = Some(app.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalQuery {
    pub text: String,
    pub k: usize,
    pub now: SimTime,
    pub task_tag: Option<TaskId>,
    pub app_tag: Option<AppId>,
    pub kind: Option<MemoryKind>,
}

impl RetrievalQuery {
    pub fn new(text: impl Into<String>, now: SimTime) -> Self {
        Self {
            text: text.into(),
            k: DEFAULT_K,
            now,
            task_tag: None,
            app_tag: None,
            kind: None,
        }
    }

    /// Panics if `k` is zero.
    pub fn top(mut self, k: usize) -> Self {
        assert!(k >= 1, "retrieval k must be at least 1");
        self.k = k;
        self
    }

    pub fn for_app(mut self, app: impl Into<AppId>) -> Self {
        self.app_tag = Some(app.into());
        self
    }

    pub fn for_task(mut self, task: impl Into<TaskId>) -> Self {
        self.task_tag = Some(task.into());
        self
    }

    pub fn of_kind(mut self, kind: MemoryKind) -> Self {
        self.kind = Some(kind);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalWeights {
    pub recency: f64,
    pub important: f64,
    pub semantic: f64,
    /// Decay constant of the recency term, in cycles.
    pub half_life_cycles: f64,
}

impl Default for RetrievalWeights {
    fn default() -> Self {
        Self {
            recency: 0.4,
            important: 0.4,
            semantic: 0.2,
            half_life_cycles: 20.0,
        }
    }
}

impl RetrievalWeights {
    pub fn score(&self, record: &MemoryRecord, cosine: Option<f64>, now: SimTime) -> f64 {
        let age_cycles = now.saturating_sub(record.last_accessed) as f64 / CYCLE_MINUTES as f64;
        let recency = (-age_cycles / self.half_life_cycles).exp();
        let important = if record.important { 1.0 } else { 0.0 };
        self.recency * recency + self.important * important + self.semantic * cosine.unwrap_or(0.0)
    }
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("line {line}: access to unknown record {record_id}")]
    UnknownRecord { line: usize, record_id: String },
    #[error("line {line}: duplicate record {record_id}")]
    DuplicateRecord { line: usize, record_id: String },
    #[error("memory log {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Outcome of one task for end-of-day consolidation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DayOutcome {
    Completed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskNote {
    pub task_id: TaskId,
    pub app_id: AppId,
    pub outcome: DayOutcome,
    pub note: String,
}

/// Per-cycle scratchpad. Cleared at every cycle start; nothing here survives
/// unless explicitly written to the long-term store.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkingMemory {
    pub cycle: u32,
    notes: Vec<String>,
}

impl WorkingMemory {
    pub fn reset(&mut self, cycle: u32) {
        self.cycle = cycle;
        self.notes.clear();
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }
}

/// Long-term structured memory plus its semantic index.
#[derive(Debug, Default)]
pub struct MemoryStore {
    records: BTreeMap<String, MemoryRecord>,
    semantic: SemanticStore,
    weights: RetrievalWeights,
    next_id: u64,
    log: String,
    log_path: Option<PathBuf>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_weights(weights: RetrievalWeights) -> Self {
        Self {
            weights,
            ..Self::default()
        }
    }

    pub fn weights(&self) -> RetrievalWeights {
        self.weights
    }

    /// Opens (or creates) a log file, replays it, and appends to it from now on.
    pub fn open_log(path: &Path) -> Result<Self, MemoryError> {
        let io = |source| MemoryError::Io {
            path: path.display().to_string(),
            source,
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io(e)),
        };
        let mut store = Self::replay(&text)?;
        store.log_path = Some(path.to_path_buf());
        Ok(store)
    }

    /// Rebuilds a store from log text.
    pub fn replay(text: &str) -> Result<Self, MemoryError> {
        let mut store = Self::new();
        for r in parse_lines(text)? {
            match r.first_key() {
                Some("rec") => {
                    let rec = record_from_line(&r)?;
                    if store.records.contains_key(&rec.record_id) {
                        return Err(MemoryError::DuplicateRecord {
                            line: r.line,
                            record_id: rec.record_id,
                        });
                    }
                    if let Some(n) = rec.record_id.strip_prefix('m').and_then(|n| n.parse::<u64>().ok()) {
                        store.next_id = store.next_id.max(n);
                    }
                    store.semantic.insert(&rec.record_id, &rec.content);
                    store.records.insert(rec.record_id.clone(), rec);
                }
                Some("acc") => {
                    let id = r.require("acc")?;
                    let at = SimTime(r.parse_field("at")?);
                    let rec = store.records.get_mut(id).ok_or_else(|| MemoryError::UnknownRecord {
                        line: r.line,
                        record_id: id.to_owned(),
                    })?;
                    rec.last_accessed = rec.last_accessed.max(at);
                }
                _ => return Err(RecordError::UnknownRecord { line: r.line }.into()),
            }
            store.log.push_str(&r.render());
            store.log.push('\n');
        }
        Ok(store)
    }

    /// Full log text written so far.
    pub fn log_text(&self) -> &str {
        &self.log
    }

    fn append(&mut self, r: Record) -> Result<(), MemoryError> {
        let line = r.render() + "\n";
        if let Some(path) = &self.log_path {
            let io = |source| MemoryError::Io {
                path: path.display().to_string(),
                source,
            };
            let mut f = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(io)?;
            f.write_all(line.as_bytes()).map_err(io)?;
        }
        self.log.push_str(&line);
        Ok(())
    }

    pub fn insert(&mut self, new: NewRecord, now: SimTime) -> Result<String, MemoryError> {
        self.next_id += 1;
        let rec = MemoryRecord {
            record_id: format!("m{:06}", self.next_id),
            kind: new.kind,
            content: new.content,
            important: new.important,
            task_tag: new.task_tag,
            app_tag: new.app_tag,
            created_at: now,
            last_accessed: now,
        };
        self.append(record_to_line(&rec))?;
        self.semantic.insert(&rec.record_id, &rec.content);
        let id = rec.record_id.clone();
        self.records.insert(id.clone(), rec);
        Ok(id)
    }

    pub fn get(&self, record_id: &str) -> Option<&MemoryRecord> {
        self.records.get(record_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &MemoryRecord> {
        self.records.values()
    }

    pub fn semantic(&self) -> &SemanticStore {
        &self.semantic
    }

    /// Ranked records without touching access stamps.
    pub fn rank(&self, query: &RetrievalQuery) -> Vec<(f64, &MemoryRecord)> {
        let q = embed(&query.text);
        let mut scored: Vec<(f64, &MemoryRecord)> = self
            .records
            .values()
            .filter(|r| query.kind.is_none_or(|k| r.kind == k))
            .filter(|r| query.task_tag.is_none() || r.task_tag == query.task_tag)
            .filter(|r| query.app_tag.is_none() || r.app_tag == query.app_tag)
            .map(|r| {
                let cos = self.semantic.get(&r.record_id).and_then(|e| e.cosine(&q));
                (self.weights.score(r, cos, query.now), r)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.record_id.cmp(&b.1.record_id)));
        scored.truncate(query.k);
        scored
    }

    /// Top-k records by score; marks each returned record as accessed at `query.now`.
    pub fn retrieve(&mut self, query: &RetrievalQuery) -> Result<Vec<MemoryRecord>, MemoryError> {
        let ids: Vec<String> = self
            .rank(query)
            .into_iter()
            .map(|(_, r)| r.record_id.clone())
            .collect();
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let rec = self.records.get_mut(&id).expect("ranked from store");
            if query.now > rec.last_accessed {
                rec.last_accessed = query.now;
                let line = Record::new().with("acc", &id).with("at", query.now.minutes().to_string());
                self.append(line)?;
            }
            out.push(self.records[&id].clone());
        }
        Ok(out)
    }

    /// Writes one reflection plus one action summary per completed or
    /// skipped task, returning the new records in insertion order.
    pub fn consolidate_day(
        &mut self,
        notes: &[TaskNote],
        reflection: &str,
        now: SimTime,
    ) -> Result<Vec<MemoryRecord>, MemoryError> {
        let ids_with = |outcome| {
            notes
                .iter()
                .filter(|n| n.outcome == outcome)
                .map(|n| n.task_id.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let completed = ids_with(DayOutcome::Completed);
        let skipped = ids_with(DayOutcome::Skipped);
        let mut content = format!("day {} reflection: {reflection}", now.day());
        if !completed.is_empty() {
            content.push_str(&format!(" completed: {completed}."));
        }
        if !skipped.is_empty() {
            content.push_str(&format!(" skipped: {skipped}."));
        }
        let mut ids = vec![self.insert(NewRecord::new(MemoryKind::Reflection, content).important(true), now)?];
        for n in notes {
            let verb = match n.outcome {
                DayOutcome::Completed => "completed",
                DayOutcome::Skipped => "skipped",
            };
            let summary = NewRecord::new(
                MemoryKind::ActionSummary,
                format!("{} {verb} in {}: {}", n.task_id, n.app_id, n.note),
            )
            .task(n.task_id.clone())
            .app(n.app_id.clone())
            .important(n.outcome == DayOutcome::Skipped);
            ids.push(self.insert(summary, now)?);
        }
        Ok(ids.iter().map(|id| self.records[id].clone()).collect())
    }
}

fn record_to_line(rec: &MemoryRecord) -> Record {
    let mut r = Record::new()
        .with("rec", &rec.record_id)
        .with("kind", rec.kind.name())
        .with("important", if rec.important { "1" } else { "0" })
        .with("created", rec.created_at.minutes().to_string());
    if let Some(t) = &rec.task_tag {
        r.push("task", t.as_str());
    }
    if let Some(a) = &rec.app_tag {
        r.push("app", a.as_str());
    }
    r.push("content", &rec.content);
    r
}

fn record_from_line(r: &Record) -> Result<MemoryRecord, RecordError> {
    let kind_raw = r.require("kind")?;
    let kind = kind_raw.parse().map_err(|_| r.invalid("kind", kind_raw))?;
    let important = match r.require("important")? {
        "1" => true,
        "0" => false,
        other => return Err(r.invalid("important", other)),
    };
    let created = SimTime(r.parse_field("created")?);
    Ok(MemoryRecord {
        record_id: r.require("rec")?.to_owned(),
        kind,
        content: r.require("content")?.to_owned(),
        important,
        task_tag: r.get("task").map(TaskId::from),
        app_tag: r.get("app").map(AppId::from),
        created_at: created,
        last_accessed: created,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Oracle: bucket counts computed directly from the hashing rule.
    fn dot_by_hand(a: &str, b: &str) -> f64 {
        let counts = |s: &str| {
            let mut m = BTreeMap::new();
            for w in s.split_whitespace() {
                *m.entry(fnv1a(w.to_lowercase().as_bytes()) % 256).or_insert(0.0) += 1.0;
            }
            m
        };
        let (ca, cb) = (counts(a), counts(b));
        let norm = |m: &BTreeMap<u64, f64>| m.values().map(|x: &f64| x * x).sum::<f64>().sqrt();
        let dot: f64 = ca.iter().map(|(k, v)| v * cb.get(k).unwrap_or(&0.0)).sum();
        dot / (norm(&ca) * norm(&cb))
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn embedding_similarity() {
        let a = embed("quarterly sales report");
        let b = embed("sales report Q4");
        let c = embed("compiler bug triage");
        assert!((a.cosine(&a).unwrap() - 1.0).abs() < 1e-12);
        let ab = a.cosine(&b).unwrap();
        let ac = a.cosine(&c).unwrap();
        assert!((ab - dot_by_hand("quarterly sales report", "sales report Q4")).abs() < 1e-12);
        assert!((ac - dot_by_hand("quarterly sales report", "compiler bug triage")).abs() < 1e-12);
        assert!(ab > ac);
        assert!(embed("").is_empty());
        assert!(embed(" .,; ").is_empty());
        assert_eq!(embed("").cosine(&a), None);
    }

    fn store_with(records: &[(&str, bool, u64)]) -> MemoryStore {
        let mut s = MemoryStore::new();
        for (content, important, at) in records {
            s.insert(
                NewRecord::new(MemoryKind::ActionSummary, *content).important(*important),
                SimTime(*at),
            )
            .unwrap();
        }
        s
    }

    #[test]
    fn important_ranks_first() {
        let mut s = store_with(&[("same text", false, 0), ("same text", true, 0)]);
        let got = s.retrieve(&RetrievalQuery::new("same text", SimTime(0))).unwrap();
        assert_eq!(got.len(), 2);
        assert!(got[0].important);
        // 0.4 + 0.4 + 0.2 vs 0.4 + 0.2
        let ranked = s.rank(&RetrievalQuery::new("same text", SimTime(0)));
        assert!((ranked[0].0 - 1.0).abs() < 1e-12);
        assert!((ranked[1].0 - 0.6).abs() < 1e-12);
    }

    #[test]
    fn recent_ranks_first_and_access_is_marked() {
        let now = 100 * CYCLE_MINUTES;
        let mut s = store_with(&[("note", false, 0), ("note", false, now)]);
        let ranked = s.rank(&RetrievalQuery::new("note", SimTime(now)));
        assert_eq!(ranked[0].1.record_id, "m000002");
        let expected_old = 0.4 * (-100.0f64 / 20.0).exp() + 0.2;
        assert!((ranked[1].0 - expected_old).abs() < 1e-12);
        let got = s.retrieve(&RetrievalQuery::new("note", SimTime(now)).top(1)).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(s.get("m000001").unwrap().last_accessed, SimTime(0));
        s.retrieve(&RetrievalQuery::new("note", SimTime(now + 5))).unwrap();
        assert_eq!(s.get("m000001").unwrap().last_accessed, SimTime(now + 5));
    }

    #[test]
    fn k_beyond_size_and_filters() {
        let mut s = MemoryStore::new();
        s.insert(NewRecord::new(MemoryKind::Demonstration, "fill totals").app("excel"), SimTime(0))
            .unwrap();
        s.insert(NewRecord::new(MemoryKind::Demonstration, "fill totals").app("word"), SimTime(0))
            .unwrap();
        let all = s.retrieve(&RetrievalQuery::new("x", SimTime(1)).top(10)).unwrap();
        assert_eq!(all.len(), 2);
        let excel = s.retrieve(&RetrievalQuery::new("x", SimTime(1)).for_app("excel")).unwrap();
        assert_eq!(excel.len(), 1);
        assert_eq!(excel[0].app_tag, Some("excel".into()));
    }

    #[test]
    fn consolidation_counts_and_template() {
        let mut s = MemoryStore::new();
        let note = |id: &str, outcome| TaskNote {
            task_id: id.into(),
            app_id: "excel".into(),
            outcome,
            note: "done".into(),
        };
        let notes = vec![
            note("A", DayOutcome::Completed),
            note("B", DayOutcome::Completed),
            note("C", DayOutcome::Completed),
            note("D", DayOutcome::Skipped),
        ];
        let out = s.consolidate_day(&notes, "steady", SimTime::at(1, 18, 0)).unwrap();
        assert_eq!(out.len(), 5);
        assert_eq!(out[0].kind(), MemoryKind::Reflection);
        assert!(out[0].content.contains('D'));
        assert_eq!(out.iter().filter(|r| r.kind() == MemoryKind::ActionSummary).count(), 4);
        assert_eq!(s.semantic().len(), 5);
        let empty = s.consolidate_day(&[], "quiet", SimTime::at(2, 18, 0)).unwrap();
        assert_eq!(empty.len(), 1);
    }

    #[test]
    fn log_replay_and_file_persistence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.log");
        {
            let mut s = MemoryStore::open_log(&path).unwrap();
            s.insert(NewRecord::new(MemoryKind::Message, "hi\tthere\nok").task("T1"), SimTime(3)).unwrap();
            s.insert(NewRecord::new(MemoryKind::DailyPlan, "plan").important(true), SimTime(4)).unwrap();
            s.retrieve(&RetrievalQuery::new("plan", SimTime(9))).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        let mut back = MemoryStore::open_log(&path).unwrap();
        assert_eq!(back.get("m000001").unwrap().content, "hi\tthere\nok");
        assert_eq!(back.get("m000002").unwrap().last_accessed, SimTime(9));
        let id = back.insert(NewRecord::new(MemoryKind::Reflection, "r"), SimTime(10)).unwrap();
        assert_eq!(id, "m000003");
        assert!(matches!(MemoryStore::replay("acc=m9\tat=1\n"), Err(MemoryError::UnknownRecord { .. })));
    }

    proptest! {
        #[test]
        fn retrieval_invariants(
            items in proptest::collection::vec(("[a-z ]{0,20}", any::<bool>(), 0u64..500, prop_oneof![Just("excel"), Just("word")]), 0..20),
            text in "[a-z ]{0,20}",
            k in 1usize..8,
            now in 500u64..900,
        ) {
            let mut s = MemoryStore::new();
            for (c, imp, at, app) in &items {
                s.insert(NewRecord::new(MemoryKind::ActionSummary, c.clone()).important(*imp).app(*app), SimTime(*at)).unwrap();
            }
            let q = RetrievalQuery::new(text, SimTime(now)).top(k).for_app("excel");
            let first = s.rank(&q).into_iter().map(|(sc, r)| (sc, r.record_id.clone())).collect::<Vec<_>>();
            let second = s.rank(&q).into_iter().map(|(sc, r)| (sc, r.record_id.clone())).collect::<Vec<_>>();
            prop_assert_eq!(&first, &second);
            let got = s.retrieve(&q).unwrap();
            prop_assert!(got.len() <= k);
            prop_assert!(got.iter().all(|r| r.app_tag == Some("excel".into())));
            prop_assert!(got.iter().all(|r| r.last_accessed >= r.created_at));
            let replayed = MemoryStore::replay(s.log_text()).unwrap();
            prop_assert_eq!(replayed.records().cloned().collect::<Vec<_>>(), s.records().cloned().collect::<Vec<_>>());
        }

        #[test]
        fn embeddings_are_unit_or_empty(text in "\\PC{0,60}") {
            match embed(&text) {
                Embedding::Empty => {}
                Embedding::Unit(v) => {
                    let n: f64 = v.iter().map(|x| x * x).sum();
                    prop_assert!((n - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
