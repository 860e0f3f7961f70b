//! Bounded context window with critical/routine stratification.
//!
//! Critical entries (tool calls, state changes, plan updates, error signals)
//! are never rewritten. When the window exceeds its token budget, routine
//! entries are folded into one structured summary (stage 1); if that is not
//! enough the summary is re-rendered in compact form (stage 2). Anything
//! still over budget is reported as [`ContextError::OverCompression`].

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::ids::TaskId;
use crate::time::SimTime;

pub const DEFAULT_BUDGET: usize = 4096;

const MAX_DECISIONS: usize = 8;
const MAX_BLOCKERS: usize = 6;
const SNIPPET_TOKENS: usize = 8;
const BLOCKER_WORDS: [&str; 6] = ["blocked", "error", "failed", "waiting", "not_ready", "missing"];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits text into tokens: maximal runs of word characters, with every
/// other non-whitespace character standing alone.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            word_start.get_or_insert(i);
            continue;
        }
        if let Some(s) = word_start.take() {
            out.push(&text[s..i]);
        }
        if !c.is_whitespace() {
            out.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = word_start {
        out.push(&text[s..]);
    }
    out
}

pub fn token_count(text: &str) -> usize {
    tokenize(text).len()
}

/// First `n` tokens of `text`, space-joined.
fn snippet(text: &str, n: usize) -> String {
    tokenize(text).into_iter().take(n).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntryKind {
    Critical,
    Routine,
}

impl EntryKind {
    pub fn name(self) -> &'static str {
        match self {
            EntryKind::Critical => "critical",
            EntryKind::Routine => "routine",
        }
    }
}

/// Where an entry came from; decides its kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    ToolCall,
    StateChange,
    PlanUpdate,
    ErrorSignal,
    Observation,
    Reasoning,
}

pub fn classify_entry(_content: &str, origin: Origin) -> EntryKind {
    match origin {
        Origin::ToolCall | Origin::StateChange | Origin::PlanUpdate | Origin::ErrorSignal => {
            EntryKind::Critical
        }
        Origin::Observation | Origin::Reasoning => EntryKind::Routine,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextEntry {
    kind: EntryKind,
    origin: Origin,
    content: String,
    tokens: usize,
    pub task_tag: Option<TaskId>,
    pub cycle: u32,
    pub created_at: SimTime,
    summary: Option<SummaryRecord>,
}

impl ContextEntry {
    pub fn new(
        content: impl Into<String>,
        origin: Origin,
        task_tag: Option<TaskId>,
        cycle: u32,
        created_at: SimTime,
    ) -> Self {
        let content = content.into();
        Self {
            kind: classify_entry(&content, origin),
            origin,
            tokens: token_count(&content),
            content,
            task_tag,
            cycle,
            created_at,
            summary: None,
        }
    }

    pub fn kind(&self) -> EntryKind {
        self.kind
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn content(&self) -> &str {
        &self.content
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn summary(&self) -> Option<&SummaryRecord> {
        self.summary.as_ref()
    }

    fn from_summary(record: SummaryRecord, text: String, created_at: SimTime) -> Self {
        let cycle = record.source_cycles.1;
        Self {
            kind: EntryKind::Routine,
            origin: Origin::Observation,
            tokens: token_count(&text),
            content: text,
            task_tag: None,
            cycle,
            created_at,
            summary: Some(record),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub enum SummarizationStage {
    #[default]
    None,
    Stage1,
    Stage2,
}

/// Structured digest of summarized routine content.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SummaryRecord {
    pub decisions: Vec<String>,
    pub blockers: Vec<String>,
    /// app id -> state digest
    pub app_state: BTreeMap<String, String>,
    /// Inclusive cycle range covered.
    pub source_cycles: (u32, u32),
    pub tokens: usize,
}

fn push_capped(list: &mut Vec<String>, item: String, cap: usize) {
    list.retain(|x| *x != item);
    list.push(item);
    if list.len() > cap {
        list.remove(0);
    }
}

impl SummaryRecord {
    fn build(routine: &[ContextEntry], app_state: &BTreeMap<String, String>) -> Self {
        let mut record = SummaryRecord {
            source_cycles: (u32::MAX, 0),
            app_state: app_state.clone(),
            ..Default::default()
        };
        for e in routine {
            if let Some(prev) = &e.summary {
                record.source_cycles.0 = record.source_cycles.0.min(prev.source_cycles.0);
                record.source_cycles.1 = record.source_cycles.1.max(prev.source_cycles.1);
                for d in &prev.decisions {
                    push_capped(&mut record.decisions, d.clone(), MAX_DECISIONS);
                }
                for b in &prev.blockers {
                    push_capped(&mut record.blockers, b.clone(), MAX_BLOCKERS);
                }
                continue;
            }
            record.source_cycles.0 = record.source_cycles.0.min(e.cycle);
            record.source_cycles.1 = record.source_cycles.1.max(e.cycle);
            let lower = e.content.to_lowercase();
            if BLOCKER_WORDS.iter().any(|w| lower.contains(w)) {
                push_capped(&mut record.blockers, snippet(&e.content, SNIPPET_TOKENS), MAX_BLOCKERS);
            } else if e.origin == Origin::Reasoning {
                let tag = e.task_tag.as_ref().map_or("general", TaskId::as_str);
                let decision = format!("{tag}: {}", snippet(&e.content, SNIPPET_TOKENS));
                // One decision per task tag; the latest wins.
                let prefix = format!("{tag}:");
                record.decisions.retain(|d| !d.starts_with(&prefix));
                push_capped(&mut record.decisions, decision, MAX_DECISIONS);
            }
        }
        if record.source_cycles.0 == u32::MAX {
            record.source_cycles.0 = 0;
        }
        record
    }

    fn header(&self) -> String {
        format!(
            "summary cycles {}-{}:",
            self.source_cycles.0, self.source_cycles.1
        )
    }

    /// Full template: decisions, blockers and application state prose.
    pub fn render_stage1(&self) -> String {
        let mut out = self.header();
        if !self.decisions.is_empty() {
            out.push_str(&format!(" decisions: {}.", self.decisions.join("; ")));
        }
        if !self.blockers.is_empty() {
            out.push_str(&format!(" blockers: {}.", self.blockers.join("; ")));
        }
        if !self.app_state.is_empty() {
            let apps: Vec<String> = self
                .app_state
                .iter()
                .map(|(app, state)| format!("{app} {state}"))
                .collect();
            out.push_str(&format!(" app state: {}.", apps.join("; ")));
        }
        out
    }

    /// Compact template: decisions and blockers kept, app state reduced to
    /// the focused artifact per app.
    pub fn render_stage2(&self) -> String {
        let mut out = self.header();
        if !self.decisions.is_empty() {
            out.push_str(&format!(" decisions: {}", self.decisions.join("; ")));
        }
        if !self.blockers.is_empty() {
            out.push_str(&format!(" blockers: {}", self.blockers.join("; ")));
        }
        if !self.app_state.is_empty() {
            let apps: Vec<String> = self
                .app_state
                .iter()
                .map(|(app, state)| {
                    let focus = state
                        .split_whitespace()
                        .find_map(|w| w.strip_prefix("focus="))
                        .unwrap_or("none");
                    format!("{app}={focus}")
                })
                .collect();
            out.push_str(&format!(" apps {}", apps.join(" ")));
        }
        let stage1 = self.render_stage1();
        if token_count(&out) > token_count(&stage1) {
            stage1
        } else {
            out
        }
    }

    /// Drops detail until the stage-1 rendering is strictly smaller than
    /// `limit` tokens. Returns `None` if even the bare header is too big.
    fn fit_below(mut self, limit: usize) -> Option<(Self, String)> {
        loop {
            let text = self.render_stage1();
            let tokens = token_count(&text);
            if tokens < limit {
                self.tokens = tokens;
                return Some((self, text));
            }
            if !self.app_state.is_empty() {
                self.app_state.clear();
            } else if !self.blockers.is_empty() {
                self.blockers.remove(0);
            } else if !self.decisions.is_empty() {
                self.decisions.remove(0);
            } else {
                return None;
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContextError {
    #[error("context over budget after stage-2 summarization: {total} > {budget} tokens")]
    OverCompression { total: usize, budget: usize },
}

/// What a stabilization pass did.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Stabilized {
    pub stage: SummarizationStage,
    /// Summary produced by this pass, if any; owners persist it to memory.
    pub summary: Option<SummaryRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextWindow {
    entries: Vec<ContextEntry>,
    budget: usize,
    stage: SummarizationStage,
    app_state: BTreeMap<String, String>,
    total: usize,
}

impl Default for ContextWindow {
    fn default() -> Self {
        Self::new(DEFAULT_BUDGET)
    }
}

impl ContextWindow {
    pub fn new(budget: usize) -> Self {
        Self {
            entries: Vec::new(),
            budget,
            stage: SummarizationStage::None,
            app_state: BTreeMap::new(),
            total: 0,
        }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn total_tokens(&self) -> usize {
        self.total
    }

    pub fn entries(&self) -> &[ContextEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Most advanced stage reached so far.
    pub fn summarization_stage(&self) -> SummarizationStage {
        self.stage
    }

    /// Application state recorded into the next summary.
    pub fn set_app_state(&mut self, state: BTreeMap<String, String>) {
        self.app_state = state;
    }

    pub fn critical_contents(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.kind == EntryKind::Critical)
            .map(|e| e.content.as_str())
            .collect()
    }

    pub fn contains_task_entry(&self, task: &TaskId) -> bool {
        self.entries
            .iter()
            .any(|e| e.task_tag.as_ref() == Some(task))
    }

    pub fn push_and_stabilize(&mut self, entry: ContextEntry) -> Result<Stabilized, ContextError> {
        self.total += entry.tokens;
        self.entries.push(entry);
        self.stabilize()
    }

    /// Brings the window under budget; a no-op when it already is.
    pub fn stabilize(&mut self) -> Result<Stabilized, ContextError> {
        let mut done = Stabilized::default();
        if self.total <= self.budget {
            return Ok(done);
        }

        let routine_tokens: usize = self
            .entries
            .iter()
            .filter(|e| e.kind == EntryKind::Routine)
            .map(|e| e.tokens)
            .sum();
        if routine_tokens > 0 {
            let first_routine = self
                .entries
                .iter()
                .position(|e| e.kind == EntryKind::Routine)
                .expect("routine tokens present");
            let (routine, kept): (Vec<_>, Vec<_>) = std::mem::take(&mut self.entries)
                .into_iter()
                .partition(|e| e.kind == EntryKind::Routine);
            let latest = routine.iter().map(|e| e.created_at).max().unwrap_or_default();
            let record = SummaryRecord::build(&routine, &self.app_state);
            self.entries = kept;
            if let Some((record, text)) = record.fit_below(routine_tokens) {
                let entry = ContextEntry::from_summary(record.clone(), text, latest);
                let at = first_routine.min(self.entries.len());
                self.entries.insert(at, entry);
                done.summary = Some(record);
            }
            self.recount();
            done.stage = SummarizationStage::Stage1;
            self.stage = self.stage.max(SummarizationStage::Stage1);
            if self.total <= self.budget {
                return Ok(done);
            }
        }

        if let Some(entry) = self.entries.iter_mut().find(|e| e.summary.is_some()) {
            let record = entry.summary.as_mut().expect("checked");
            let text = record.render_stage2();
            record.tokens = token_count(&text);
            entry.tokens = record.tokens;
            entry.content = text;
            done.summary = Some(record.clone());
        }
        self.recount();
        done.stage = SummarizationStage::Stage2;
        self.stage = SummarizationStage::Stage2;
        if self.total <= self.budget {
            Ok(done)
        } else {
            Err(ContextError::OverCompression {
                total: self.total,
                budget: self.budget,
            })
        }
    }

    fn recount(&mut self) {
        self.total = self.entries.iter().map(|e| e.tokens).sum();
    }

    /// Debug dump: one block per entry, headed by `kind|tokens|cycle`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{}|{}|{}\n{}\n\n", e.kind.name(), e.tokens, e.cycle, e.content));
        }
        out
    }
}

impl fmt::Display for ContextWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(n: usize, word: &str) -> String {
        vec![word; n].join(" ")
    }

    fn entry(content: String, origin: Origin, cycle: u32) -> ContextEntry {
        ContextEntry::new(content, origin, None, cycle, SimTime(cycle as u64))
    }

    #[test]
    fn token_rule() {
        assert_eq!(token_count(""), 0);
        assert_eq!(token_count("update plan."), 3);
        assert_eq!(token_count("  edit(B3, \"Q4\")  "), 8);
        assert_eq!(token_count("naïve café_1"), 2);
        let (a, b) = ("open doc1.", "then-edit it");
        assert_eq!(token_count(a) + token_count(b), token_count(&format!("{a} {b}")));
    }

    #[test]
    fn classification() {
        assert_eq!(classify_entry("x", Origin::PlanUpdate), EntryKind::Critical);
        assert_eq!(classify_entry("x", Origin::Observation), EntryKind::Routine);
        assert_eq!(classify_entry("x", Origin::ErrorSignal), EntryKind::Critical);
        assert_eq!(classify_entry("x", Origin::ToolCall), EntryKind::Critical);
        assert_eq!(classify_entry("x", Origin::StateChange), EntryKind::Critical);
        assert_eq!(classify_entry("x", Origin::Reasoning), EntryKind::Routine);
    }

    #[test]
    fn small_push_does_not_summarize() {
        let mut w = ContextWindow::default();
        let r = w.push_and_stabilize(entry("hello there".into(), Origin::Observation, 0)).unwrap();
        assert_eq!(r.stage, SummarizationStage::None);
        assert_eq!(w.total_tokens(), 2);
        assert_eq!(w.summarization_stage(), SummarizationStage::None);
    }

    #[test]
    fn stage1_fires_and_preserves_critical_bytes() {
        let mut w = ContextWindow::default();
        w.set_app_state([("excel".to_string(), "focus=doc1 ready=yes".to_string())].into());
        // 2000 critical + 2000 routine = 4000 tokens.
        for i in 0..20 {
            w.push_and_stabilize(entry(format!("edit B{i} = {}", words(97, "v")), Origin::ToolCall, i))
                .unwrap();
            w.push_and_stabilize(entry(words(100, "seen"), Origin::Observation, i)).unwrap();
        }
        assert_eq!(w.total_tokens(), 4000);
        let before: Vec<String> = w.critical_contents().iter().map(|s| s.to_string()).collect();
        let r = w
            .push_and_stabilize(entry(words(200, "note"), Origin::Reasoning, 21))
            .unwrap();
        assert_eq!(r.stage, SummarizationStage::Stage1);
        assert!(w.total_tokens() <= 4096);
        let after: Vec<String> = w.critical_contents().iter().map(|s| s.to_string()).collect();
        assert_eq!(before, after);
        let summary = r.summary.unwrap();
        assert!(summary.tokens < 2200);
        assert_eq!(summary.source_cycles, (0, 21));
        assert!(w.dump().contains("routine|"));
    }

    #[test]
    fn all_critical_overflow_is_overcompression() {
        let mut w = ContextWindow::default();
        let mut result = Ok(Stabilized::default());
        for i in 0..50 {
            result = w.push_and_stabilize(entry(words(100, "call"), Origin::ToolCall, i));
        }
        assert_eq!(w.total_tokens(), 5000);
        assert_eq!(
            result,
            Err(ContextError::OverCompression {
                total: 5000,
                budget: 4096
            })
        );
    }

    #[test]
    fn stage2_is_no_larger_than_stage1() {
        let mut record = SummaryRecord {
            decisions: vec!["X01: edit totals".into()],
            blockers: vec!["waiting on data".into()],
            app_state: [("excel".to_string(), "focus=d1 ready=yes".to_string())].into(),
            source_cycles: (1, 4),
            tokens: 0,
        };
        assert!(token_count(&record.render_stage2()) < token_count(&record.render_stage1()));
        record.app_state.clear();
        assert!(token_count(&record.render_stage2()) <= token_count(&record.render_stage1()));
    }

    #[test]
    fn stabilize_is_idempotent() {
        let mut w = ContextWindow::new(50);
        for i in 0..10 {
            let _ = w.push_and_stabilize(entry(words(9, "obs"), Origin::Observation, i));
        }
        let snapshot = w.clone();
        assert_eq!(w.stabilize().unwrap(), Stabilized::default());
        assert_eq!(w, snapshot);
    }

    #[test]
    fn tiny_routine_is_dropped_not_inflated() {
        let mut w = ContextWindow::new(10);
        w.push_and_stabilize(entry("ok".into(), Origin::Observation, 0)).unwrap();
        let r = w.push_and_stabilize(entry(words(10, "c"), Origin::ToolCall, 1)).unwrap();
        assert_eq!(r.stage, SummarizationStage::Stage1);
        assert!(r.summary.is_none());
        assert_eq!(w.total_tokens(), 10);
    }

    use proptest::prelude::*;

    fn arb_entry() -> impl Strategy<Value = (bool, usize)> {
        (any::<bool>(), 1usize..120)
    }

    proptest! {
        #[test]
        fn window_invariants(items in proptest::collection::vec(arb_entry(), 1..60), budget in 64usize..800) {
            let mut w = ContextWindow::new(budget);
            let mut criticals: Vec<String> = Vec::new();
            for (i, (critical, n)) in items.into_iter().enumerate() {
                let origin = if critical { Origin::ToolCall } else { Origin::Reasoning };
                let text = words(n, if critical { "act" } else { "think" });
                if critical {
                    criticals.push(text.clone());
                }
                let before_stage = w.summarization_stage();
                let result = w.push_and_stabilize(entry(text, origin, i as u32));
                prop_assert_eq!(w.critical_contents(), criticals.iter().map(String::as_str).collect::<Vec<_>>());
                prop_assert!(w.summarization_stage() >= before_stage);
                match result {
                    Ok(_) => {
                        prop_assert!(w.total_tokens() <= budget);
                        let snapshot = w.clone();
                        prop_assert_eq!(w.stabilize().unwrap(), Stabilized::default());
                        prop_assert_eq!(&w, &snapshot);
                    }
                    Err(ContextError::OverCompression { total, .. }) => {
                        prop_assert!(total > budget);
                        let critical_total: usize = criticals.iter().map(|c| token_count(c)).sum();
                        // Only an overfull critical set or an irreducible summary remains.
                        prop_assert!(w.entries().iter().all(|e| e.kind() == EntryKind::Critical || e.summary().is_some()));
                        prop_assert!(critical_total <= total);
                        break;
                    }
                }
            }
        }

        #[test]
        fn stage2_never_exceeds_stage1(
            decisions in proptest::collection::vec("[a-z ]{1,30}", 0..5),
            blockers in proptest::collection::vec("[a-z ]{1,30}", 0..5),
            apps in proptest::collection::btree_map("[a-z]{2,6}", "focus=[a-z0-9]{1,5} ready=(yes|no)", 0..4),
        ) {
            let record = SummaryRecord { decisions, blockers, app_state: apps, source_cycles: (0, 3), tokens: 0 };
            prop_assert!(token_count(&record.render_stage2()) <= token_count(&record.render_stage1()));
        }

        #[test]
        fn token_count_is_additive_over_whitespace(a in "\\PC{0,40}", b in "\\PC{0,40}") {
            prop_assert_eq!(token_count(&format!("{a} {b}")), token_count(&a) + token_count(&b));
        }
    }
}
