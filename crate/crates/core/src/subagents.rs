//! Sub-agents as tools, the simulated computer-using agent, and cognitive
//! tools.
//!
//! A sub-agent runs in its own fresh [`ContextWindow`]; the host only ever
//! sees the structured payload it returns. Cognitive tools run inside the
//! caller's window and force structured outputs.
//!
//! Knowledge-base fixtures hold one document per block, blocks separated by
//! a line containing only `---`, with the document id on the block's first
//! line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::budget::{BudgetError, SessionBudget};
use crate::context::{token_count, ContextEntry, ContextError, ContextWindow, Origin, DEFAULT_BUDGET};
use crate::env::{ActionErrorKind, ActionRecord, Operation, Outcome, Workspace};
use crate::ids::{AgentId, ArtifactId, TaskId};
use crate::memory::{embed, Embedding};
use crate::task::{TaskSpec, TaskState, TaskStatus};
use crate::time::SimTime;

/// Deepest allowed sub-agent nesting; the host's own call is depth 1.
pub const MAX_NESTING: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ToolKind {
    Cognitive,
    SubAgent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolDescriptor {
    pub name: &'static str,
    pub kind: ToolKind,
    pub inputs: &'static [&'static str],
    pub outputs: &'static [&'static str],
}

impl ToolDescriptor {
    /// Sub-agent outputs are closed: no field may carry an execution trace.
    pub fn is_closed(&self) -> bool {
        self.kind == ToolKind::Cognitive || !self.outputs.iter().any(|f| f.contains("trace"))
    }
}

pub const RESEARCH: ToolDescriptor = ToolDescriptor {
    name: "research",
    kind: ToolKind::SubAgent,
    inputs: &["query", "depth"],
    outputs: &["findings", "sources"],
};

pub const CUA: ToolDescriptor = ToolDescriptor {
    name: "cua",
    kind: ToolKind::SubAgent,
    inputs: &["task", "step"],
    outputs: &["status", "steps"],
};

pub const GENERATE_PLAN: ToolDescriptor = ToolDescriptor {
    name: "generate_plan",
    kind: ToolKind::Cognitive,
    inputs: &["day"],
    outputs: &["tasks"],
};

pub const UPDATE_PLAN: ToolDescriptor = ToolDescriptor {
    name: "update_plan",
    kind: ToolKind::Cognitive,
    inputs: &["event"],
    outputs: &["tasks"],
};

pub const TRACK_TASKS: ToolDescriptor = ToolDescriptor {
    name: "track_tasks",
    kind: ToolKind::Cognitive,
    inputs: &["tasks"],
    outputs: &["completed", "remaining"],
};

pub const REFLECT: ToolDescriptor = ToolDescriptor {
    name: "reflect",
    kind: ToolKind::Cognitive,
    inputs: &["notes"],
    outputs: &["outcomes", "lessons"],
};

pub const COGNITIVE_TOOLS: [&ToolDescriptor; 4] = [&GENERATE_PLAN, &UPDATE_PLAN, &TRACK_TASKS, &REFLECT];

pub fn descriptor(name: &str) -> Option<&'static ToolDescriptor> {
    [&RESEARCH, &CUA, &GENERATE_PLAN, &UPDATE_PLAN, &TRACK_TASKS, &REFLECT]
        .into_iter()
        .find(|d| d.name == name)
}

/// Ordered named fields, each holding a list of text items.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Payload {
    fields: Vec<(String, Vec<String>)>,
}

impl Payload {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, field: &str, items: Vec<String>) -> Self {
        self.fields.push((field.to_owned(), items));
        self
    }

    pub fn get(&self, field: &str) -> Option<&[String]> {
        self.fields
            .iter()
            .find(|(f, _)| f == field)
            .map(|(_, v)| v.as_slice())
    }

    pub fn render(&self, tool: &str) -> String {
        let parts: Vec<String> = self
            .fields
            .iter()
            .map(|(f, items)| {
                if items.is_empty() {
                    format!("{f}: none")
                } else {
                    format!("{f}: {}", items.join("; "))
                }
            })
            .collect();
        format!("{tool} -> {}", parts.join(" | "))
    }

    /// Errors with the first output field the descriptor requires but the
    /// payload lacks.
    pub fn conform(&self, d: &ToolDescriptor) -> Result<(), SubAgentError> {
        match d.outputs.iter().find(|f| self.get(f).is_none()) {
            Some(f) => Err(SubAgentError::SchemaViolation {
                tool: d.name,
                field: f,
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubAgentResult {
    pub tool: &'static str,
    pub payload: Payload,
    /// Tokens the payload added to the host window.
    pub tokens: usize,
    /// Internal steps taken; the steps themselves are never exposed.
    pub internal_steps: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubAgentError {
    #[error("sub-agent {tool} failed: {}", payload.render(tool))]
    Failure { tool: &'static str, payload: Payload },
    #[error("{tool} output lacks field {field}")]
    SchemaViolation {
        tool: &'static str,
        field: &'static str,
    },
    #[error("{0} is not a sub-agent tool")]
    NotSubAgent(&'static str),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Context(#[from] ContextError),
}

/// Execution context handed to a sub-agent body.
#[derive(Debug)]
pub struct SubAgentCtx<'a> {
    window: ContextWindow,
    budget: &'a mut SessionBudget,
    depth: u32,
    steps: u64,
    cycle: u32,
    now: SimTime,
}

impl SubAgentCtx<'_> {
    /// One internal step: charged as a tool call, traced only in the
    /// sub-agent's own window.
    pub fn step(&mut self, trace: &str) -> Result<(), SubAgentError> {
        self.budget.charge_calls(1)?;
        self.steps += 1;
        self.window
            .push_and_stabilize(ContextEntry::new(trace, Origin::Reasoning, None, self.cycle, self.now))?;
        Ok(())
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn window(&self) -> &ContextWindow {
        &self.window
    }

    pub fn budget(&mut self) -> &mut SessionBudget {
        self.budget
    }

    /// Budget and trace sink as separate borrows, for bodies that charge
    /// their own costs. Each trace counts as one internal step.
    pub fn split(&mut self) -> (&mut SessionBudget, SubTrace<'_>) {
        (
            self.budget,
            SubTrace {
                window: &mut self.window,
                steps: &mut self.steps,
                cycle: self.cycle,
                now: self.now,
            },
        )
    }

    /// Nested invocation; the result lands in this sub-agent's window.
    pub fn invoke<F>(&mut self, d: &'static ToolDescriptor, body: F) -> Result<SubAgentResult, SubAgentError>
    where
        F: FnOnce(&mut SubAgentCtx<'_>) -> Result<Payload, Payload>,
    {
        let (cycle, now, depth) = (self.cycle, self.now, self.depth + 1);
        run_isolated(&mut self.window, self.budget, d, depth, cycle, now, body)
    }
}

/// Trace sink into a sub-agent's private window; charges nothing.
#[derive(Debug)]
pub struct SubTrace<'a> {
    window: &'a mut ContextWindow,
    steps: &'a mut u64,
    cycle: u32,
    now: SimTime,
}

impl SubTrace<'_> {
    pub fn push(&mut self, trace: &str) {
        *self.steps += 1;
        // Routine-only content always stabilizes.
        let _ = self
            .window
            .push_and_stabilize(ContextEntry::new(trace, Origin::Reasoning, None, self.cycle, self.now));
    }
}

/// Runs `body` as a sub-agent in a fresh window and appends only its payload
/// to `host`. A failing body still reports its error payload to the host.
pub fn invoke_subagent<F>(
    host: &mut ContextWindow,
    budget: &mut SessionBudget,
    d: &'static ToolDescriptor,
    cycle: u32,
    now: SimTime,
    body: F,
) -> Result<SubAgentResult, SubAgentError>
where
    F: FnOnce(&mut SubAgentCtx<'_>) -> Result<Payload, Payload>,
{
    run_isolated(host, budget, d, 1, cycle, now, body)
}

fn run_isolated<F>(
    host: &mut ContextWindow,
    budget: &mut SessionBudget,
    d: &'static ToolDescriptor,
    depth: u32,
    cycle: u32,
    now: SimTime,
    body: F,
) -> Result<SubAgentResult, SubAgentError>
where
    F: FnOnce(&mut SubAgentCtx<'_>) -> Result<Payload, Payload>,
{
    if d.kind != ToolKind::SubAgent {
        return Err(SubAgentError::NotSubAgent(d.name));
    }
    if depth > MAX_NESTING {
        let payload = Payload::new().with("error", vec![format!("nesting depth {depth} exceeds {MAX_NESTING}")]);
        host.push_and_stabilize(ContextEntry::new(payload.render(d.name), Origin::ErrorSignal, None, cycle, now))?;
        return Err(SubAgentError::Failure { tool: d.name, payload });
    }
    // The invocation itself is one tool call on the host side.
    budget.charge_calls(1)?;
    let mut ctx = SubAgentCtx {
        window: ContextWindow::new(DEFAULT_BUDGET),
        budget,
        depth,
        steps: 0,
        cycle,
        now,
    };
    let outcome = body(&mut ctx);
    let steps = ctx.steps;
    match outcome {
        Ok(payload) => {
            payload.conform(d)?;
            let text = payload.render(d.name);
            let tokens = token_count(&text);
            host.push_and_stabilize(ContextEntry::new(text, Origin::ToolCall, None, cycle, now))?;
            Ok(SubAgentResult {
                tool: d.name,
                payload,
                tokens,
                internal_steps: steps,
            })
        }
        Err(payload) => {
            host.push_and_stabilize(ContextEntry::new(payload.render(d.name), Origin::ErrorSignal, None, cycle, now))?;
            Err(SubAgentError::Failure { tool: d.name, payload })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResearchDepth {
    Shallow = 1,
    Medium = 2,
    Deep = 3,
}

impl ResearchDepth {
    pub fn rounds(self) -> u32 {
        self as u32
    }

    pub fn from_rounds(n: u32) -> Option<Self> {
        match n {
            1 => Some(Self::Shallow),
            2 => Some(Self::Medium),
            3 => Some(Self::Deep),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KbDoc {
    pub id: String,
    pub text: String,
    embedding: Embedding,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeBase {
    docs: Vec<KbDoc>,
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("knowledge base block {0} has no id line")]
    MissingId(usize),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl KnowledgeBase {
    pub fn parse(text: &str) -> Result<Self, KbError> {
        let mut docs = Vec::new();
        let mut blocks: Vec<Vec<&str>> = vec![Vec::new()];
        for line in text.lines() {
            if line.trim_end() == "---" {
                blocks.push(Vec::new());
            } else {
                blocks.last_mut().expect("non-empty").push(line);
            }
        }
        for (i, block) in blocks.iter().enumerate() {
            let mut lines = block.iter().skip_while(|l| l.trim().is_empty());
            let Some(id) = lines.next() else {
                if block.iter().all(|l| l.trim().is_empty()) {
                    continue;
                }
                return Err(KbError::MissingId(i));
            };
            let body = lines.copied().collect::<Vec<_>>().join("\n").trim().to_owned();
            docs.push(KbDoc {
                id: id.trim().to_owned(),
                embedding: embed(&body),
                text: body,
            });
        }
        Ok(Self { docs })
    }

    pub fn load(path: &Path) -> Result<Self, KbError> {
        let text = std::fs::read_to_string(path).map_err(|source| KbError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn render(&self) -> String {
        self.docs
            .iter()
            .map(|d| format!("{}\n{}\n", d.id, d.text))
            .collect::<Vec<_>>()
            .join("---\n")
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[KbDoc] {
        &self.docs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResearchReport {
    pub findings: Vec<String>,
    pub sources: Vec<String>,
    pub rounds: u32,
}

impl ResearchReport {
    pub fn payload(&self) -> Payload {
        Payload::new()
            .with("findings", self.findings.clone())
            .with("sources", self.sources.clone())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResearchError {
    #[error("no documents matched after {rounds} rounds")]
    NoResults { rounds: u32 },
}

/// `depth` rounds of top-1 similarity search over unseen documents; each
/// hit's text is appended to the query for the next round.
pub fn research(
    query: &str,
    depth: ResearchDepth,
    kb: &KnowledgeBase,
    mut on_round: impl FnMut(&str),
) -> Result<ResearchReport, ResearchError> {
    let mut expanded = query.to_owned();
    let mut seen = vec![false; kb.docs.len()];
    let mut report = ResearchReport {
        findings: Vec::new(),
        sources: Vec::new(),
        rounds: 0,
    };
    for _ in 0..depth.rounds() {
        report.rounds += 1;
        let q = embed(&expanded);
        let best = kb
            .docs
            .iter()
            .enumerate()
            .filter(|(i, _)| !seen[*i])
            .filter_map(|(i, d)| d.embedding.cosine(&q).map(|c| (c, i)))
            .filter(|(c, _)| *c > 0.0)
            .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(&a.1)));
        let Some((_, i)) = best else {
            on_round("no further matches");
            continue;
        };
        seen[i] = true;
        let doc = &kb.docs[i];
        on_round(&doc.text);
        report.findings.push(doc.text.clone());
        report.sources.push(doc.id.clone());
        expanded.push(' ');
        expanded.push_str(&doc.text);
    }
    if report.findings.is_empty() {
        return Err(ResearchError::NoResults { rounds: report.rounds });
    }
    Ok(report)
}

/// Research run as an isolated sub-agent: one internal step per round.
/// An empty result is a normal payload with no findings.
pub fn research_subagent(
    host: &mut ContextWindow,
    budget: &mut SessionBudget,
    kb: &KnowledgeBase,
    query: &str,
    depth: ResearchDepth,
    cycle: u32,
    now: SimTime,
) -> Result<SubAgentResult, SubAgentError> {
    invoke_subagent(host, budget, &RESEARCH, cycle, now, |ctx| {
        let mut trace = Vec::new();
        let report = research(query, depth, kb, |t| trace.push(t.to_owned()));
        for t in &trace {
            ctx.step(t)
                .map_err(|e| Payload::new().with("error", vec![e.to_string()]))?;
        }
        Ok(match report {
            Ok(r) => r.payload(),
            Err(ResearchError::NoResults { .. }) => Payload::new().with("findings", vec![]).with("sources", vec![]),
        })
    })
}

/// Pluggable computer-using-agent backend.
pub trait CuaBackend {
    fn name(&self) -> &'static str;
    /// Applies `action` to the workspace and records its outcome.
    fn execute(&mut self, ws: &mut Workspace, action: &mut ActionRecord) -> Outcome;
}

#[derive(Debug, Clone, Default)]
pub struct DefaultCua;

impl CuaBackend for DefaultCua {
    fn name(&self) -> &'static str {
        "default"
    }

    fn execute(&mut self, ws: &mut Workspace, action: &mut ActionRecord) -> Outcome {
        ws.apply(action)
    }
}

/// Fails every `period`-th call (default 3) without touching the workspace.
#[derive(Debug, Clone)]
pub struct FlakyCua {
    period: u64,
    calls: u64,
}

impl FlakyCua {
    pub fn new(period: u64) -> Self {
        assert!(period > 0, "flaky period must be positive");
        Self { period, calls: 0 }
    }
}

impl Default for FlakyCua {
    fn default() -> Self {
        Self::new(3)
    }
}

impl CuaBackend for FlakyCua {
    fn name(&self) -> &'static str {
        "flaky"
    }

    fn execute(&mut self, ws: &mut Workspace, action: &mut ActionRecord) -> Outcome {
        self.calls += 1;
        if self.calls.is_multiple_of(self.period) {
            action.outcome = Outcome::Error(ActionErrorKind::Injected);
            return action.outcome;
        }
        ws.apply(action)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CuaStep {
    Acted(ActionRecord),
    /// Every edit of the script has been applied.
    ScriptDone,
}

/// One CUA action toward `step` of the task's script: opens `target` if it
/// is not focused, otherwise applies edit `step` to it. `target` is the
/// task's own deliverable unless the caller resolves the edit elsewhere.
#[allow(clippy::too_many_arguments)]
pub fn cua_execute(
    backend: &mut dyn CuaBackend,
    ws: &mut Workspace,
    actor: &AgentId,
    task: &TaskSpec,
    target: &ArtifactId,
    step: usize,
    at: SimTime,
) -> CuaStep {
    let Some(edit) = task.edit_script.get(step) else {
        return CuaStep::ScriptDone;
    };
    let focused = ws.app(&task.app_id).and_then(|a| a.focus.as_ref()) == Some(target);
    let op = if focused {
        Operation::Edit {
            key: edit.key.clone(),
            value: edit.value.clone(),
        }
    } else {
        Operation::Open(target.clone())
    };
    let mut action = ActionRecord::new(actor.clone(), task.task_id.clone(), task.app_id.clone(), op, at);
    backend.execute(ws, &mut action);
    CuaStep::Acted(action)
}

/// Completed and remaining tasks among `tasks`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tracking {
    pub completed: Vec<TaskId>,
    pub remaining: Vec<TaskId>,
}

impl Tracking {
    pub fn payload(&self) -> Payload {
        let ids = |v: &[TaskId]| v.iter().map(ToString::to_string).collect();
        Payload::new()
            .with("completed", ids(&self.completed))
            .with("remaining", ids(&self.remaining))
    }
}

pub fn track_tasks(tasks: &[TaskId], statuses: &BTreeMap<TaskId, TaskStatus>) -> Tracking {
    let (completed, remaining) = tasks
        .iter()
        .cloned()
        .partition(|t| statuses.get(t).is_some_and(|s| s.state() == TaskState::Completed));
    Tracking { completed, remaining }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reflection {
    pub outcomes: Vec<String>,
    pub lessons: Vec<String>,
}

impl Reflection {
    pub fn payload(&self) -> Payload {
        Payload::new()
            .with("outcomes", self.outcomes.clone())
            .with("lessons", self.lessons.clone())
    }

    pub fn summary(&self) -> String {
        format!("{} outcomes; {}", self.outcomes.len(), self.lessons.join("; "))
    }
}

/// Day-end reflection. Lessons always include one line per skipped task
/// with its reason and a closing line on what remains open.
pub fn reflect(
    tasks: &[TaskId],
    statuses: &BTreeMap<TaskId, TaskStatus>,
    skip_reasons: &BTreeMap<TaskId, String>,
) -> Reflection {
    let state = |t: &TaskId| statuses.get(t).map_or(TaskState::Pending, TaskStatus::state);
    let outcomes = tasks
        .iter()
        .filter(|t| state(t) == TaskState::Completed)
        .map(|t| format!("{t} completed"))
        .collect();
    let mut lessons: Vec<String> = tasks
        .iter()
        .filter(|t| state(t) == TaskState::Skipped)
        .map(|t| {
            let reason = skip_reasons.get(t).map_or("attempts exhausted", String::as_str);
            format!("{t} skipped: {reason}")
        })
        .collect();
    let open = tasks.iter().filter(|t| !state(t).is_terminal()).count();
    lessons.push(format!("{open} tasks remain open"));
    Reflection { outcomes, lessons }
}

/// Runs a cognitive tool inside the caller's window: the structured output
/// is checked against the descriptor and appended as a critical entry.
pub fn cognitive_tool(
    host: &mut ContextWindow,
    d: &'static ToolDescriptor,
    output: Payload,
    cycle: u32,
    now: SimTime,
) -> Result<Payload, SubAgentError> {
    if d.kind != ToolKind::Cognitive {
        return Err(SubAgentError::NotSubAgent(d.name));
    }
    output.conform(d)?;
    let origin = if d.name.ends_with("_plan") {
        Origin::PlanUpdate
    } else {
        Origin::ToolCall
    };
    host.push_and_stabilize(ContextEntry::new(output.render(d.name), origin, None, cycle, now))?;
    Ok(output)
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render("payload"))
    }
}
