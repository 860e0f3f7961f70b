//! Monthly objectives, daily task plans and event-driven plan updates.
//!
//! Identity files use the same tab-separated record format as task suites:
//!
//! ```text
//! agent_id=e1 name=Dana Reyes role=operations analyst start=8 end=18 interval=5 tool=excel tool=research
//! objective=Financial reporting apps=excel milestone=12:Figures compiled milestone=28:Reports final
//! ```
//!
//! Every `objective=` line is one responsibility. Milestones are
//! `<day of month>:<description>` and fall due at 18:00 on that day.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::env::Workspace;
use crate::ids::{AgentId, AppId, ArtifactId, TaskId};
use crate::record::{parse_lines, render_lines, Record, RecordError};
use crate::task::{DependencyGraph, TaskSpec, TaskState, TaskStatus};
use crate::time::{SimTime, DAYS_PER_MONTH};

pub const MIN_DAILY_TASKS: usize = 6;
pub const MAX_DAILY_TASKS: usize = 12;
pub const MILESTONE_HOUR: u64 = 18;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("a monthly plan already exists for month {0}")]
    PlanExists(u64),
    #[error("no monthly plan for month {0}")]
    NoMonthlyPlan(u64),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("event {0} needs a task id")]
    MissingTask(EventKind),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("identity: {0}")]
    BadIdentity(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectiveTemplate {
    pub responsibility: String,
    pub apps: Vec<AppId>,
    /// `(day of month, description)`
    pub milestones: Vec<(u64, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identity {
    pub agent_id: AgentId,
    pub name: String,
    pub role: String,
    pub responsibilities: Vec<String>,
    pub tools: Vec<String>,
    /// Working hours, in hours of the day.
    pub t_start: u64,
    pub t_end: u64,
    /// Minimum minutes between cycle starts.
    pub cycle_interval: u64,
}

impl Identity {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.t_start >= self.t_end || self.t_end > 24 {
            return Err(PlanError::BadIdentity(format!(
                "schedule {}-{} is empty or out of range",
                self.t_start, self.t_end
            )));
        }
        if self.cycle_interval == 0 {
            return Err(PlanError::BadIdentity("cycle interval must be positive".into()));
        }
        Ok(())
    }

    pub fn has_tool(&self, tool: &str) -> bool {
        self.tools.iter().any(|t| t == tool)
    }

    /// Identity-block text placed at the top of every host context.
    pub fn block(&self) -> String {
        format!(
            "{} ({}) is a {} responsible for {}.",
            self.name,
            self.agent_id,
            self.role,
            self.responsibilities.join("; ")
        )
    }
}

/// Parses an identity file into the identity and its objective templates.
pub fn parse_identity(text: &str) -> Result<(Identity, Vec<ObjectiveTemplate>), PlanError> {
    let mut identity = None;
    let mut templates = Vec::new();
    for r in parse_lines(text)? {
        match r.first_key() {
            Some("agent_id") => {
                identity = Some(Identity {
                    agent_id: r.require("agent_id")?.into(),
                    name: r.require("name")?.to_owned(),
                    role: r.require("role")?.to_owned(),
                    responsibilities: Vec::new(),
                    tools: r.get_all("tool").map(str::to_owned).collect(),
                    t_start: r.parse_field("start")?,
                    t_end: r.parse_field("end")?,
                    cycle_interval: r.parse_field("interval")?,
                });
            }
            Some("objective") => {
                let milestones = r
                    .get_all("milestone")
                    .map(|raw| {
                        let (day, desc) = raw.split_once(':').ok_or_else(|| r.invalid("milestone", raw))?;
                        let day: u64 = day.parse().map_err(|_| r.invalid("milestone", raw))?;
                        if !(1..=DAYS_PER_MONTH).contains(&day) {
                            return Err(r.invalid("milestone", raw));
                        }
                        Ok((day, desc.to_owned()))
                    })
                    .collect::<Result<Vec<_>, RecordError>>()?;
                templates.push(ObjectiveTemplate {
                    responsibility: r.require("objective")?.to_owned(),
                    apps: r
                        .get("apps")
                        .unwrap_or("")
                        .split(',')
                        .filter(|a| !a.is_empty())
                        .map(AppId::from)
                        .collect(),
                    milestones,
                });
            }
            _ => return Err(RecordError::UnknownRecord { line: r.line }.into()),
        }
    }
    let mut identity = identity.ok_or_else(|| PlanError::BadIdentity("no agent_id line".into()))?;
    identity.responsibilities = templates.iter().map(|t| t.responsibility.clone()).collect();
    identity.validate()?;
    Ok((identity, templates))
}

pub fn render_identity(identity: &Identity, templates: &[ObjectiveTemplate]) -> String {
    let mut head = Record::new()
        .with("agent_id", identity.agent_id.as_str())
        .with("name", &identity.name)
        .with("role", &identity.role)
        .with("start", identity.t_start.to_string())
        .with("end", identity.t_end.to_string())
        .with("interval", identity.cycle_interval.to_string());
    for t in &identity.tools {
        head.push("tool", t);
    }
    let mut records = vec![head];
    for t in templates {
        let apps: Vec<&str> = t.apps.iter().map(AppId::as_str).collect();
        let mut r = Record::new()
            .with("objective", &t.responsibility)
            .with("apps", apps.join(","));
        for (day, desc) in &t.milestones {
            r.push("milestone", format!("{day}:{desc}"));
        }
        records.push(r);
    }
    render_lines(&records)
}

pub fn load_identity(path: &Path) -> Result<(Identity, Vec<ObjectiveTemplate>), PlanError> {
    let text = std::fs::read_to_string(path).map_err(|source| PlanError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_identity(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MilestoneStatus {
    Open,
    Met,
    Missed,
    Revised,
}

impl MilestoneStatus {
    pub fn name(self) -> &'static str {
        match self {
            MilestoneStatus::Open => "open",
            MilestoneStatus::Met => "met",
            MilestoneStatus::Missed => "missed",
            MilestoneStatus::Revised => "revised",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Milestone {
    pub description: String,
    pub due: SimTime,
    status: MilestoneStatus,
    pub tasks: BTreeSet<TaskId>,
    pub completed: BTreeSet<TaskId>,
    pub skipped: BTreeSet<TaskId>,
    pub blocked: BTreeSet<TaskId>,
}

impl Milestone {
    fn new(description: String, due: SimTime) -> Self {
        Self {
            description,
            due,
            status: MilestoneStatus::Open,
            tasks: BTreeSet::new(),
            completed: BTreeSet::new(),
            skipped: BTreeSet::new(),
            blocked: BTreeSet::new(),
        }
    }

    pub fn status(&self) -> MilestoneStatus {
        self.status
    }

    /// Met is final; every other status may change.
    fn set_status(&mut self, to: MilestoneStatus) {
        if self.status != MilestoneStatus::Met {
            self.status = to;
        }
    }

    fn reevaluate(&mut self) {
        if self.tasks.is_empty() {
            return;
        }
        if self.completed.is_superset(&self.tasks) {
            self.set_status(MilestoneStatus::Met);
        } else if self.tasks.iter().all(|t| self.completed.contains(t) || self.skipped.contains(t)) {
            self.set_status(MilestoneStatus::Missed);
        } else if self.blocked.len() >= 2 {
            self.set_status(MilestoneStatus::Revised);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Objective {
    pub text: String,
    pub apps: Vec<AppId>,
    /// Sorted by due date.
    pub milestones: Vec<Milestone>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonthlyPlan {
    pub month: u64,
    pub objectives: Vec<Objective>,
    assignments: BTreeMap<TaskId, (usize, usize)>,
    /// New information waiting for the next daily plan.
    pub pending_context: Vec<String>,
}

impl MonthlyPlan {
    /// `(objective index, milestone index)` for a task, if attached.
    pub fn assignment(&self, task: &TaskId) -> Option<(usize, usize)> {
        self.assignments.get(task).copied()
    }

    pub fn milestone_of(&self, task: &TaskId) -> Option<&Milestone> {
        let (o, m) = self.assignment(task)?;
        Some(&self.objectives[o].milestones[m])
    }

    fn milestone_mut(&mut self, task: &TaskId) -> Option<&mut Milestone> {
        let (o, m) = self.assignment(task)?;
        Some(&mut self.objectives[o].milestones[m])
    }

    /// Maps each task to the first objective covering its app (else the last
    /// objective) and, within it, to the earliest milestone due at or after
    /// the task's deadline (else the last milestone).
    pub fn attach_backlog(&mut self, specs: &[TaskSpec]) {
        if self.objectives.is_empty() {
            return;
        }
        for spec in specs {
            if self.assignments.contains_key(&spec.task_id) {
                continue;
            }
            let o = self
                .objectives
                .iter()
                .position(|o| o.apps.contains(&spec.app_id))
                .unwrap_or(self.objectives.len() - 1);
            let ms = &self.objectives[o].milestones;
            let m = spec
                .deadline
                .and_then(|d| ms.iter().position(|m| m.due >= d))
                .unwrap_or(ms.len() - 1);
            self.objectives[o].milestones[m].tasks.insert(spec.task_id.clone());
            self.assignments.insert(spec.task_id.clone(), (o, m));
        }
    }

    /// Marks Open or Revised milestones whose due date has passed as Missed.
    pub fn close_due(&mut self, now: SimTime) {
        for m in self.objectives.iter_mut().flat_map(|o| o.milestones.iter_mut()) {
            if m.due < now && matches!(m.status, MilestoneStatus::Open | MilestoneStatus::Revised) {
                m.status = MilestoneStatus::Missed;
            }
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!("month {}\n", self.month);
        for o in &self.objectives {
            let apps: Vec<&str> = o.apps.iter().map(AppId::as_str).collect();
            let _ = writeln!(out, "  objective: {} [{}]", o.text, apps.join(","));
            for m in &o.milestones {
                let _ = writeln!(
                    out,
                    "    milestone {} {}: {} ({}/{} done)",
                    m.due,
                    m.status.name(),
                    m.description,
                    m.completed.len(),
                    m.tasks.len()
                );
            }
        }
        out
    }
}

fn month_due(month: u64, day_of_month: u64) -> SimTime {
    SimTime::at(month * DAYS_PER_MONTH + day_of_month - 1, MILESTONE_HOUR, 0)
}

/// Monthly plans keyed by month.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlanBook {
    monthly: BTreeMap<u64, MonthlyPlan>,
}

impl PlanBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn monthly(&self, month: u64) -> Option<&MonthlyPlan> {
        self.monthly.get(&month)
    }

    pub fn monthly_mut(&mut self, month: u64) -> Option<&mut MonthlyPlan> {
        self.monthly.get_mut(&month)
    }

    /// One objective per responsibility; a responsibility without a template
    /// gets a single milestone due on the last day of the month.
    pub fn generate_monthly(
        &mut self,
        identity: &Identity,
        month: u64,
        templates: &[ObjectiveTemplate],
    ) -> Result<&mut MonthlyPlan, PlanError> {
        if self.monthly.contains_key(&month) {
            return Err(PlanError::PlanExists(month));
        }
        let objectives = identity
            .responsibilities
            .iter()
            .map(|resp| {
                let template = templates.iter().find(|t| &t.responsibility == resp);
                let mut milestones: Vec<Milestone> = match template {
                    Some(t) if !t.milestones.is_empty() => t
                        .milestones
                        .iter()
                        .map(|(day, desc)| Milestone::new(desc.clone(), month_due(month, *day)))
                        .collect(),
                    _ => vec![Milestone::new(format!("complete {resp}"), month_due(month, DAYS_PER_MONTH))],
                };
                milestones.sort_by(|a, b| a.due.cmp(&b.due).then_with(|| a.description.cmp(&b.description)));
                Objective {
                    text: resp.clone(),
                    apps: template.map(|t| t.apps.clone()).unwrap_or_default(),
                    milestones,
                }
            })
            .collect();
        let plan = MonthlyPlan {
            month,
            objectives,
            assignments: BTreeMap::new(),
            pending_context: Vec::new(),
        };
        Ok(self.monthly.entry(month).or_insert(plan))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedTask {
    pub task_id: TaskId,
    pub app_id: AppId,
    /// 1-based, unique within the plan.
    pub rank: usize,
    pub prerequisites: Vec<TaskId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailyPlan {
    pub day: u64,
    tasks: Vec<PlannedTask>,
    /// task id -> latest progress note
    pub progress: BTreeMap<TaskId, String>,
    pub context: Vec<String>,
    /// Set when the backlog was empty at generation time.
    pub empty_backlog: bool,
    observed: BTreeSet<(AppId, ArtifactId)>,
}

impl DailyPlan {
    pub fn tasks(&self) -> &[PlannedTask] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn contains(&self, task: &TaskId) -> bool {
        self.tasks.iter().any(|t| &t.task_id == task)
    }

    fn rerank(&mut self) {
        for (i, t) in self.tasks.iter_mut().enumerate() {
            t.rank = i + 1;
        }
    }

    /// Records which artifacts exist so later appearances can be detected.
    pub fn observe(&mut self, ws: &Workspace) {
        self.observed = ws
            .apps()
            .flat_map(|a| a.artifacts.keys().map(move |id| (a.app_id.clone(), id.clone())))
            .collect();
    }

    /// Appends tasks to the end of the plan, skipping ones already present.
    pub fn extend(&mut self, more: DailyPlan) {
        for t in more.tasks {
            if !self.contains(&t.task_id) {
                self.tasks.push(t);
            }
        }
        self.context.extend(more.context);
        self.rerank();
    }

    pub fn render(&self) -> String {
        let mut out = format!("day {}\n", self.day);
        if self.empty_backlog {
            out.push_str("  (empty backlog)\n");
        }
        for t in &self.tasks {
            let prereqs: Vec<&str> = t.prerequisites.iter().map(TaskId::as_str).collect();
            let _ = write!(out, "  {}. {} [{}]", t.rank, t.task_id, t.app_id);
            if !prereqs.is_empty() {
                let _ = write!(out, " after {}", prereqs.join(","));
            }
            if let Some(p) = self.progress.get(&t.task_id) {
                let _ = write!(out, " - {p}");
            }
            out.push('\n');
        }
        for c in &self.context {
            let _ = writeln!(out, "  note: {c}");
        }
        out
    }
}

fn plan_key<'a>(spec: &'a TaskSpec, monthly: &MonthlyPlan) -> (u32, SimTime, (bool, SimTime), &'a TaskId) {
    let milestone_due = monthly
        .milestone_of(&spec.task_id)
        .map_or(SimTime(u64::MAX), |m| m.due);
    let deadline = (spec.deadline.is_none(), spec.deadline.unwrap_or(SimTime::ZERO));
    (spec.priority, milestone_due, deadline, &spec.task_id)
}

/// Builds the day's plan from the non-terminal backlog.
///
/// Ready tasks come first, ordered by (priority, milestone due, deadline,
/// id), up to [`MAX_DAILY_TASKS`]. If fewer than [`MIN_DAILY_TASKS`] are
/// ready, not-yet-ready tasks fill the plan up to that minimum and wait in
/// it as blocked.
pub fn generate_daily(
    monthly: &mut MonthlyPlan,
    day: u64,
    specs: &[TaskSpec],
    graph: &DependencyGraph,
    statuses: &BTreeMap<TaskId, TaskStatus>,
) -> DailyPlan {
    monthly.attach_backlog(specs);
    let is_done = |id: &TaskId| statuses.get(id).is_some_and(|s| s.state() == TaskState::Completed);
    let mut ready = Vec::new();
    let mut waiting = Vec::new();
    for spec in specs {
        if statuses.get(&spec.task_id).is_some_and(TaskStatus::is_terminal) {
            continue;
        }
        if graph.prerequisites(&spec.task_id).all(is_done) {
            ready.push(spec);
        } else {
            waiting.push(spec);
        }
    }
    let empty_backlog = ready.is_empty() && waiting.is_empty();
    ready.sort_by(|a, b| plan_key(a, monthly).cmp(&plan_key(b, monthly)));
    waiting.sort_by(|a, b| plan_key(a, monthly).cmp(&plan_key(b, monthly)));
    let mut chosen: Vec<&TaskSpec> = ready.into_iter().take(MAX_DAILY_TASKS).collect();
    if chosen.len() < MIN_DAILY_TASKS {
        let room = MIN_DAILY_TASKS - chosen.len();
        chosen.extend(waiting.into_iter().take(room));
    }
    let tasks = chosen
        .into_iter()
        .enumerate()
        .map(|(i, s)| PlannedTask {
            task_id: s.task_id.clone(),
            app_id: s.app_id.clone(),
            rank: i + 1,
            prerequisites: graph.prerequisites(&s.task_id).cloned().collect(),
        })
        .collect();
    DailyPlan {
        day,
        tasks,
        progress: BTreeMap::new(),
        context: std::mem::take(&mut monthly.pending_context),
        empty_backlog,
        observed: BTreeSet::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    Task(TaskId),
    Idle,
}

/// First task in rank order that can start now: prerequisites Completed and
/// status Pending, or Failed with attempts remaining.
pub fn select_next(plan: &DailyPlan, statuses: &BTreeMap<TaskId, TaskStatus>) -> Selection {
    let done = |id: &TaskId| statuses.get(id).is_some_and(|s| s.state() == TaskState::Completed);
    plan.tasks
        .iter()
        .find(|t| {
            let eligible = statuses.get(&t.task_id).is_some_and(|s| match s.state() {
                TaskState::Pending => true,
                TaskState::Failed => s.retries_left(),
                _ => false,
            });
            eligible && t.prerequisites.iter().all(done)
        })
        .map_or(Selection::Idle, |t| Selection::Task(t.task_id.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    TaskCompleted,
    TaskBlocked,
    TaskSkipped,
    NewInformation,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::TaskCompleted => "task_completed",
            EventKind::TaskBlocked => "task_blocked",
            EventKind::TaskSkipped => "task_skipped",
            EventKind::NewInformation => "new_information",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanUpdateEvent {
    pub kind: EventKind,
    pub task_id: Option<TaskId>,
    pub payload: String,
    pub at: SimTime,
}

impl PlanUpdateEvent {
    pub fn task(kind: EventKind, task: TaskId, payload: impl Into<String>, at: SimTime) -> Self {
        Self {
            kind,
            task_id: Some(task),
            payload: payload.into(),
            at,
        }
    }

    pub fn info(payload: impl Into<String>, task: Option<TaskId>, at: SimTime) -> Self {
        Self {
            kind: EventKind::NewInformation,
            task_id: task,
            payload: payload.into(),
            at,
        }
    }
}

/// Applies one event to both plan tiers.
///
/// Completion marks progress and closes the milestone once all its tasks are
/// done. A block demotes the task one rank; two blocked tasks under one
/// milestone mark it Revised. A skip is recorded; the milestone becomes
/// Missed only when all its tasks are terminal. New information is queued
/// for the next daily plan. Applying an event never yields further events.
pub fn propagate_update(
    monthly: &mut MonthlyPlan,
    daily: &mut DailyPlan,
    event: &PlanUpdateEvent,
) -> Result<(), PlanError> {
    if event.kind == EventKind::NewInformation {
        let note = match &event.task_id {
            Some(t) => format!("{t}: {}", event.payload),
            None => event.payload.clone(),
        };
        monthly.pending_context.push(note);
        return Ok(());
    }
    let task = event.task_id.as_ref().ok_or(PlanError::MissingTask(event.kind))?;
    if monthly.assignment(task).is_none() && !daily.contains(task) {
        return Err(PlanError::UnknownTask(task.clone()));
    }
    let milestone = monthly.milestone_mut(task);
    match event.kind {
        EventKind::TaskCompleted => {
            daily.progress.insert(task.clone(), "completed".into());
            if let Some(m) = milestone {
                m.blocked.remove(task);
                m.completed.insert(task.clone());
                m.reevaluate();
            }
        }
        EventKind::TaskBlocked => {
            daily.progress.insert(task.clone(), format!("blocked: {}", event.payload));
            if let Some(i) = daily.tasks.iter().position(|t| &t.task_id == task) {
                if i + 1 < daily.tasks.len() {
                    daily.tasks.swap(i, i + 1);
                    daily.rerank();
                }
            }
            if let Some(m) = milestone {
                m.blocked.insert(task.clone());
                m.reevaluate();
            }
        }
        EventKind::TaskSkipped => {
            daily.progress.insert(task.clone(), "skipped".into());
            if let Some(m) = milestone {
                m.blocked.remove(task);
                m.skipped.insert(task.clone());
                m.reevaluate();
            }
        }
        EventKind::NewInformation => unreachable!("handled above"),
    }
    Ok(())
}

/// Compares the plan against the workspace.
///
/// Emits TaskBlocked for each planned, non-terminal, not-yet-blocked task
/// whose deliverable is missing, and NewInformation for each unplanned
/// backlog task whose deliverable appeared since [`DailyPlan::observe`].
/// Events are ordered by task id.
pub fn detect_inconsistency(
    plan: &DailyPlan,
    specs: &[TaskSpec],
    ws: &Workspace,
    statuses: &BTreeMap<TaskId, TaskStatus>,
    now: SimTime,
) -> Vec<PlanUpdateEvent> {
    let mut sorted: Vec<&TaskSpec> = specs.iter().collect();
    sorted.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    let mut events = Vec::new();
    for spec in sorted {
        let state = statuses.get(&spec.task_id).map(TaskStatus::state);
        if state.is_some_and(TaskState::is_terminal) {
            continue;
        }
        let present = ws.artifact(&spec.app_id, &spec.deliverable_id).is_some();
        if plan.contains(&spec.task_id) {
            if !present && state != Some(TaskState::Blocked) {
                events.push(PlanUpdateEvent::task(
                    EventKind::TaskBlocked,
                    spec.task_id.clone(),
                    format!("deliverable {} missing", spec.deliverable_id),
                    now,
                ));
            }
        } else if present
            && !plan
                .observed
                .contains(&(spec.app_id.clone(), spec.deliverable_id.clone()))
        {
            events.push(PlanUpdateEvent::info(
                format!("deliverable {} now available", spec.deliverable_id),
                Some(spec.task_id.clone()),
                now,
            ));
        }
    }
    events
}
