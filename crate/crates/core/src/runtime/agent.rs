//! One digital employee working through a day of cycles.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::budget::{BudgetError, SessionBudget};
use crate::comms::{to_events, SharedMailboxes};
use crate::context::{tokenize, ContextEntry, ContextError, ContextWindow, Origin, SummarizationStage};
use crate::env::{ActionErrorKind, ActionRecord, Document, Operation, Outcome, Workspace};
use crate::ids::{ArtifactId, TaskId};
use crate::judge::{golden_for, judge_artifact};
use crate::memory::{DayOutcome, MemoryError, MemoryKind, MemoryStore, NewRecord, RetrievalQuery, TaskNote, WorkingMemory};
use crate::planning::{
    detect_inconsistency, generate_daily, propagate_update, select_next, DailyPlan, EventKind, Identity,
    ObjectiveTemplate, PlanBook, PlanError, PlanUpdateEvent, Selection, MAX_DAILY_TASKS,
};
use crate::subagents::{
    cognitive_tool, cua_execute, invoke_subagent, reflect, track_tasks, CuaBackend, CuaStep, DefaultCua, FlakyCua,
    Payload, SubAgentError, CUA, GENERATE_PLAN, REFLECT, TRACK_TASKS, UPDATE_PLAN,
};
use crate::suite::TaskSuite;
use crate::task::{DependencyGraph, GraphError, StatusError, TaskSpec, TaskState, TaskStatus};
use crate::time::SimTime;
use crate::xplearn::{context_digest, distill, inject, retrieve_demos, DemoIndex, ExecutionHints, Trajectory, XpError};

use super::report::{Counters, DayReport, HaltReason, TaskOutcome};
use super::{filter_tools, policy_cost_model, retry_or_skip, PolicyKind, RetryDecision, RuntimeConfig, RuntimeError};

/// Tokens of one retrieved memory record admitted into a host context.
pub const RECORD_SNIPPET_TOKENS: usize = 48;
/// Maximum schedule jitter in minutes, applied to both ends of the day.
pub const SCHEDULE_JITTER: i64 = 10;

/// A backlog handed to one agent for one day.
#[derive(Debug, Clone)]
pub struct Session {
    /// Sorted by task id.
    pub tasks: Vec<TaskSpec>,
    pub graph: DependencyGraph,
}

impl Session {
    pub fn new(mut tasks: Vec<TaskSpec>, graph: DependencyGraph) -> Self {
        tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        Self { tasks, graph }
    }

    pub fn from_suite(suite: &TaskSuite) -> Result<Self, GraphError> {
        Ok(Self::new(suite.tasks.clone(), suite.graph()?))
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleResult {
    pub cycle: u32,
    pub started_at: SimTime,
    /// Task worked on and its state afterwards; `None` for an idle cycle.
    pub worked: Option<(TaskId, TaskState)>,
    pub halted: Option<HaltReason>,
}

enum Stop {
    Budget(BudgetError),
    Fatal(RuntimeError),
}

impl From<BudgetError> for Stop {
    fn from(e: BudgetError) -> Self {
        Stop::Budget(e)
    }
}

macro_rules! fatal_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Stop {
            fn from(e: $t) -> Self {
                Stop::Fatal(e.into())
            }
        }
    )*};
}
fatal_from!(RuntimeError, MemoryError, PlanError, XpError, StatusError, ContextError);

impl From<SubAgentError> for Stop {
    fn from(e: SubAgentError) -> Self {
        match e {
            SubAgentError::Budget(b) => Stop::Budget(b),
            other => Stop::Fatal(other.into()),
        }
    }
}

struct Exec<'a> {
    ws: &'a mut Workspace,
    backend: &'a mut dyn CuaBackend,
    clock: &'a mut SimTime,
    actor: &'a crate::ids::AgentId,
    minutes_per_step: u64,
    counters: &'a mut Counters,
    log: &'a mut Vec<ActionRecord>,
}

struct AttemptResult {
    actions: Vec<ActionRecord>,
    script_done: bool,
    judged: bool,
    initial_state: String,
}

fn initial_state(ws: &Workspace, spec: &TaskSpec) -> String {
    let keys = ws.artifact(&spec.app_id, &spec.deliverable_id).map_or(0, Document::len);
    format!("doc keys={keys}")
}

/// Probes, then drives the CUA through the edit script until it is done or
/// the attempt's iteration cap is reached. `redirect` maps edit keys to a
/// deliverable other than the task's own.
#[allow(clippy::too_many_arguments)]
fn run_attempt(
    x: &mut Exec<'_>,
    budget: &mut SessionBudget,
    status: &mut TaskStatus,
    spec: &TaskSpec,
    golden: &Document,
    probes: u32,
    redirect: &BTreeMap<String, ArtifactId>,
    trace: &mut dyn FnMut(&str),
) -> Result<AttemptResult, BudgetError> {
    let initial_state = initial_state(x.ws, spec);
    let mut actions = Vec::new();
    let mps = x.minutes_per_step;
    for _ in 0..probes {
        if status.iteration_cap_reached() {
            break;
        }
        budget.charge_action(mps)?;
        status.record_iteration().expect("cap checked");
        let mut a = ActionRecord::new(
            x.actor.clone(),
            spec.task_id.clone(),
            spec.app_id.clone(),
            Operation::Inspect,
            *x.clock,
        );
        x.backend.execute(x.ws, &mut a);
        x.counters.probe_steps += 1;
        *x.clock = *x.clock + mps;
        trace(&format!("{} -> {}", a.operation, a.outcome));
        x.log.push(a.clone());
        actions.push(a);
    }
    let mut step = 0;
    let script_done = loop {
        let Some(edit) = spec.edit_script.get(step) else {
            break true;
        };
        if status.iteration_cap_reached() {
            break false;
        }
        let target = redirect.get(&edit.key).unwrap_or(&spec.deliverable_id);
        budget.charge_action(mps)?;
        status.record_iteration().expect("cap checked");
        let CuaStep::Acted(a) = cua_execute(x.backend, x.ws, x.actor, spec, target, step, *x.clock) else {
            unreachable!("step is within the script");
        };
        x.counters.action_steps += 1;
        *x.clock = *x.clock + mps;
        match a.outcome {
            Outcome::Ok if a.operation.is_mutation() => {
                step += 1;
                if target != &spec.deliverable_id {
                    x.counters.interference_writes += 1;
                }
            }
            Outcome::Error(ActionErrorKind::NotReady) => {
                budget.charge_minutes(1)?;
                *x.clock = *x.clock + 1;
                x.counters.wait_minutes += 1;
            }
            _ => {}
        }
        trace(&format!("{} -> {}", a.operation, a.outcome));
        x.log.push(a.clone());
        actions.push(a);
    };
    let judged = script_done
        && x.ws
            .artifact(&spec.app_id, &spec.deliverable_id)
            .is_some_and(|d| judge_artifact(d, golden));
    Ok(AttemptResult {
        actions,
        script_done,
        judged,
        initial_state,
    })
}

/// Task state rendered to exactly `state_footprint` tokens.
pub fn state_text(spec: &TaskSpec, state: TaskState) -> String {
    let header = format!(
        "task {} in {} priority {} status {}: {}",
        spec.task_id,
        spec.app_id,
        spec.priority,
        state.name(),
        spec.description
    );
    let mut toks: Vec<&str> = tokenize(&header);
    let mut filler: Vec<&str> = spec
        .edit_script
        .iter()
        .flat_map(|e| tokenize(&e.key).into_iter().chain(tokenize(&e.value)))
        .collect();
    if filler.is_empty() {
        filler.push("state");
    }
    let want = spec.state_footprint as usize;
    let mut i = 0;
    while toks.len() < want {
        toks.push(filler[i % filler.len()]);
        i += 1;
    }
    toks.truncate(want);
    toks.join(" ")
}

fn snippet(text: &str) -> String {
    let toks = tokenize(text);
    toks[..toks.len().min(RECORD_SNIPPET_TOKENS)].join(" ")
}

pub struct Agent {
    identity: Identity,
    templates: Vec<ObjectiveTemplate>,
    config: RuntimeConfig,
    seed: u64,
    tasks: Vec<TaskSpec>,
    index: BTreeMap<TaskId, usize>,
    goldens: BTreeMap<TaskId, Document>,
    graph: DependencyGraph,
    ws: Workspace,
    backend: Box<dyn CuaBackend + Send>,
    budget: SessionBudget,
    clock: SimTime,
    rng: ChaCha8Rng,
    day: u64,
    schedule: (SimTime, SimTime),
    started_at: SimTime,
    statuses: BTreeMap<TaskId, TaskStatus>,
    memory: MemoryStore,
    plans: PlanBook,
    daily: Option<DailyPlan>,
    demos: DemoIndex,
    flat: ContextWindow,
    loaded_at: BTreeMap<TaskId, u64>,
    loads: u64,
    cycle: u32,
    last_start: Option<SimTime>,
    working: WorkingMemory,
    skip_reasons: BTreeMap<TaskId, String>,
    notes: Vec<TaskNote>,
    counters: Counters,
    halt: Option<HaltReason>,
    log: Vec<ActionRecord>,
    mailbox: Option<SharedMailboxes>,
    started: bool,
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent")
            .field("agent", &self.identity.agent_id)
            .field("policy", &self.config.policy)
            .field("clock", &self.clock)
            .field("cycle", &self.cycle)
            .finish_non_exhaustive()
    }
}

impl Agent {
    pub fn new(
        identity: Identity,
        templates: Vec<ObjectiveTemplate>,
        session: Session,
        config: RuntimeConfig,
        seed: u64,
    ) -> Result<Self, RuntimeError> {
        identity.validate()?;
        let Session { tasks, graph } = Session::new(session.tasks, session.graph);
        let backend: Box<dyn CuaBackend + Send> = match config.flaky_period {
            Some(p) => Box::new(FlakyCua::new(p)),
            None => Box::new(DefaultCua),
        };
        Ok(Self {
            index: tasks.iter().enumerate().map(|(i, t)| (t.task_id.clone(), i)).collect(),
            goldens: tasks.iter().map(|t| (t.task_id.clone(), golden_for(t))).collect(),
            statuses: tasks.iter().map(|t| (t.task_id.clone(), TaskStatus::new())).collect(),
            ws: Workspace::pristine_for(&tasks),
            budget: SessionBudget::new(config.max_minutes, config.max_tool_calls),
            flat: ContextWindow::new(config.context_budget),
            rng: ChaCha8Rng::seed_from_u64(seed),
            identity,
            templates,
            seed,
            tasks,
            graph,
            backend,
            config,
            clock: SimTime::ZERO,
            day: 0,
            schedule: (SimTime::ZERO, SimTime::ZERO),
            started_at: SimTime::ZERO,
            memory: MemoryStore::new(),
            plans: PlanBook::new(),
            daily: None,
            demos: DemoIndex::new(),
            loaded_at: BTreeMap::new(),
            loads: 0,
            cycle: 0,
            last_start: None,
            working: WorkingMemory::default(),
            skip_reasons: BTreeMap::new(),
            notes: Vec::new(),
            counters: Counters::default(),
            halt: None,
            log: Vec::new(),
            mailbox: None,
            started: false,
        })
    }

    pub fn with_backend(mut self, backend: Box<dyn CuaBackend + Send>) -> Self {
        self.backend = backend;
        self
    }

    pub fn attach_mailbox(&mut self, mailbox: SharedMailboxes) {
        mailbox.register(self.identity.agent_id.clone());
        self.mailbox = Some(mailbox);
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    pub fn schedule(&self) -> (SimTime, SimTime) {
        self.schedule
    }

    pub fn budget(&self) -> &SessionBudget {
        &self.budget
    }

    pub fn statuses(&self) -> &BTreeMap<TaskId, TaskStatus> {
        &self.statuses
    }

    pub fn workspace(&self) -> &Workspace {
        &self.ws
    }

    pub fn workspace_mut(&mut self) -> &mut Workspace {
        &mut self.ws
    }

    pub fn memory(&self) -> &MemoryStore {
        &self.memory
    }

    pub fn demos(&self) -> &DemoIndex {
        &self.demos
    }

    /// Seeds the demonstration index, e.g. from an earlier day's memory.
    pub fn set_demos(&mut self, demos: DemoIndex) {
        self.demos = demos;
    }

    pub fn daily_plan(&self) -> Option<&DailyPlan> {
        self.daily.as_ref()
    }

    pub fn plans(&self) -> &PlanBook {
        &self.plans
    }

    pub fn flat_window(&self) -> &ContextWindow {
        &self.flat
    }

    pub fn action_log(&self) -> &[ActionRecord] {
        &self.log
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn halt(&self) -> Option<HaltReason> {
        self.halt
    }

    pub fn working_memory(&self) -> &WorkingMemory {
        &self.working
    }

    /// Applies schedule jitter, builds the day's plans and, for the flat
    /// baseline, loads every task state into its persistent context.
    pub fn start_day(&mut self, day: u64) -> Result<(), RuntimeError> {
        let jitter = |rng: &mut ChaCha8Rng, base: SimTime| {
            let j = rng.gen_range(-SCHEDULE_JITTER..=SCHEDULE_JITTER);
            SimTime(base.minutes().saturating_add_signed(j))
        };
        let start = jitter(&mut self.rng, SimTime::at(day, self.identity.t_start, 0));
        let end = jitter(&mut self.rng, SimTime::at(day, self.identity.t_end, 0));
        self.day = day;
        self.schedule = (start, end);
        self.clock = self.clock.max(start);
        self.started_at = self.clock;
        self.last_start = None;
        self.started = true;
        self.refresh_blocking();
        let policy = self.config.policy;
        if policy.is_orchestrated() {
            let month = SimTime::at(day, 0, 0).month();
            if self.plans.monthly(month).is_none() {
                let monthly = self.plans.generate_monthly(&self.identity, month, &self.templates)?;
                monthly.attach_backlog(&self.tasks);
                let text = monthly.render();
                self.memory.insert(NewRecord::new(MemoryKind::MonthlyPlan, text).important(true), self.clock)?;
            }
            let monthly = self.plans.monthly_mut(month).ok_or(PlanError::NoMonthlyPlan(month))?;
            let mut daily = generate_daily(monthly, day, &self.tasks, &self.graph, &self.statuses);
            daily.observe(&self.ws);
            if policy.uses_cognitive_tools() {
                let ids = daily.tasks().iter().map(|t| t.task_id.to_string()).collect();
                if let Err(e) = self.budget.charge_calls(1) {
                    self.halt = Some(e.into());
                } else {
                    let mut scratch = ContextWindow::new(self.config.context_budget);
                    cognitive_tool(&mut scratch, &GENERATE_PLAN, Payload::new().with("tasks", ids), 0, self.clock)?;
                }
            }
            self.memory.insert(NewRecord::new(MemoryKind::DailyPlan, daily.render()), self.clock)?;
            self.daily = Some(daily);
        } else if policy == PolicyKind::FlatBaseline {
            for i in 0..self.tasks.len() {
                if !self.statuses[&self.tasks[i].task_id].is_terminal() {
                    self.load_state(i)?;
                }
            }
        }
        Ok(())
    }

    /// Runs one cycle; budget exhaustion ends the day cleanly.
    pub fn run_cycle(&mut self) -> Result<CycleResult, RuntimeError> {
        if !self.started {
            self.start_day(self.day)?;
        }
        if let Some(h) = self.halt {
            return Ok(self.halted(h));
        }
        match self.cycle_inner() {
            Ok(r) => Ok(r),
            Err(Stop::Budget(e)) => {
                self.abort_in_progress();
                let h = HaltReason::from(e);
                self.halt = Some(h);
                Ok(self.halted(h))
            }
            Err(Stop::Fatal(e)) => Err(e),
        }
    }

    fn halted(&self, h: HaltReason) -> CycleResult {
        CycleResult {
            cycle: self.cycle,
            started_at: self.clock,
            worked: None,
            halted: Some(h),
        }
    }

    fn abort_in_progress(&mut self) {
        for s in self.statuses.values_mut() {
            if s.state() == TaskState::InProgress {
                s.transition(TaskState::Failed).expect("in-progress may fail");
            }
        }
    }

    fn all_terminal(&self) -> bool {
        self.statuses.values().all(TaskStatus::is_terminal)
    }

    fn spend_steps(&mut self, steps: u64) -> Result<(), BudgetError> {
        let minutes = steps * self.config.clock.minutes_per_step();
        self.budget.charge_minutes(minutes)?;
        self.clock = self.clock + minutes;
        Ok(())
    }

    fn cycle_inner(&mut self) -> Result<CycleResult, Stop> {
        if self.all_terminal() {
            self.halt = Some(HaltReason::AllTerminal);
            return Ok(self.halted(HaltReason::AllTerminal));
        }
        if let Some(prev) = self.last_start {
            let earliest = prev + self.config.clock.cycle_interval(&self.identity);
            if self.clock < earliest {
                let wait = earliest - self.clock;
                self.budget.charge_minutes(wait)?;
                self.clock = earliest;
                self.counters.wait_minutes += wait;
            }
        }
        if self.clock > self.schedule.1 {
            self.halt = Some(HaltReason::ScheduleEnd);
            return Ok(self.halted(HaltReason::ScheduleEnd));
        }
        self.cycle += 1;
        self.counters.cycles += 1;
        let started_at = self.clock;
        self.last_start = Some(started_at);
        self.working.reset(self.cycle);
        self.absorb_events()?;
        self.refresh_blocking();
        let worked = match self.config.policy {
            PolicyKind::FlatBaseline => self.flat_cycle()?,
            PolicyKind::Scripted => self.scripted_cycle()?,
            _ => self.orchestrated_cycle()?,
        };
        let (summary, rec) = match &worked {
            Some((t, state)) => {
                let spec = &self.tasks[self.index[t]];
                let attempts = self.statuses[t].attempt_count();
                let text = format!("cycle {}: {t} {} after attempt {attempts}", self.cycle, state.name());
                let rec = NewRecord::new(MemoryKind::ActionSummary, text.clone())
                    .task(t.clone())
                    .app(spec.app_id.clone())
                    .important(*state != TaskState::Completed);
                (text, rec)
            }
            None => {
                self.counters.idle_cycles += 1;
                let text = format!("cycle {}: idle", self.cycle);
                (text.clone(), NewRecord::new(MemoryKind::ActionSummary, text))
            }
        };
        self.working.note(summary);
        self.memory.insert(rec, self.clock)?;
        Ok(CycleResult {
            cycle: self.cycle,
            started_at,
            worked,
            halted: None,
        })
    }

    /// Messages and workspace changes become plan-update events.
    fn absorb_events(&mut self) -> Result<(), Stop> {
        let mut events = Vec::new();
        if let Some(mb) = &self.mailbox {
            let msgs = mb.poll(&self.identity.agent_id, self.clock);
            for m in &msgs {
                self.working.note(format!("message from {}: {}", m.from, m.body));
            }
            events.extend(to_events(&msgs, self.clock));
        }
        if let Some(daily) = &self.daily {
            events.extend(detect_inconsistency(daily, &self.tasks, &self.ws, &self.statuses, self.clock));
        }
        if !self.config.policy.is_orchestrated() {
            return Ok(());
        }
        let month = self.clock.month();
        let (Some(monthly), Some(daily)) = (
            self.plans.monthly_mut(month),
            self.daily.as_mut(),
        ) else {
            return Ok(());
        };
        for e in &events {
            propagate_update(monthly, daily, e)?;
        }
        Ok(())
    }

    /// Pending tasks with unfinished prerequisites or a missing deliverable
    /// become Blocked; Blocked tasks whose causes cleared return to Pending.
    fn refresh_blocking(&mut self) {
        for spec in &self.tasks {
            let done = |t: &TaskId| self.statuses.get(t).is_some_and(|s| s.state() == TaskState::Completed);
            let clear = self.graph.prerequisites(&spec.task_id).all(done)
                && self.ws.artifact(&spec.app_id, &spec.deliverable_id).is_some();
            let status = self.statuses.get_mut(&spec.task_id).expect("every task has a status");
            match (status.state(), clear) {
                (TaskState::Pending, false) => status.transition(TaskState::Blocked).expect("legal"),
                (TaskState::Blocked, true) => status.transition(TaskState::Pending).expect("legal"),
                _ => {}
            }
        }
    }

    fn eligible(&self, t: &TaskId) -> bool {
        self.statuses.get(t).is_some_and(|s| match s.state() {
            TaskState::Pending => true,
            TaskState::Failed => s.retries_left(),
            _ => false,
        })
    }

    fn first_ready(&self) -> Option<TaskId> {
        crate::task::ready_tasks(&self.graph, &self.statuses)
            .into_iter()
            .find(|t| self.eligible(t))
    }

    fn load_state(&mut self, i: usize) -> Result<(), ContextError> {
        let spec = &self.tasks[i];
        let text = state_text(spec, self.statuses[&spec.task_id].state());
        let entry = ContextEntry::new(text, Origin::Observation, Some(spec.task_id.clone()), self.cycle, self.clock);
        self.loads += 1;
        self.loaded_at.insert(spec.task_id.clone(), self.loads);
        self.flat.set_app_state(self.ws.digest());
        let res = self.flat.push_and_stabilize(entry);
        self.counters.peak_flat_tokens = self.counters.peak_flat_tokens.max(self.flat.total_tokens());
        let st = res?;
        if st.stage != SummarizationStage::None {
            self.counters.summarizations += 1;
        }
        Ok(())
    }

    /// Edit keys that resolve to a co-resident task loaded more recently.
    fn redirects(&self, i: usize) -> BTreeMap<String, ArtifactId> {
        let spec = &self.tasks[i];
        let mut out = BTreeMap::new();
        for e in &spec.edit_script {
            let owner = self
                .tasks
                .iter()
                .filter(|o| o.app_id == spec.app_id && o.touches_key(&e.key))
                .filter(|o| !self.statuses[&o.task_id].is_terminal() && self.flat.contains_task_entry(&o.task_id))
                .max_by_key(|o| self.loaded_at.get(&o.task_id).copied().unwrap_or(0));
            if let Some(o) = owner {
                if o.task_id != spec.task_id {
                    out.insert(e.key.clone(), o.deliverable_id.clone());
                }
            }
        }
        out
    }

    fn begin_attempt(&mut self, t: &TaskId) -> Result<(), StatusError> {
        let s = self.statuses.get_mut(t).expect("known task");
        if s.state() == TaskState::Failed {
            s.transition(TaskState::Pending)?;
        }
        s.start_attempt()?;
        self.counters.attempts += 1;
        Ok(())
    }

    /// Settles the attempt's status and its knock-on effects; returns the
    /// resulting state.
    fn finish_attempt(&mut self, i: usize, result: Option<AttemptResult>, reason: &str) -> Result<TaskState, Stop> {
        let spec = self.tasks[i].clone();
        let t = &spec.task_id;
        let judged = result.as_ref().is_some_and(|r| r.judged);
        let status = self.statuses.get_mut(t).expect("known task");
        let mut events = Vec::new();
        if judged {
            status.transition(TaskState::Completed)?;
            self.notes.push(TaskNote {
                task_id: t.clone(),
                app_id: spec.app_id.clone(),
                outcome: DayOutcome::Completed,
                note: format!("finished on attempt {}", status.attempt_count()),
            });
            events.push(PlanUpdateEvent::task(EventKind::TaskCompleted, t.clone(), "judged", self.clock));
            if self.config.policy.uses_demos() {
                let r = result.expect("judged implies a result");
                let traj = Trajectory {
                    task_id: t.clone(),
                    app_id: spec.app_id.clone(),
                    description: spec.description.clone(),
                    initial_state: r.initial_state,
                    actions: r.actions,
                    success: true,
                };
                let demo = distill(&traj)?;
                self.demos.insert_persisted(demo, &mut self.memory, self.clock)?;
                self.counters.demos_recorded += 1;
            }
        } else {
            status.transition(TaskState::Failed)?;
            let reason = match &result {
                Some(r) if !r.script_done => "iteration cap reached",
                Some(_) => "deliverable does not match",
                None => reason,
            };
            if retry_or_skip(status) == RetryDecision::Skip {
                status.transition(TaskState::Skipped)?;
                self.skip_reasons.insert(t.clone(), reason.to_owned());
                self.notes.push(TaskNote {
                    task_id: t.clone(),
                    app_id: spec.app_id.clone(),
                    outcome: DayOutcome::Skipped,
                    note: reason.to_owned(),
                });
                events.push(PlanUpdateEvent::task(EventKind::TaskSkipped, t.clone(), reason, self.clock));
            }
        }
        let state = self.statuses[t].state();
        if self.config.policy.is_orchestrated() {
            let month = self.clock.month();
            if let (Some(monthly), Some(daily)) = (self.plans.monthly_mut(month), self.daily.as_mut()) {
                for e in &events {
                    propagate_update(monthly, daily, e)?;
                }
            }
        }
        Ok(state)
    }

    fn fail_without_acting(&mut self, i: usize, reason: &str) -> Result<TaskState, Stop> {
        let t = self.tasks[i].task_id.clone();
        self.begin_attempt(&t)?;
        self.statuses.get_mut(&t).expect("known").record_iteration()?;
        self.finish_attempt(i, None, reason)
    }

    fn flat_cycle(&mut self) -> Result<Option<(TaskId, TaskState)>, Stop> {
        let active = self.statuses.values().filter(|s| !s.is_terminal()).count();
        let charges = policy_cost_model(&self.config.cost, self.config.policy, active);
        self.spend_steps(charges.reprioritize_steps)?;
        self.counters.reprioritize_steps += charges.reprioritize_steps;
        let Some(t) = self.first_ready() else {
            return Ok(None);
        };
        let i = self.index[&t];
        let mut context_ok = true;
        if !self.flat.contains_task_entry(&t) {
            self.spend_steps(charges.reload_steps)?;
            self.counters.reload_steps += charges.reload_steps;
            context_ok = self.load_state(i).is_ok();
        }
        if !context_ok {
            self.counters.context_failures += 1;
            let state = self.fail_without_acting(i, "context over budget")?;
            return Ok(Some((t, state)));
        }
        let redirect = if charges.interference {
            self.redirects(i)
        } else {
            BTreeMap::new()
        };
        self.begin_attempt(&t)?;
        let result = {
            let mut x = Exec {
                ws: &mut self.ws,
                backend: self.backend.as_mut(),
                clock: &mut self.clock,
                actor: &self.identity.agent_id,
                minutes_per_step: self.config.clock.minutes_per_step(),
                counters: &mut self.counters,
                log: &mut self.log,
            };
            let status = self.statuses.get_mut(&t).expect("known");
            run_attempt(
                &mut x,
                &mut self.budget,
                status,
                &self.tasks[i],
                &self.goldens[&t],
                self.config.cost.probes,
                &redirect,
                &mut |_| {},
            )?
        };
        let state = self.finish_attempt(i, Some(result), "")?;
        let note = format!(
            "cycle {}: {t} attempt {} {}",
            self.cycle,
            self.statuses[&t].attempt_count(),
            state.name()
        );
        let entry = ContextEntry::new(note, Origin::StateChange, None, self.cycle, self.clock);
        self.flat.set_app_state(self.ws.digest());
        match self.flat.push_and_stabilize(entry) {
            Ok(st) if st.stage != SummarizationStage::None => self.counters.summarizations += 1,
            Ok(_) => {}
            Err(_) => self.counters.context_failures += 1,
        }
        self.counters.peak_flat_tokens = self.counters.peak_flat_tokens.max(self.flat.total_tokens());
        Ok(Some((t, state)))
    }

    fn scripted_cycle(&mut self) -> Result<Option<(TaskId, TaskState)>, Stop> {
        let Some(t) = self.first_ready() else {
            return Ok(None);
        };
        let i = self.index[&t];
        self.begin_attempt(&t)?;
        let result = {
            let mut x = Exec {
                ws: &mut self.ws,
                backend: self.backend.as_mut(),
                clock: &mut self.clock,
                actor: &self.identity.agent_id,
                minutes_per_step: self.config.clock.minutes_per_step(),
                counters: &mut self.counters,
                log: &mut self.log,
            };
            let status = self.statuses.get_mut(&t).expect("known");
            run_attempt(
                &mut x,
                &mut self.budget,
                status,
                &self.tasks[i],
                &self.goldens[&t],
                0,
                &BTreeMap::new(),
                &mut |_| {},
            )?
        };
        let state = self.finish_attempt(i, Some(result), "")?;
        Ok(Some((t, state)))
    }

    /// Plan tasks shown to the tracker: a window of at most
    /// [`MAX_DAILY_TASKS`] starting at the first open one.
    fn tracked(&self) -> Vec<TaskId> {
        let Some(daily) = &self.daily else {
            return Vec::new();
        };
        let tasks = daily.tasks();
        let first_open = tasks
            .iter()
            .position(|p| !self.statuses[&p.task_id].is_terminal())
            .unwrap_or(tasks.len());
        tasks[first_open..]
            .iter()
            .take(MAX_DAILY_TASKS)
            .map(|p| p.task_id.clone())
            .collect()
    }

    fn select_planned(&mut self, host: &mut ContextWindow) -> Result<Option<TaskId>, Stop> {
        let Some(daily) = self.daily.as_mut() else {
            return Ok(None);
        };
        if let Selection::Task(t) = select_next(daily, &self.statuses) {
            return Ok(Some(t));
        }
        if !self.config.policy.uses_cognitive_tools() {
            return Ok(None);
        }
        let month = self.clock.month();
        let monthly = self.plans.monthly_mut(month).ok_or(PlanError::NoMonthlyPlan(month))?;
        let more = generate_daily(monthly, self.day, &self.tasks, &self.graph, &self.statuses);
        let new: Vec<String> = more
            .tasks()
            .iter()
            .filter(|p| !daily.contains(&p.task_id))
            .map(|p| p.task_id.to_string())
            .collect();
        if new.is_empty() {
            return Ok(None);
        }
        self.budget.charge_calls(1)?;
        cognitive_tool(host, &UPDATE_PLAN, Payload::new().with("tasks", new), self.cycle, self.clock)?;
        daily.extend(more);
        self.memory
            .insert(NewRecord::new(MemoryKind::DailyPlan, daily.render()), self.clock)?;
        Ok(match select_next(daily, &self.statuses) {
            Selection::Task(t) => Some(t),
            Selection::Idle => None,
        })
    }

    fn orchestrated_cycle(&mut self) -> Result<Option<(TaskId, TaskState)>, Stop> {
        let policy = self.config.policy;
        let charges = policy_cost_model(&self.config.cost, policy, 1);
        self.spend_steps(charges.reprioritize_steps)?;
        self.counters.reprioritize_steps += charges.reprioritize_steps;
        let mut host = ContextWindow::new(self.config.context_budget);
        let (cycle, now) = (self.cycle, self.clock);
        host.push_and_stabilize(ContextEntry::new(self.identity.block(), Origin::StateChange, None, cycle, now))?;
        if policy.uses_cognitive_tools() {
            self.budget.charge_calls(1)?;
            let tracking = track_tasks(&self.tracked(), &self.statuses);
            cognitive_tool(&mut host, &TRACK_TASKS, tracking.payload(), cycle, now)?;
        }
        let selected = self.select_planned(&mut host)?;
        let Some(t) = selected else {
            self.counters.peak_host_tokens = self.counters.peak_host_tokens.max(host.total_tokens());
            return Ok(None);
        };
        let i = self.index[&t];
        let app = self.tasks[i].app_id.clone();
        if !filter_tools(&self.identity, app.as_str()).iter().any(|x| x == app.as_str()) {
            let state = self.fail_without_acting(i, "no tool for application")?;
            return Ok(Some((t, state)));
        }
        let query = RetrievalQuery::new(self.tasks[i].description.clone(), now).top(self.config.cost.memory_k);
        for rec in self.memory.retrieve(&query)? {
            host.push_and_stabilize(ContextEntry::new(snippet(&rec.content), Origin::Observation, None, cycle, now))?;
        }
        let state_entry = state_text(&self.tasks[i], self.statuses[&t].state());
        host.push_and_stabilize(ContextEntry::new(state_entry, Origin::Observation, Some(t.clone()), cycle, now))?;
        let mut probes = self.config.cost.probes;
        if policy.uses_demos() {
            let spec = &self.tasks[i];
            let digest = context_digest(&spec.app_id, &spec.description, &initial_state(&self.ws, spec));
            let hits = retrieve_demos(&self.demos, &digest, &spec.app_id, self.config.cost.demo_k);
            let mut hints = ExecutionHints::default();
            if inject(&mut hints, &hits, self.config.cost.demo_threshold) && hints.skips_probes() {
                probes = 0;
                self.counters.demo_injections += 1;
            }
        }
        self.begin_attempt(&t)?;
        let mut outcome: Option<Result<AttemptResult, BudgetError>> = None;
        let invoked = {
            let mut x = Exec {
                ws: &mut self.ws,
                backend: self.backend.as_mut(),
                clock: &mut self.clock,
                actor: &self.identity.agent_id,
                minutes_per_step: self.config.clock.minutes_per_step(),
                counters: &mut self.counters,
                log: &mut self.log,
            };
            let status = self.statuses.get_mut(&t).expect("known");
            let spec = &self.tasks[i];
            let golden = &self.goldens[&t];
            let none = BTreeMap::new();
            invoke_subagent(&mut host, &mut self.budget, &CUA, cycle, now, |ctx| {
                let (budget, mut sub) = ctx.split();
                let r = run_attempt(&mut x, budget, status, spec, golden, probes, &none, &mut |s| sub.push(s));
                let payload = match &r {
                    Ok(a) => Payload::new()
                        .with("status", vec![if a.judged { "completed" } else { "failed" }.to_owned()])
                        .with("steps", vec![a.actions.len().to_string()]),
                    Err(e) => Payload::new().with("error", vec![e.to_string()]),
                };
                let ok = matches!(&r, Ok(a) if a.judged);
                outcome = Some(r);
                if ok {
                    Ok(payload)
                } else {
                    Err(payload)
                }
            })
        };
        self.counters.peak_host_tokens = self.counters.peak_host_tokens.max(host.total_tokens());
        match invoked {
            Ok(_) | Err(SubAgentError::Failure { .. }) => {}
            Err(e) => return Err(e.into()),
        }
        let result = match outcome {
            Some(Ok(r)) => r,
            Some(Err(e)) => return Err(Stop::Budget(e)),
            None => unreachable!("body runs once the invocation is charged"),
        };
        let state = self.finish_attempt(i, Some(result), "")?;
        Ok(Some((t, state)))
    }

    /// Day-end reflection and memory consolidation.
    pub fn finish_day(&mut self) -> Result<(), RuntimeError> {
        self.abort_in_progress();
        let policy = self.config.policy;
        if !policy.is_orchestrated() {
            return Ok(());
        }
        let ids: Vec<TaskId> = self.tasks.iter().map(|t| t.task_id.clone()).collect();
        let completed = self.statuses.values().filter(|s| s.state() == TaskState::Completed).count();
        let mut text = format!("{completed} of {} tasks completed", ids.len());
        if policy.uses_cognitive_tools() && self.budget.charge_calls(1).is_ok() {
            let r = reflect(&ids, &self.statuses, &self.skip_reasons);
            let mut scratch = ContextWindow::new(self.config.context_budget);
            cognitive_tool(&mut scratch, &REFLECT, r.payload(), self.cycle, self.clock)?;
            text = r.summary();
        }
        let notes = std::mem::take(&mut self.notes);
        self.memory.consolidate_day(&notes, &text, self.clock)?;
        if let Some(m) = self.plans.monthly_mut(self.clock.month()) {
            m.close_due(self.clock);
        }
        Ok(())
    }

    pub fn report(&self) -> DayReport {
        let tasks = self
            .tasks
            .iter()
            .map(|spec| {
                let s = &self.statuses[&spec.task_id];
                let judged = s.state() == TaskState::Completed
                    && self
                        .ws
                        .artifact(&spec.app_id, &spec.deliverable_id)
                        .is_some_and(|d| judge_artifact(d, &self.goldens[&spec.task_id]));
                TaskOutcome {
                    task_id: spec.task_id.clone(),
                    app_id: spec.app_id.clone(),
                    state: s.state(),
                    attempts: s.attempt_count(),
                    judged,
                }
            })
            .collect();
        DayReport {
            agent: self.identity.agent_id.to_string(),
            policy: self.config.policy,
            clock: self.config.clock,
            seed: self.seed,
            schedule: self.schedule,
            started_at: self.started_at,
            ended_at: self.clock,
            halt: self.halt.unwrap_or(HaltReason::ScheduleEnd),
            minutes_used: self.budget.used_minutes(),
            tool_calls: self.budget.used_tool_calls(),
            counters: self.counters,
            tasks,
        }
    }
}

/// Runs a whole day: start, cycles until a halt, finalization.
pub fn run_day(
    identity: &Identity,
    templates: &[ObjectiveTemplate],
    session: &Session,
    config: &RuntimeConfig,
    seed: u64,
) -> Result<DayReport, RuntimeError> {
    let mut agent = Agent::new(identity.clone(), templates.to_vec(), session.clone(), config.clone(), seed)?;
    agent.start_day(0)?;
    while agent.halt().is_none() {
        agent.run_cycle()?;
    }
    agent.finish_day()?;
    Ok(agent.report())
}
