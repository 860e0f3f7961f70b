//! End-of-day report and its text form.

use std::fmt::Write as _;

use crate::budget::BudgetError;
use crate::ids::{AppId, TaskId};
use crate::task::TaskState;
use crate::time::SimTime;

use super::{ClockProfile, PolicyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaltReason {
    AllTerminal,
    ScheduleEnd,
    DurationCap,
    ToolCallCap,
}

impl HaltReason {
    pub fn name(self) -> &'static str {
        match self {
            HaltReason::AllTerminal => "all_terminal",
            HaltReason::ScheduleEnd => "schedule_end",
            HaltReason::DurationCap => "duration_cap",
            HaltReason::ToolCallCap => "tool_call_cap",
        }
    }

    pub fn is_budget(self) -> bool {
        matches!(self, HaltReason::DurationCap | HaltReason::ToolCallCap)
    }
}

impl From<BudgetError> for HaltReason {
    fn from(e: BudgetError) -> Self {
        match e {
            BudgetError::Duration { .. } => HaltReason::DurationCap,
            BudgetError::ToolCalls { .. } => HaltReason::ToolCallCap,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub cycles: u64,
    pub idle_cycles: u64,
    pub attempts: u64,
    pub reprioritize_steps: u64,
    pub reload_steps: u64,
    pub probe_steps: u64,
    pub action_steps: u64,
    pub wait_minutes: u64,
    /// Edits that landed on another task's deliverable.
    pub interference_writes: u64,
    pub demo_injections: u64,
    pub demos_recorded: u64,
    pub summarizations: u64,
    pub context_failures: u64,
    /// Largest per-cycle host context of an orchestrated policy.
    pub peak_host_tokens: usize,
    /// Largest size of the flat baseline's persistent context.
    pub peak_flat_tokens: usize,
}

impl Counters {
    /// Every charged step: overheads plus actions.
    pub fn total_steps(&self) -> u64 {
        self.reprioritize_steps + self.reload_steps + self.probe_steps + self.action_steps
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskOutcome {
    pub task_id: TaskId,
    pub app_id: AppId,
    pub state: TaskState,
    pub attempts: u32,
    /// Completed and the deliverable matches its golden at day end.
    pub judged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DayReport {
    pub agent: String,
    pub policy: PolicyKind,
    pub clock: ClockProfile,
    pub seed: u64,
    pub schedule: (SimTime, SimTime),
    pub started_at: SimTime,
    pub ended_at: SimTime,
    pub halt: HaltReason,
    pub minutes_used: u64,
    pub tool_calls: u64,
    pub counters: Counters,
    /// Sorted by task id.
    pub tasks: Vec<TaskOutcome>,
}

impl DayReport {
    pub fn completed(&self) -> usize {
        self.tasks.iter().filter(|t| t.state == TaskState::Completed).count()
    }

    pub fn judged(&self) -> usize {
        self.tasks.iter().filter(|t| t.judged).count()
    }

    pub fn skipped(&self) -> usize {
        self.tasks.iter().filter(|t| t.state == TaskState::Skipped).count()
    }

    pub fn all_terminal(&self) -> bool {
        self.tasks.iter().all(|t| t.state.is_terminal())
    }

    pub fn render(&self) -> String {
        let c = &self.counters;
        let mut out = String::new();
        let _ = writeln!(out, "agent={}", self.agent);
        let _ = writeln!(out, "policy={}", self.policy);
        let _ = writeln!(out, "clock={}", self.clock.name());
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "schedule={}..{}", self.schedule.0, self.schedule.1);
        let _ = writeln!(out, "ran={}..{}", self.started_at, self.ended_at);
        let _ = writeln!(out, "halt={}", self.halt.name());
        let _ = writeln!(out, "minutes_used={}", self.minutes_used);
        let _ = writeln!(out, "tool_calls={}", self.tool_calls);
        let _ = writeln!(out, "tasks={}", self.tasks.len());
        let _ = writeln!(out, "completed={}", self.completed());
        let _ = writeln!(out, "judged={}", self.judged());
        let _ = writeln!(out, "skipped={}", self.skipped());
        for (k, v) in [
            ("cycles", c.cycles),
            ("idle_cycles", c.idle_cycles),
            ("attempts", c.attempts),
            ("steps", c.total_steps()),
            ("reprioritize_steps", c.reprioritize_steps),
            ("reload_steps", c.reload_steps),
            ("probe_steps", c.probe_steps),
            ("action_steps", c.action_steps),
            ("wait_minutes", c.wait_minutes),
            ("interference_writes", c.interference_writes),
            ("demo_injections", c.demo_injections),
            ("demos_recorded", c.demos_recorded),
            ("summarizations", c.summarizations),
            ("context_failures", c.context_failures),
            ("peak_host_tokens", c.peak_host_tokens as u64),
            ("peak_flat_tokens", c.peak_flat_tokens as u64),
        ] {
            let _ = writeln!(out, "{k}={v}");
        }
        for t in &self.tasks {
            let _ = writeln!(
                out,
                "task={}\tapp={}\tstate={}\tattempts={}\tjudged={}",
                t.task_id,
                t.app_id,
                t.state.name(),
                t.attempts,
                u8::from(t.judged)
            );
        }
        out
    }
}
