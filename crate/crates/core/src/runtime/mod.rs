//! Agent-day execution: simulated clock, session budgets, the per-cycle
//! ReAct loop and the four ablation policies.

mod agent;
mod react;
mod report;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::budget::{BudgetError, DEFAULT_MAX_MINUTES, DEFAULT_MAX_TOOL_CALLS};
use crate::context::{ContextError, DEFAULT_BUDGET};
use crate::memory::{MemoryError, DEFAULT_K};
use crate::planning::{Identity, PlanError};
use crate::subagents::{SubAgentError, COGNITIVE_TOOLS, RESEARCH};
use crate::task::{StatusError, TaskStatus, MAX_ATTEMPTS};
use crate::xplearn::{XpError, DEFAULT_DEMO_K, DEFAULT_PROBE_STEPS, DEFAULT_THRESHOLD};

pub use agent::{run_day, state_text, Agent, CycleResult, Session, RECORD_SNIPPET_TOKENS, SCHEDULE_JITTER};
pub use react::{run_script, ReactLoop, ReactStep};
pub use report::{Counters, DayReport, HaltReason, TaskOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    /// One persistent context holding every active task.
    FlatBaseline,
    /// Plan hierarchy, memory and per-cycle isolated contexts.
    CognitiveModel,
    /// Adds task tracking, reflection and plan extension.
    CognitiveTools,
    /// Adds demonstration retrieval from earlier successes.
    ExpLearning,
    /// Overhead-free reference executor: ready tasks in order, no probing.
    Scripted,
}

impl PolicyKind {
    /// The ablation ladder, weakest first.
    pub const LADDER: [PolicyKind; 4] = [
        PolicyKind::FlatBaseline,
        PolicyKind::CognitiveModel,
        PolicyKind::CognitiveTools,
        PolicyKind::ExpLearning,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::FlatBaseline => "flat",
            PolicyKind::CognitiveModel => "cognitive_model",
            PolicyKind::CognitiveTools => "cognitive_tools",
            PolicyKind::ExpLearning => "exp_learning",
            PolicyKind::Scripted => "scripted",
        }
    }

    pub fn is_orchestrated(self) -> bool {
        matches!(
            self,
            PolicyKind::CognitiveModel | PolicyKind::CognitiveTools | PolicyKind::ExpLearning
        )
    }

    pub fn uses_cognitive_tools(self) -> bool {
        matches!(self, PolicyKind::CognitiveTools | PolicyKind::ExpLearning)
    }

    pub fn uses_demos(self) -> bool {
        self == PolicyKind::ExpLearning
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "flat" | "baseline" | "flat_baseline" => PolicyKind::FlatBaseline,
            "cognitive_model" | "cm" => PolicyKind::CognitiveModel,
            "cognitive_tools" | "ct" => PolicyKind::CognitiveTools,
            "exp_learning" | "el" | "orchestrated" => PolicyKind::ExpLearning,
            "scripted" => PolicyKind::Scripted,
            other => return Err(ConfigError::UnknownPolicy(other.to_owned())),
        })
    }
}

/// Step charges that separate the flat baseline from orchestrated policies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    /// Steps per active task spent re-deciding what to do each cycle.
    pub reprioritize: u64,
    /// Steps to bring an evicted task state back into context.
    pub reload: u64,
    /// Exploratory inspect actions per attempt without a matching demo.
    pub probes: u32,
    pub memory_k: usize,
    pub demo_k: usize,
    pub demo_threshold: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            reprioritize: 1,
            reload: 5,
            probes: DEFAULT_PROBE_STEPS,
            memory_k: DEFAULT_K,
            demo_k: DEFAULT_DEMO_K,
            demo_threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Per-cycle charges a policy pays before acting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleCharges {
    pub reprioritize_steps: u64,
    /// Paid only when the selected task is cold.
    pub reload_steps: u64,
    pub interference: bool,
}

/// Overhead of one cycle with `active` non-terminal tasks.
pub fn policy_cost_model(cost: &CostModel, policy: PolicyKind, active: usize) -> CycleCharges {
    match policy {
        PolicyKind::FlatBaseline => CycleCharges {
            reprioritize_steps: cost.reprioritize * active as u64,
            reload_steps: cost.reload,
            interference: true,
        },
        PolicyKind::Scripted => CycleCharges {
            reprioritize_steps: 0,
            reload_steps: 0,
            interference: false,
        },
        _ => CycleCharges {
            reprioritize_steps: cost.reprioritize,
            reload_steps: 0,
            interference: false,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockProfile {
    /// One sim minute per action step; cycles at the identity's interval.
    Standard,
    /// Steps are free; cycles start one sim minute apart.
    Fast,
}

impl ClockProfile {
    pub fn minutes_per_step(self) -> u64 {
        match self {
            ClockProfile::Standard => 1,
            ClockProfile::Fast => 0,
        }
    }

    pub fn cycle_interval(self, identity: &Identity) -> u64 {
        match self {
            ClockProfile::Standard => identity.cycle_interval,
            ClockProfile::Fast => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClockProfile::Standard => "standard",
            ClockProfile::Fast => "fast",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeConfig {
    pub policy: PolicyKind,
    pub cost: CostModel,
    pub clock: ClockProfile,
    pub max_minutes: u64,
    pub max_tool_calls: u64,
    pub context_budget: usize,
    /// Use a CUA backend that fails every n-th action.
    pub flaky_period: Option<u64>,
}

impl RuntimeConfig {
    pub fn new(policy: PolicyKind) -> Self {
        Self {
            policy,
            cost: CostModel::default(),
            clock: ClockProfile::Standard,
            max_minutes: DEFAULT_MAX_MINUTES,
            max_tool_calls: DEFAULT_MAX_TOOL_CALLS,
            context_budget: DEFAULT_BUDGET,
            flaky_period: None,
        }
    }

    /// Applies `MHTE_*` overrides found through `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parse<T: FromStr>(var: &str, raw: String) -> Result<T, ConfigError> {
            raw.trim().parse().map_err(|_| ConfigError::BadValue {
                var: var.to_owned(),
                value: raw,
            })
        }
        let get = |var: &'static str| lookup(var).map(|v| (var, v));
        if let Some((k, v)) = get("MHTE_MAX_MINUTES") {
            self.max_minutes = parse(k, v)?;
        }
        if let Some((k, v)) = get("MHTE_MAX_TOOL_CALLS") {
            self.max_tool_calls = parse(k, v)?;
        }
        if let Some((k, v)) = get("MHTE_CONTEXT_BUDGET") {
            self.context_budget = parse(k, v)?;
        }
        if let Some((k, v)) = get("MHTE_COST_REPRIORITIZE") {
            self.cost.reprioritize = parse(k, v)?;
        }
        if let Some((k, v)) = get("MHTE_COST_RELOAD") {
            self.cost.reload = parse(k, v)?;
        }
        if let Some((k, v)) = get("MHTE_PROBE_STEPS") {
            self.cost.probes = parse(k, v)?;
        }
        if let Some((k, v)) = get("MHTE_MEMORY_K") {
            self.cost.memory_k = parse(k, v)?;
        }
        if let Some((k, v)) = get("MHTE_DEMO_K") {
            self.cost.demo_k = parse(k, v)?;
        }
        if let Some((k, v)) = get("MHTE_DEMO_THRESHOLD") {
            self.cost.demo_threshold = parse(k, v)?;
        }
        if let Some((k, v)) = get("MHTE_CLOCK") {
            self.clock = match v.trim() {
                "standard" => ClockProfile::Standard,
                "fast" => ClockProfile::Fast,
                _ => return Err(ConfigError::BadValue { var: k.to_owned(), value: v }),
            };
        }
        if let Some((k, v)) = get("MHTE_FLAKY_PERIOD") {
            let p: u64 = parse(k, v)?;
            self.flaky_period = (p > 0).then_some(p);
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("{var}: cannot parse {value:?}")]
    BadValue { var: String, value: String },
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("ReAct step {position}: {reason}")]
    AlternationViolation { position: usize, reason: &'static str },
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Experience(#[from] XpError),
    #[error(transparent)]
    SubAgent(#[from] SubAgentError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Status(#[from] StatusError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetryDecision {
    Retry,
    Skip,
}

/// Decision after a failed attempt.
pub fn retry_or_skip(status: &TaskStatus) -> RetryDecision {
    if status.attempt_count() < MAX_ATTEMPTS {
        RetryDecision::Retry
    } else {
        RetryDecision::Skip
    }
}

/// Tools usable this cycle: the identity's tools restricted to the task's
/// application, research and the cognitive tools.
pub fn filter_tools(identity: &Identity, app: &str) -> Vec<String> {
    identity
        .tools
        .iter()
        .filter(|t| {
            t.as_str() == app || t.as_str() == RESEARCH.name || COGNITIVE_TOOLS.iter().any(|d| d.name == t.as_str())
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::TaskState;

    #[test]
    fn retry_until_third_attempt() {
        assert_eq!(retry_or_skip(&TaskStatus::with(TaskState::Failed, 1)), RetryDecision::Retry);
        assert_eq!(retry_or_skip(&TaskStatus::with(TaskState::Failed, 2)), RetryDecision::Retry);
        assert_eq!(retry_or_skip(&TaskStatus::with(TaskState::Failed, 3)), RetryDecision::Skip);
    }

    #[test]
    fn overhead_per_cycle() {
        let c = CostModel::default();
        assert_eq!(policy_cost_model(&c, PolicyKind::FlatBaseline, 46).reprioritize_steps, 46);
        for p in &PolicyKind::LADDER[1..] {
            let ch = policy_cost_model(&c, *p, 46);
            assert_eq!(ch.reprioritize_steps, 1);
            assert!(!ch.interference);
        }
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyKind::LADDER.into_iter().chain([PolicyKind::Scripted]) {
            assert_eq!(p.name().parse::<PolicyKind>().unwrap(), p);
        }
        assert_eq!("orchestrated".parse::<PolicyKind>().unwrap(), PolicyKind::ExpLearning);
        assert!("nope".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn env_overrides() {
        let mut cfg = RuntimeConfig::new(PolicyKind::FlatBaseline);
        let vars = [("MHTE_COST_RELOAD", "7"), ("MHTE_CLOCK", "fast"), ("MHTE_MAX_TOOL_CALLS", "100")];
        cfg.apply_env(|k| vars.iter().find(|(n, _)| *n == k).map(|(_, v)| v.to_string()))
            .unwrap();
        assert_eq!(cfg.cost.reload, 7);
        assert_eq!(cfg.clock, ClockProfile::Fast);
        assert_eq!(cfg.max_tool_calls, 100);
        let err = cfg.apply_env(|k| (k == "MHTE_DEMO_K").then(|| "x".to_owned()));
        assert!(matches!(err, Err(ConfigError::BadValue { .. })));
    }
}
