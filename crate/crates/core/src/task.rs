//! Tasks, their dependency DAG and the per-task status machine.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::ids::{AppId, ArtifactId, TaskId};
use crate::time::SimTime;

/// Attempts before a task is skipped.
pub const MAX_ATTEMPTS: u32 = 3;
/// CUA iterations allowed within a single attempt.
pub const MAX_ITERATIONS: u32 = 30;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditStep {
    pub key: String,
    pub value: String,
}

impl EditStep {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub task_id: TaskId,
    pub app_id: AppId,
    pub description: String,
    /// 1 is the most urgent.
    pub priority: u32,
    /// Context tokens needed to keep the task warm.
    pub state_footprint: u32,
    pub step_count: u32,
    pub deadline: Option<SimTime>,
    pub deliverable_id: ArtifactId,
    /// Golden transform: applying these writes in order produces the deliverable.
    pub edit_script: Vec<EditStep>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaskError {
    #[error("task {0}: step_count must be at least 1")]
    NoSteps(TaskId),
    #[error("task {0}: state_footprint must be positive")]
    NoFootprint(TaskId),
    #[error("task {id}: edit_script has {script} entries but step_count is {steps}")]
    ScriptLength { id: TaskId, script: usize, steps: u32 },
    #[error("task {0}: priority must be at least 1")]
    BadPriority(TaskId),
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), TaskError> {
        let id = || self.task_id.clone();
        if self.step_count == 0 {
            return Err(TaskError::NoSteps(id()));
        }
        if self.state_footprint == 0 {
            return Err(TaskError::NoFootprint(id()));
        }
        if self.edit_script.len() != self.step_count as usize {
            return Err(TaskError::ScriptLength {
                id: id(),
                script: self.edit_script.len(),
                steps: self.step_count,
            });
        }
        if self.priority == 0 {
            return Err(TaskError::BadPriority(id()));
        }
        Ok(())
    }

    /// Whether any edit in the script writes `key`.
    pub fn touches_key(&self, key: &str) -> bool {
        self.edit_script.iter().any(|e| e.key == key)
    }
}

/// Scheduling attributes the graph keeps per node so it can order ready work.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeMeta {
    pub priority: u32,
    pub deadline: Option<SimTime>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("dependency cycle: {}", display_cycle(.0))]
    CycleDetected(Vec<TaskId>),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("duplicate task {0}")]
    DuplicateTask(TaskId),
}

fn display_cycle(cycle: &[TaskId]) -> String {
    cycle
        .iter()
        .map(TaskId::as_str)
        .collect::<Vec<_>>()
        .join(" -> ")
}

/// Validated, acyclic prerequisite graph. Node order is sorted by task id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DependencyGraph {
    nodes: BTreeMap<TaskId, NodeMeta>,
    prereqs: BTreeMap<TaskId, BTreeSet<TaskId>>,
}

/// Builds the graph; `edges` are `(task, prerequisite)` pairs.
pub fn build_graph(
    specs: &[TaskSpec],
    edges: &[(TaskId, TaskId)],
) -> Result<DependencyGraph, GraphError> {
    let mut nodes = BTreeMap::new();
    for s in specs {
        let meta = NodeMeta {
            priority: s.priority,
            deadline: s.deadline,
        };
        if nodes.insert(s.task_id.clone(), meta).is_some() {
            return Err(GraphError::DuplicateTask(s.task_id.clone()));
        }
    }
    let mut prereqs: BTreeMap<TaskId, BTreeSet<TaskId>> =
        nodes.keys().map(|k| (k.clone(), BTreeSet::new())).collect();
    for (task, prereq) in edges {
        for endpoint in [task, prereq] {
            if !nodes.contains_key(endpoint) {
                return Err(GraphError::UnknownTask(endpoint.clone()));
            }
        }
        prereqs
            .get_mut(task)
            .expect("checked above")
            .insert(prereq.clone());
    }
    let graph = DependencyGraph { nodes, prereqs };
    if let Some(cycle) = graph.find_cycle() {
        return Err(GraphError::CycleDetected(cycle));
    }
    Ok(graph)
}

impl DependencyGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: &TaskId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TaskId> {
        self.nodes.keys()
    }

    pub fn meta(&self, id: &TaskId) -> Option<NodeMeta> {
        self.nodes.get(id).copied()
    }

    pub fn prerequisites(&self, id: &TaskId) -> impl Iterator<Item = &TaskId> {
        self.prereqs.get(id).into_iter().flatten()
    }

    pub fn dependents<'a>(&'a self, id: &'a TaskId) -> impl Iterator<Item = &'a TaskId> + 'a {
        self.prereqs
            .iter()
            .filter(move |(_, p)| p.contains(id))
            .map(|(t, _)| t)
    }

    /// All `(task, prerequisite)` edges in sorted order.
    pub fn edges(&self) -> Vec<(TaskId, TaskId)> {
        self.prereqs
            .iter()
            .flat_map(|(t, ps)| ps.iter().map(move |p| (t.clone(), p.clone())))
            .collect()
    }

    /// Kahn's algorithm, lowest task id first among available nodes.
    pub fn topo_order(&self) -> Vec<TaskId> {
        let mut remaining: BTreeMap<&TaskId, usize> = self
            .prereqs
            .iter()
            .map(|(t, ps)| (t, ps.len()))
            .collect();
        let mut available: BTreeSet<&TaskId> = remaining
            .iter()
            .filter(|(_, n)| **n == 0)
            .map(|(t, _)| *t)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(next) = available.pop_first() {
            remaining.remove(next);
            order.push(next.clone());
            for dependent in self.dependents(next) {
                let n = remaining.get_mut(dependent).expect("acyclic");
                *n -= 1;
                if *n == 0 {
                    available.insert(dependent);
                }
            }
        }
        order
    }

    fn find_cycle(&self) -> Option<Vec<TaskId>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Fresh,
            Active,
            Done,
        }
        let mut marks: BTreeMap<&TaskId, Mark> =
            self.nodes.keys().map(|k| (k, Mark::Fresh)).collect();
        for root in self.nodes.keys() {
            if marks[root] != Mark::Fresh {
                continue;
            }
            // Iterative DFS over prerequisite edges; `path` mirrors the active stack.
            let mut stack: Vec<(&TaskId, Vec<&TaskId>)> =
                vec![(root, self.prereqs[root].iter().collect())];
            let mut path = vec![root];
            marks.insert(root, Mark::Active);
            while let Some((node, pending)) = stack.last_mut() {
                let node: &TaskId = node;
                let next = pending.pop();
                match next {
                    Some(next) => match marks[next] {
                        Mark::Active => {
                            let start = path.iter().position(|p| *p == next).expect("on path");
                            let mut cycle: Vec<TaskId> =
                                path[start..].iter().map(|t| (*t).clone()).collect();
                            cycle.push(next.clone());
                            return Some(cycle);
                        }
                        Mark::Fresh => {
                            marks.insert(next, Mark::Active);
                            path.push(next);
                            stack.push((next, self.prereqs[next].iter().collect()));
                        }
                        Mark::Done => {}
                    },
                    None => {
                        marks.insert(node, Mark::Done);
                        path.pop();
                        stack.pop();
                    }
                }
            }
        }
        None
    }

    /// Sub-graph restricted to `keep`; returns it plus the dropped edges.
    pub fn restrict(&self, keep: &BTreeSet<TaskId>) -> (DependencyGraph, Vec<(TaskId, TaskId)>) {
        let mut dropped = Vec::new();
        let nodes = self
            .nodes
            .iter()
            .filter(|(k, _)| keep.contains(*k))
            .map(|(k, m)| (k.clone(), *m))
            .collect();
        let prereqs = self
            .prereqs
            .iter()
            .filter(|(k, _)| keep.contains(*k))
            .map(|(k, ps)| {
                let kept = ps
                    .iter()
                    .filter(|p| {
                        let ok = keep.contains(*p);
                        if !ok {
                            dropped.push((k.clone(), (*p).clone()));
                        }
                        ok
                    })
                    .cloned()
                    .collect();
                (k.clone(), kept)
            })
            .collect();
        (DependencyGraph { nodes, prereqs }, dropped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskState {
    Pending,
    Blocked,
    InProgress,
    Completed,
    Failed,
    Skipped,
}

impl TaskState {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Completed | TaskState::Skipped)
    }

    pub fn can_transition_to(self, to: TaskState) -> bool {
        use TaskState::*;
        matches!(
            (self, to),
            (Pending, Blocked)
                | (Pending, InProgress)
                | (Blocked, Pending)
                | (InProgress, Completed)
                | (InProgress, Failed)
                | (InProgress, Pending)
                | (Failed, Pending)
                | (Failed, Skipped)
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskState::Pending => "pending",
            TaskState::Blocked => "blocked",
            TaskState::InProgress => "in_progress",
            TaskState::Completed => "completed",
            TaskState::Failed => "failed",
            TaskState::Skipped => "skipped",
        }
    }

    pub const ALL: [TaskState; 6] = [
        TaskState::Pending,
        TaskState::Blocked,
        TaskState::InProgress,
        TaskState::Completed,
        TaskState::Failed,
        TaskState::Skipped,
    ];
}

impl fmt::Display for TaskState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TaskState {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        TaskState::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatusError {
    #[error("illegal transition {from} -> {to}")]
    IllegalTransition { from: TaskState, to: TaskState },
    #[error("attempt limit of {MAX_ATTEMPTS} reached")]
    AttemptsExhausted,
    #[error("iteration cap of {MAX_ITERATIONS} reached")]
    IterationCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskStatus {
    state: TaskState,
    attempt_count: u32,
    iterations_this_attempt: u32,
}

impl Default for TaskStatus {
    fn default() -> Self {
        Self::new()
    }
}

impl TaskStatus {
    pub fn new() -> Self {
        Self {
            state: TaskState::Pending,
            attempt_count: 0,
            iterations_this_attempt: 0,
        }
    }

    /// Builds a status directly; for tests and fixtures.
    pub fn with(state: TaskState, attempt_count: u32) -> Self {
        Self {
            state,
            attempt_count: attempt_count.min(MAX_ATTEMPTS),
            iterations_this_attempt: 0,
        }
    }

    pub fn state(&self) -> TaskState {
        self.state
    }

    pub fn attempt_count(&self) -> u32 {
        self.attempt_count
    }

    pub fn iterations_this_attempt(&self) -> u32 {
        self.iterations_this_attempt
    }

    pub fn is_terminal(&self) -> bool {
        self.state.is_terminal()
    }

    pub fn retries_left(&self) -> bool {
        self.attempt_count < MAX_ATTEMPTS
    }

    pub fn transition(&mut self, to: TaskState) -> Result<(), StatusError> {
        if !self.state.can_transition_to(to) {
            return Err(StatusError::IllegalTransition {
                from: self.state,
                to,
            });
        }
        self.state = to;
        Ok(())
    }

    /// Pending -> InProgress, opening a new attempt.
    pub fn start_attempt(&mut self) -> Result<(), StatusError> {
        if !self.retries_left() {
            return Err(StatusError::AttemptsExhausted);
        }
        self.transition(TaskState::InProgress)?;
        self.attempt_count += 1;
        self.iterations_this_attempt = 0;
        Ok(())
    }

    /// Counts one CUA iteration against the current attempt.
    pub fn record_iteration(&mut self) -> Result<(), StatusError> {
        if self.state != TaskState::InProgress {
            return Err(StatusError::IllegalTransition {
                from: self.state,
                to: TaskState::InProgress,
            });
        }
        if self.iterations_this_attempt >= MAX_ITERATIONS {
            return Err(StatusError::IterationCap);
        }
        self.iterations_this_attempt += 1;
        Ok(())
    }

    pub fn iteration_cap_reached(&self) -> bool {
        self.iterations_this_attempt >= MAX_ITERATIONS
    }
}

fn schedule_cmp(a: (&TaskId, NodeMeta), b: (&TaskId, NodeMeta)) -> Ordering {
    let deadline = |m: NodeMeta| m.deadline.unwrap_or(SimTime(u64::MAX));
    a.1.priority
        .cmp(&b.1.priority)
        .then(deadline(a.1).cmp(&deadline(b.1)))
        .then(a.0.cmp(b.0))
}

/// Non-terminal tasks whose prerequisites are all completed, ordered by
/// priority, then deadline (none last), then task id.
pub fn ready_tasks(graph: &DependencyGraph, statuses: &BTreeMap<TaskId, TaskStatus>) -> Vec<TaskId> {
    let completed = |t: &TaskId| {
        statuses
            .get(t)
            .is_some_and(|s| s.state() == TaskState::Completed)
    };
    let mut ready: Vec<(&TaskId, NodeMeta)> = graph
        .nodes
        .iter()
        .filter(|(t, _)| statuses.get(*t).is_some_and(|s| !s.is_terminal()))
        .filter(|(t, _)| graph.prerequisites(t).all(completed))
        .map(|(t, m)| (t, *m))
        .collect();
    ready.sort_by(|a, b| schedule_cmp(*a, *b));
    ready.into_iter().map(|(t, _)| t.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec(id: &str, priority: u32) -> TaskSpec {
        TaskSpec {
            task_id: id.into(),
            app_id: "excel".into(),
            description: format!("task {id}"),
            priority,
            state_footprint: 10,
            step_count: 1,
            deadline: None,
            deliverable_id: format!("doc-{id}").into(),
            edit_script: vec![EditStep::new("k", id)],
        }
    }

    fn edge(t: &str, p: &str) -> (TaskId, TaskId) {
        (t.into(), p.into())
    }

    fn statuses(pairs: &[(&str, TaskState)]) -> BTreeMap<TaskId, TaskStatus> {
        pairs
            .iter()
            .map(|(t, s)| (TaskId::from(*t), TaskStatus::with(*s, 0)))
            .collect()
    }

    #[test]
    fn chain_topo_order() {
        let specs = [spec("C", 1), spec("A", 1), spec("B", 1)];
        let g = build_graph(&specs, &[edge("B", "A"), edge("C", "B")]).unwrap();
        assert_eq!(g.topo_order(), vec!["A".into(), "B".into(), "C".into()] as Vec<TaskId>);
        assert_eq!(g.nodes().cloned().collect::<Vec<_>>(), g.topo_order());
    }

    #[test]
    fn single_node() {
        let g = build_graph(&[spec("A", 1)], &[]).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.topo_order(), vec![TaskId::from("A")]);
    }

    #[test]
    fn two_cycle_rejected() {
        let err = build_graph(&[spec("A", 1), spec("B", 1)], &[edge("A", "B"), edge("B", "A")])
            .unwrap_err();
        match err {
            GraphError::CycleDetected(c) => {
                assert_eq!(c.first(), c.last());
                assert_eq!(c.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn self_loop_and_unknown() {
        assert!(matches!(
            build_graph(&[spec("A", 1)], &[edge("A", "A")]),
            Err(GraphError::CycleDetected(_))
        ));
        assert_eq!(
            build_graph(&[spec("A", 1)], &[edge("A", "Z")]),
            Err(GraphError::UnknownTask("Z".into()))
        );
        assert_eq!(
            build_graph(&[spec("A", 1), spec("A", 2)], &[]),
            Err(GraphError::DuplicateTask("A".into()))
        );
    }

    #[test]
    fn ready_chain() {
        let specs = [spec("A", 1), spec("B", 1), spec("C", 1)];
        let g = build_graph(&specs, &[edge("B", "A"), edge("C", "B")]).unwrap();
        let st = statuses(&[
            ("A", TaskState::Completed),
            ("B", TaskState::Pending),
            ("C", TaskState::Pending),
        ]);
        assert_eq!(ready_tasks(&g, &st), vec![TaskId::from("B")]);
        assert!(ready_tasks(&DependencyGraph::default(), &BTreeMap::new()).is_empty());
    }

    #[test]
    fn ready_diamond_ties_by_id() {
        let specs = [spec("A", 1), spec("C", 2), spec("B", 2), spec("D", 1)];
        let g = build_graph(
            &specs,
            &[edge("B", "A"), edge("C", "A"), edge("D", "B"), edge("D", "C")],
        )
        .unwrap();
        let st = statuses(&[
            ("A", TaskState::Completed),
            ("B", TaskState::Pending),
            ("C", TaskState::Blocked),
            ("D", TaskState::Pending),
        ]);
        assert_eq!(ready_tasks(&g, &st), vec![TaskId::from("B"), "C".into()]);
    }

    #[test]
    fn ready_orders_priority_then_deadline() {
        let mut a = spec("A", 2);
        let mut b = spec("B", 2);
        let c = spec("C", 1);
        a.deadline = Some(SimTime(500));
        b.deadline = Some(SimTime(100));
        let g = build_graph(&[a, b, c], &[]).unwrap();
        let st = statuses(&[
            ("A", TaskState::Pending),
            ("B", TaskState::Failed),
            ("C", TaskState::Pending),
        ]);
        assert_eq!(
            ready_tasks(&g, &st),
            vec![TaskId::from("C"), "B".into(), "A".into()]
        );
    }

    #[test]
    fn status_transitions() {
        let mut s = TaskStatus::new();
        assert!(s.transition(TaskState::Completed).is_err());
        s.start_attempt().unwrap();
        assert_eq!(s.attempt_count(), 1);
        for _ in 0..MAX_ITERATIONS {
            s.record_iteration().unwrap();
        }
        assert_eq!(s.record_iteration(), Err(StatusError::IterationCap));
        s.transition(TaskState::Failed).unwrap();
        s.transition(TaskState::Pending).unwrap();
        s.start_attempt().unwrap();
        s.transition(TaskState::Failed).unwrap();
        s.transition(TaskState::Pending).unwrap();
        s.start_attempt().unwrap();
        s.transition(TaskState::Failed).unwrap();
        s.transition(TaskState::Pending).unwrap();
        assert_eq!(s.start_attempt(), Err(StatusError::AttemptsExhausted));
    }

    #[test]
    fn validate_invariants() {
        let mut s = spec("A", 1);
        assert!(s.validate().is_ok());
        s.step_count = 2;
        assert!(matches!(s.validate(), Err(TaskError::ScriptLength { .. })));
        s.step_count = 0;
        assert!(matches!(s.validate(), Err(TaskError::NoSteps(_))));
        let mut s = spec("A", 0);
        assert!(matches!(s.validate(), Err(TaskError::BadPriority(_))));
        s.priority = 1;
        s.state_footprint = 0;
        assert!(matches!(s.validate(), Err(TaskError::NoFootprint(_))));
    }
}
