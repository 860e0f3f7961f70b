//! Experiential learning: successful trajectories are distilled into
//! minimal demonstrations, indexed per application, and retrieved to let the
//! executing agent skip exploratory probing on near-duplicate tasks.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::env::{ActionRecord, Operation, Outcome, Workspace};
use crate::ids::{AgentId, AppId, ArtifactId, TaskId};
use crate::memory::{embed, Embedding, MemoryError, MemoryKind, MemoryStore, NewRecord};
use crate::record::{parse_lines, render_lines, Record, RecordError};
use crate::time::SimTime;

pub const DEFAULT_DEMO_K: usize = 3;
pub const DEFAULT_THRESHOLD: f64 = 0.8;
/// Exploratory inspect actions an attempt makes when no demo guides it.
pub const DEFAULT_PROBE_STEPS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub task_id: TaskId,
    pub app_id: AppId,
    pub description: String,
    pub initial_state: String,
    pub actions: Vec<ActionRecord>,
    /// Task reached Completed and its artifact passed the judge.
    pub success: bool,
}

/// Text a demo is matched on: the task description plus its starting state.
pub fn context_digest(app: &AppId, description: &str, initial_state: &str) -> String {
    format!("{app}: {description} ({initial_state})")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalDemo {
    pub demo_id: String,
    pub app_id: AppId,
    pub source_task: TaskId,
    pub digest: String,
    pub actions: Vec<Operation>,
    embedding: Embedding,
}

impl CanonicalDemo {
    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }
}

#[derive(Debug, Error)]
pub enum XpError {
    #[error("trajectory for {0} was not successful")]
    NotSuccessful(TaskId),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("demonstration record {record_id}: {source}")]
    BadDemo {
        record_id: String,
        source: RecordError,
    },
}

/// Drops failed and read-only actions and collapses consecutive opens of
/// the same artifact. The demo id is left empty until indexed.
pub fn distill(t: &Trajectory) -> Result<CanonicalDemo, XpError> {
    if !t.success {
        return Err(XpError::NotSuccessful(t.task_id.clone()));
    }
    let mut actions: Vec<Operation> = Vec::new();
    for a in &t.actions {
        if a.outcome != Outcome::Ok || a.operation == Operation::Inspect {
            continue;
        }
        if let (Operation::Open(x), Some(Operation::Open(y))) = (&a.operation, actions.last()) {
            if x == y {
                continue;
            }
        }
        actions.push(a.operation.clone());
    }
    let digest = context_digest(&t.app_id, &t.description, &t.initial_state);
    Ok(CanonicalDemo {
        demo_id: String::new(),
        app_id: t.app_id.clone(),
        source_task: t.task_id.clone(),
        embedding: embed(&digest),
        digest,
        actions,
    })
}

/// Demos partitioned by application.
#[derive(Debug, Clone, Default)]
pub struct DemoIndex {
    partitions: BTreeMap<AppId, Vec<CanonicalDemo>>,
    next: u64,
}

impl DemoIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.partitions.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn partition(&self, app: &AppId) -> &[CanonicalDemo] {
        self.partitions.get(app).map_or(&[], Vec::as_slice)
    }

    pub fn apps(&self) -> impl Iterator<Item = &AppId> {
        self.partitions.keys()
    }

    /// Adds a demo to its app's partition, assigning an id if it has none.
    pub fn insert(&mut self, mut demo: CanonicalDemo) -> String {
        if demo.demo_id.is_empty() {
            self.next += 1;
            demo.demo_id = format!("demo{:05}", self.next);
        }
        let id = demo.demo_id.clone();
        self.partitions.entry(demo.app_id.clone()).or_default().push(demo);
        id
    }

    /// Indexes the demo and persists it as a Demonstration memory record.
    pub fn insert_persisted(
        &mut self,
        demo: CanonicalDemo,
        store: &mut MemoryStore,
        now: SimTime,
    ) -> Result<String, XpError> {
        let id = self.insert(demo);
        let demo = self.partitions.values().flatten().find(|d| d.demo_id == id).expect("just inserted");
        let rec = NewRecord::new(MemoryKind::Demonstration, encode_demo(demo))
            .important(true)
            .task(demo.source_task.clone())
            .app(demo.app_id.clone());
        store.insert(rec, now)?;
        Ok(id)
    }

    /// Rebuilds the index from a store's Demonstration records.
    pub fn from_memory(store: &MemoryStore) -> Result<Self, XpError> {
        let mut index = Self::new();
        for r in store.records().filter(|r| r.kind() == MemoryKind::Demonstration) {
            let demo = decode_demo(&r.content).map_err(|source| XpError::BadDemo {
                record_id: r.record_id.clone(),
                source,
            })?;
            if let Some(n) = demo.demo_id.strip_prefix("demo").and_then(|n| n.parse().ok()) {
                index.next = index.next.max(n);
            }
            index.insert(demo);
        }
        Ok(index)
    }
}

fn encode_demo(d: &CanonicalDemo) -> String {
    let mut records = vec![Record::new()
        .with("demo", &d.demo_id)
        .with("app_id", d.app_id.as_str())
        .with("source", d.source_task.as_str())
        .with("digest", &d.digest)];
    for op in &d.actions {
        records.push(match op {
            Operation::Open(a) => Record::new().with("op", "open").with("artifact", a.as_str()),
            Operation::Edit { key, value } => Record::new().with("op", "edit").with("key", key).with("value", value),
            Operation::Inspect => Record::new().with("op", "inspect"),
        });
    }
    render_lines(&records)
}

fn decode_demo(text: &str) -> Result<CanonicalDemo, RecordError> {
    let records = parse_lines(text)?;
    let head = records.first().ok_or(RecordError::MissingField { line: 1, field: "demo" })?;
    let digest = head.require("digest")?.to_owned();
    let mut actions = Vec::new();
    for r in &records[1..] {
        actions.push(match r.require("op")? {
            "open" => Operation::Open(ArtifactId::from(r.require("artifact")?)),
            "edit" => Operation::Edit {
                key: r.require("key")?.to_owned(),
                value: r.require("value")?.to_owned(),
            },
            "inspect" => Operation::Inspect,
            other => return Err(r.invalid("op", other)),
        });
    }
    Ok(CanonicalDemo {
        demo_id: head.require("demo")?.to_owned(),
        app_id: head.require("app_id")?.into(),
        source_task: head.require("source")?.into(),
        embedding: embed(&digest),
        digest,
        actions,
    })
}

/// Top-`k` demos of `app` by cosine to `query`; ties go to the lower id.
pub fn retrieve_demos<'a>(index: &'a DemoIndex, query: &str, app: &AppId, k: usize) -> Vec<(f64, &'a CanonicalDemo)> {
    let q = embed(query);
    let mut hits: Vec<(f64, &CanonicalDemo)> = index
        .partition(app)
        .iter()
        .filter_map(|d| d.embedding.cosine(&q).map(|c| (c, d)))
        .collect();
    hits.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.demo_id.cmp(&b.1.demo_id)));
    hits.truncate(k);
    hits
}

/// Execution-layer guidance. Plans are never touched by injection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExecutionHints {
    pub demo_id: Option<String>,
    pub similarity: f64,
}

impl ExecutionHints {
    /// A matching demo removes the need for exploratory probes.
    pub fn skips_probes(&self) -> bool {
        self.demo_id.is_some()
    }
}

/// Adopts the best demo whose similarity reaches `threshold`; returns
/// whether one was injected.
pub fn inject(hints: &mut ExecutionHints, demos: &[(f64, &CanonicalDemo)], threshold: f64) -> bool {
    *hints = ExecutionHints::default();
    match demos.first() {
        Some((sim, d)) if *sim >= threshold => {
            hints.demo_id = Some(d.demo_id.clone());
            hints.similarity = *sim;
            true
        }
        _ => false,
    }
}

/// Replays a demo's actions against a workspace, one tick apart.
pub fn replay_demo(
    demo: &CanonicalDemo,
    ws: &mut Workspace,
    actor: &AgentId,
    start: SimTime,
) -> Vec<ActionRecord> {
    demo.actions
        .iter()
        .enumerate()
        .map(|(i, op)| {
            let mut a = ActionRecord::new(
                actor.clone(),
                demo.source_task.clone(),
                demo.app_id.clone(),
                op.clone(),
                start + i as u64,
            );
            ws.apply(&mut a);
            a
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ActionErrorKind;
    use crate::judge::{golden_for, judge_artifact};
    use crate::task::{EditStep, TaskSpec};

    fn act(op: Operation, outcome: Outcome) -> ActionRecord {
        let mut a = ActionRecord::new("e1".into(), "T1".into(), "excel".into(), op, SimTime(0));
        a.outcome = outcome;
        a
    }

    fn edit(k: &str, v: &str) -> Operation {
        Operation::Edit {
            key: k.into(),
            value: v.into(),
        }
    }

    fn traj(actions: Vec<ActionRecord>, success: bool) -> Trajectory {
        Trajectory {
            task_id: "T1".into(),
            app_id: "excel".into(),
            description: "fill regional totals".into(),
            initial_state: "doc keys=0".into(),
            actions,
            success,
        }
    }

    #[test]
    fn distillation_rules() {
        let open = Operation::Open("d1".into());
        let t = traj(
            vec![
                act(open.clone(), Outcome::Ok),
                act(open.clone(), Outcome::Ok),
                act(edit("a", "1"), Outcome::Ok),
                act(edit("b", "2"), Outcome::Error(ActionErrorKind::NotReady)),
                act(Operation::Inspect, Outcome::Ok),
                act(edit("b", "2"), Outcome::Ok),
            ],
            true,
        );
        let d = distill(&t).unwrap();
        assert_eq!(d.actions, vec![open.clone(), edit("a", "1"), edit("b", "2")]);
        assert!(d.actions.len() <= t.actions.len());
        let again = traj(d.actions.iter().map(|o| act(o.clone(), Outcome::Ok)).collect(), true);
        assert_eq!(distill(&again).unwrap().actions, d.actions);
        assert!(matches!(distill(&traj(vec![], false)), Err(XpError::NotSuccessful(_))));
    }

    fn demo(app: &str, desc: &str) -> CanonicalDemo {
        let mut t = traj(vec![act(Operation::Open("d1".into()), Outcome::Ok)], true);
        t.app_id = app.into();
        t.description = desc.into();
        distill(&t).unwrap()
    }

    #[test]
    fn retrieval_is_app_scoped() {
        let mut idx = DemoIndex::new();
        idx.insert(demo("excel", "fill regional totals"));
        idx.insert(demo("word", "draft the memo"));
        idx.insert(demo("word", "fill regional totals"));
        let hits = retrieve_demos(&idx, "word: draft the memo (doc keys=0)", &"word".into(), 3);
        assert_eq!(hits.len(), 2);
        assert!(hits.iter().all(|(_, d)| d.app_id.as_str() == "word"));
        assert!((hits[0].0 - 1.0).abs() < 1e-12);
        assert!(retrieve_demos(&idx, "x", &"ppt".into(), 3).is_empty());
        assert_eq!(retrieve_demos(&idx, "fill", &"word".into(), 1).len(), 1);
    }

    #[test]
    fn injection_threshold() {
        let mut idx = DemoIndex::new();
        idx.insert(demo("excel", "fill regional totals"));
        let mut hints = ExecutionHints::default();
        let exact = retrieve_demos(&idx, "excel: fill regional totals (doc keys=0)", &"excel".into(), 3);
        assert!(inject(&mut hints, &exact, DEFAULT_THRESHOLD));
        assert!(hints.skips_probes());
        let far = retrieve_demos(&idx, "excel: compile bug list", &"excel".into(), 3);
        assert!(far[0].0 < DEFAULT_THRESHOLD);
        assert!(!inject(&mut hints, &far, DEFAULT_THRESHOLD));
        assert_eq!(hints, ExecutionHints::default());
    }

    #[test]
    fn replayed_demo_reproduces_golden() {
        let task = TaskSpec {
            task_id: "T1".into(),
            app_id: "excel".into(),
            description: "fill".into(),
            priority: 1,
            state_footprint: 5,
            step_count: 3,
            deadline: None,
            deliverable_id: "d1".into(),
            edit_script: vec![EditStep::new("a", "1"), EditStep::new("b", "2"), EditStep::new("a", "3")],
        };
        let mut ws = Workspace::pristine_for(std::slice::from_ref(&task));
        let mut actions = vec![act(Operation::Open("d1".into()), Outcome::Ok)];
        actions.extend(task.edit_script.iter().map(|e| act(edit(&e.key, &e.value), Outcome::Ok)));
        let d = distill(&traj(actions, true)).unwrap();
        let log = replay_demo(&d, &mut ws, &"e1".into(), SimTime(100));
        assert!(log.iter().all(|a| a.outcome.is_ok()));
        let got = ws.artifact(&"excel".into(), &"d1".into()).unwrap();
        assert!(judge_artifact(got, &golden_for(&task)));
    }

    #[test]
    fn persistence_round_trip() {
        let mut store = MemoryStore::new();
        let mut idx = DemoIndex::new();
        let mut d = demo("excel", "fill\tregional\ntotals");
        d.actions.push(edit("k:1", "v\t2"));
        idx.insert_persisted(d, &mut store, SimTime(5)).unwrap();
        idx.insert_persisted(demo("word", "memo"), &mut store, SimTime(6)).unwrap();
        let replayed = MemoryStore::replay(store.log_text()).unwrap();
        let back = DemoIndex::from_memory(&replayed).unwrap();
        for app in ["excel", "word"] {
            assert_eq!(back.partition(&app.into()), idx.partition(&app.into()));
        }
        let mut back = back;
        assert_eq!(back.insert(demo("ppt", "deck")), "demo00003");
    }
}
