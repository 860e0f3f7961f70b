//! Task-suite and golden-artifact files.
//!
//! A suite file holds one `task_id=` record per task followed by one
//! `dep=<task>:<prereq>` record per dependency edge:
//!
//! ```text
//! task_id=X01 app_id=excel description=... priority=1 footprint=140 steps=2 deliverable=xl-01 edit=B1:North edit=B2:42
//! dep=M01:X01
//! ```
//!
//! `deadline=<minutes>` is present only when the task has one. Golden files
//! hold `artifact=<id> app_id=<app> kv=<key>:<value>...` records. Rendering a
//! parsed canonical file reproduces it byte for byte.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

use crate::env::Document;
use crate::ids::{AppId, ArtifactId, TaskId};
use crate::judge::golden_for;
use crate::record::{parse_lines, render_lines, Record, RecordError};
use crate::task::{build_graph, DependencyGraph, EditStep, GraphError, TaskError, TaskSpec};
use crate::time::SimTime;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("suite is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TaskSuite {
    pub tasks: Vec<TaskSpec>,
    /// `(task, prerequisite)` pairs.
    pub edges: Vec<(TaskId, TaskId)>,
}

fn split_pair<'a>(record: &Record, field: &str, raw: &'a str) -> Result<(&'a str, &'a str), RecordError> {
    raw.split_once(':').ok_or_else(|| record.invalid(field, raw))
}

fn task_to_record(t: &TaskSpec) -> Record {
    let mut r = Record::new()
        .with("task_id", t.task_id.as_str())
        .with("app_id", t.app_id.as_str())
        .with("description", &t.description)
        .with("priority", t.priority.to_string())
        .with("footprint", t.state_footprint.to_string())
        .with("steps", t.step_count.to_string());
    if let Some(d) = t.deadline {
        r.push("deadline", d.minutes().to_string());
    }
    r.push("deliverable", t.deliverable_id.as_str());
    for e in &t.edit_script {
        debug_assert!(!e.key.contains(':'));
        r.push("edit", format!("{}:{}", e.key, e.value));
    }
    r
}

fn task_from_record(r: &Record) -> Result<TaskSpec, SuiteError> {
    let deadline = match r.get("deadline") {
        Some(raw) => Some(SimTime(raw.parse().map_err(|_| r.invalid("deadline", raw))?)),
        None => None,
    };
    let edit_script = r
        .get_all("edit")
        .map(|raw| split_pair(r, "edit", raw).map(|(k, v)| EditStep::new(k, v)))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = TaskSpec {
        task_id: TaskId::new(r.require("task_id")?),
        app_id: AppId::new(r.require("app_id")?),
        description: r.require("description")?.to_owned(),
        priority: r.parse_field("priority")?,
        state_footprint: r.parse_field("footprint")?,
        step_count: r.parse_field("steps")?,
        deadline,
        deliverable_id: ArtifactId::new(r.require("deliverable")?),
        edit_script,
    };
    spec.validate()?;
    Ok(spec)
}

impl TaskSuite {
    pub fn parse(text: &str) -> Result<Self, SuiteError> {
        let mut suite = TaskSuite::default();
        for r in parse_lines(text)? {
            match r.first_key() {
                Some("task_id") => suite.tasks.push(task_from_record(&r)?),
                Some("dep") => {
                    let raw = r.require("dep")?;
                    let (t, p) = split_pair(&r, "dep", raw)?;
                    suite.edges.push((t.into(), p.into()));
                }
                _ => return Err(RecordError::UnknownRecord { line: r.line }.into()),
            }
        }
        Ok(suite)
    }

    pub fn render(&self) -> String {
        let mut records: Vec<Record> = self.tasks.iter().map(task_to_record).collect();
        records.extend(
            self.edges
                .iter()
                .map(|(t, p)| Record::new().with("dep", format!("{t}:{p}"))),
        );
        render_lines(&records)
    }

    pub fn load(path: &Path) -> Result<Self, SuiteError> {
        let text = std::fs::read_to_string(path).map_err(|source| SuiteError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let suite = Self::parse(&text)?;
        if suite.tasks.is_empty() {
            return Err(SuiteError::Empty);
        }
        Ok(suite)
    }

    pub fn graph(&self) -> Result<DependencyGraph, GraphError> {
        build_graph(&self.tasks, &self.edges)
    }

    pub fn task(&self, id: &TaskId) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| &t.task_id == id)
    }

    /// Application ids in sorted order.
    pub fn apps(&self) -> Vec<AppId> {
        self.tasks
            .iter()
            .map(|t| t.app_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Golden deliverables for every task, in task order.
    pub fn goldens(&self) -> GoldenSet {
        GoldenSet {
            artifacts: self
                .tasks
                .iter()
                .map(|t| GoldenArtifact {
                    artifact_id: t.deliverable_id.clone(),
                    app_id: t.app_id.clone(),
                    document: golden_for(t),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldenArtifact {
    pub artifact_id: ArtifactId,
    pub app_id: AppId,
    pub document: Document,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GoldenSet {
    pub artifacts: Vec<GoldenArtifact>,
}

pub(crate) fn document_to_record(head: (&str, &str), app: &str, doc: &Document) -> Record {
    let mut r = Record::new().with(head.0, head.1).with("app_id", app);
    for (k, v) in doc.iter() {
        r.push("kv", format!("{k}:{v}"));
    }
    r
}

pub(crate) fn document_from_record(r: &Record) -> Result<Document, RecordError> {
    r.get_all("kv")
        .map(|raw| split_pair(r, "kv", raw))
        .collect::<Result<Document, _>>()
}

impl GoldenSet {
    pub fn get(&self, id: &ArtifactId) -> Option<&GoldenArtifact> {
        self.artifacts.iter().find(|g| &g.artifact_id == id)
    }

    pub fn parse(text: &str) -> Result<Self, SuiteError> {
        let mut artifacts = Vec::new();
        for r in parse_lines(text)? {
            if r.first_key() != Some("artifact") {
                return Err(RecordError::UnknownRecord { line: r.line }.into());
            }
            artifacts.push(GoldenArtifact {
                artifact_id: r.require("artifact")?.into(),
                app_id: r.require("app_id")?.into(),
                document: document_from_record(&r)?,
            });
        }
        Ok(GoldenSet { artifacts })
    }

    pub fn render(&self) -> String {
        let records: Vec<Record> = self
            .artifacts
            .iter()
            .map(|g| {
                document_to_record(
                    ("artifact", g.artifact_id.as_str()),
                    g.app_id.as_str(),
                    &g.document,
                )
            })
            .collect();
        render_lines(&records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE: &str = "task_id=A\tapp_id=excel\tdescription=Fill Q4 sheet\tpriority=1\tfootprint=12\tsteps=2\tdeliverable=d-a\tedit=B1:North\tedit=B2:4\\t2\n\
task_id=B\tapp_id=word\tdescription=Memo: summary\tpriority=2\tfootprint=9\tsteps=1\tdeadline=2880\tdeliverable=d-b\tedit=title:Q4: wrap-up\n\
dep=B:A\n";

    #[test]
    fn parses_and_round_trips_bytes() {
        let suite = TaskSuite::parse(SAMPLE).unwrap();
        assert_eq!(suite.tasks.len(), 2);
        assert_eq!(suite.tasks[0].edit_script[1].value, "4\t2");
        assert_eq!(suite.tasks[1].edit_script[0].value, "Q4: wrap-up");
        assert_eq!(suite.tasks[1].deadline, Some(SimTime(2880)));
        assert_eq!(suite.edges, vec![("B".into(), "A".into())]);
        assert_eq!(suite.render(), SAMPLE);
        assert_eq!(suite.graph().unwrap().topo_order(), vec![TaskId::from("A"), "B".into()]);
    }

    #[test]
    fn golden_file_round_trip() {
        let suite = TaskSuite::parse(SAMPLE).unwrap();
        let goldens = suite.goldens();
        let text = goldens.render();
        assert!(text.starts_with("artifact=d-a\tapp_id=excel\tkv=B1:North\tkv=B2:4\\t2\n"));
        assert_eq!(GoldenSet::parse(&text).unwrap(), goldens);
        assert_eq!(GoldenSet::parse(&text).unwrap().render(), text);
    }

    #[test]
    fn rejects_inconsistent_task() {
        let bad = "task_id=A\tapp_id=excel\tdescription=x\tpriority=1\tfootprint=1\tsteps=3\tdeliverable=d\tedit=k:v\n";
        assert!(matches!(TaskSuite::parse(bad), Err(SuiteError::Task(_))));
        assert!(matches!(TaskSuite::parse("bogus=1\n"), Err(SuiteError::Record(_))));
    }

    fn arb_task() -> impl Strategy<Value = TaskSpec> {
        (
            "[A-Z][0-9]{1,3}",
            "[a-z]{2,6}",
            "\\PC{0,30}",
            1u32..6,
            1u32..400,
            proptest::option::of(0u64..100_000),
            proptest::collection::vec(("[a-z_0-9]{1,6}", "\\PC{0,12}"), 1..6),
        )
            .prop_map(|(id, app, description, priority, footprint, deadline, edits)| TaskSpec {
                task_id: id.as_str().into(),
                app_id: app.into(),
                description,
                priority,
                state_footprint: footprint,
                step_count: edits.len() as u32,
                deadline: deadline.map(SimTime),
                deliverable_id: format!("d-{id}").into(),
                edit_script: edits.into_iter().map(|(k, v)| EditStep::new(k, v)).collect(),
            })
    }

    proptest! {
        #[test]
        fn render_parse_is_identity(tasks in proptest::collection::vec(arb_task(), 1..6)) {
            let edges = if tasks.len() > 1 {
                vec![(tasks[1].task_id.clone(), tasks[0].task_id.clone())]
            } else {
                vec![]
            };
            let suite = TaskSuite { tasks, edges };
            let text = suite.render();
            let back = TaskSuite::parse(&text).unwrap();
            prop_assert_eq!(&back, &suite);
            prop_assert_eq!(back.render(), text);
        }
    }
}
