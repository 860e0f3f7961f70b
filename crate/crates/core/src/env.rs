//! Simulated office applications holding flat key/value documents.
//!
//! Opening a document focuses it immediately but the UI only becomes ready
//! one tick later; editing in the same tick as the open fails with
//! [`ActionErrorKind::NotReady`].

use std::collections::BTreeMap;
use std::fmt;

use crate::ids::{AgentId, AppId, ArtifactId, TaskId};
use crate::task::TaskSpec;
use crate::time::SimTime;

/// Flat document: sorted key/value text fields.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Document(BTreeMap<String, String>);

impl Document {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.0.insert(key.into(), value.into());
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Document {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Document(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operation {
    Open(ArtifactId),
    Edit { key: String, value: String },
    /// Read-only look at the current screen; used for exploratory probing.
    Inspect,
}

impl Operation {
    pub fn name(&self) -> &'static str {
        match self {
            Operation::Open(_) => "open",
            Operation::Edit { .. } => "edit",
            Operation::Inspect => "inspect",
        }
    }

    pub fn args(&self) -> Vec<&str> {
        match self {
            Operation::Open(a) => vec![a.as_str()],
            Operation::Edit { key, value } => vec![key, value],
            Operation::Inspect => vec![],
        }
    }

    pub fn is_mutation(&self) -> bool {
        matches!(self, Operation::Edit { .. })
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operation::Open(a) => write!(f, "open({a})"),
            Operation::Edit { key, value } => write!(f, "edit({key}, {value:?})"),
            Operation::Inspect => f.write_str("inspect()"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionErrorKind {
    NotReady,
    NoFocus,
    UnknownArtifact,
    UnknownApp,
    /// Failure injected by a test or alternate CUA backend.
    Injected,
}

impl ActionErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ActionErrorKind::NotReady => "not_ready",
            ActionErrorKind::NoFocus => "no_focus",
            ActionErrorKind::UnknownArtifact => "unknown_artifact",
            ActionErrorKind::UnknownApp => "unknown_app",
            ActionErrorKind::Injected => "injected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Error(ActionErrorKind),
}

impl Outcome {
    pub fn is_ok(self) -> bool {
        self == Outcome::Ok
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Ok => f.write_str("ok"),
            Outcome::Error(kind) => write!(f, "error:{}", kind.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionRecord {
    pub actor_id: AgentId,
    pub task_id: TaskId,
    pub app_id: AppId,
    pub operation: Operation,
    pub at: SimTime,
    pub outcome: Outcome,
}

impl ActionRecord {
    /// A not-yet-applied action; `outcome` is filled in by [`SimApplication::apply`].
    pub fn new(
        actor_id: AgentId,
        task_id: TaskId,
        app_id: AppId,
        operation: Operation,
        at: SimTime,
    ) -> Self {
        Self {
            actor_id,
            task_id,
            app_id,
            operation,
            at,
            outcome: Outcome::Ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimApplication {
    pub app_id: AppId,
    pub artifacts: BTreeMap<ArtifactId, Document>,
    pub focus: Option<ArtifactId>,
    pub ready: bool,
    ready_at: Option<SimTime>,
}

impl SimApplication {
    pub fn new(app_id: AppId) -> Self {
        Self {
            app_id,
            artifacts: BTreeMap::new(),
            focus: None,
            ready: false,
            ready_at: None,
        }
    }

    pub fn insert_artifact(&mut self, id: ArtifactId, doc: Document) {
        self.artifacts.insert(id, doc);
    }

    pub fn remove_artifact(&mut self, id: &ArtifactId) -> Option<Document> {
        if self.focus.as_ref() == Some(id) {
            self.focus = None;
            self.ready = false;
            self.ready_at = None;
        }
        self.artifacts.remove(id)
    }

    pub fn artifact(&self, id: &ArtifactId) -> Option<&Document> {
        self.artifacts.get(id)
    }

    fn settle(&mut self, now: SimTime) {
        if let Some(at) = self.ready_at {
            if now >= at {
                self.ready = true;
                self.ready_at = None;
            }
        }
    }

    /// Applies one action; state changes are a pure function of (state, action).
    pub fn apply(&mut self, action: &ActionRecord) -> Outcome {
        if action.app_id != self.app_id {
            return Outcome::Error(ActionErrorKind::UnknownApp);
        }
        self.settle(action.at);
        match &action.operation {
            Operation::Open(id) => {
                if !self.artifacts.contains_key(id) {
                    return Outcome::Error(ActionErrorKind::UnknownArtifact);
                }
                self.focus = Some(id.clone());
                self.ready = false;
                self.ready_at = Some(action.at + 1);
                Outcome::Ok
            }
            Operation::Edit { key, value } => {
                let Some(focus) = self.focus.clone() else {
                    return Outcome::Error(ActionErrorKind::NoFocus);
                };
                if !self.ready {
                    return Outcome::Error(ActionErrorKind::NotReady);
                }
                match self.artifacts.get_mut(&focus) {
                    Some(doc) => {
                        doc.set(key.clone(), value.clone());
                        Outcome::Ok
                    }
                    None => Outcome::Error(ActionErrorKind::UnknownArtifact),
                }
            }
            Operation::Inspect => Outcome::Ok,
        }
    }

    /// Short state digest used in summaries and demonstration contexts.
    pub fn digest(&self) -> String {
        match &self.focus {
            Some(f) => format!(
                "focus={f} ready={}",
                if self.ready { "yes" } else { "no" }
            ),
            None => "focus=none".to_owned(),
        }
    }
}

/// All applications one agent can reach.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Workspace {
    apps: BTreeMap<AppId, SimApplication>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Workspace holding a pristine (empty) deliverable for every task.
    pub fn pristine_for(tasks: &[TaskSpec]) -> Self {
        let mut ws = Workspace::new();
        for t in tasks {
            ws.app_mut(&t.app_id)
                .insert_artifact(t.deliverable_id.clone(), Document::new());
        }
        ws
    }

    pub fn app(&self, id: &AppId) -> Option<&SimApplication> {
        self.apps.get(id)
    }

    /// Returns the application, creating it empty if absent.
    pub fn app_mut(&mut self, id: &AppId) -> &mut SimApplication {
        self.apps
            .entry(id.clone())
            .or_insert_with(|| SimApplication::new(id.clone()))
    }

    pub fn apps(&self) -> impl Iterator<Item = &SimApplication> {
        self.apps.values()
    }

    pub fn artifact(&self, app: &AppId, id: &ArtifactId) -> Option<&Document> {
        self.apps.get(app).and_then(|a| a.artifact(id))
    }

    /// Applies `action` and records its outcome on it.
    pub fn apply(&mut self, action: &mut ActionRecord) -> Outcome {
        let outcome = match self.apps.get_mut(&action.app_id) {
            Some(app) => app.apply(action),
            None => Outcome::Error(ActionErrorKind::UnknownApp),
        };
        action.outcome = outcome;
        outcome
    }

    pub fn digest(&self) -> BTreeMap<String, String> {
        self.apps
            .iter()
            .map(|(id, a)| (id.to_string(), a.digest()))
            .collect()
    }
}
