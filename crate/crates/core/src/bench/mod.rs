//! Session building, policy-by-load matrices and the judge fixture.

mod fixture;
mod matrix;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ids::{AppId, TaskId};
use crate::planning::{parse_identity, Identity, ObjectiveTemplate};
use crate::runtime::Session;
use crate::suite::TaskSuite;
use crate::task::{build_graph, TaskSpec};

pub use fixture::{evaluate, judge_fixture, judge_fixture_eval, parse_fixture, FixtureCase, FixtureReport, JUDGE_FIXTURE};
pub use matrix::CellMean;
pub use matrix::{run_cell, run_matrix, CellKey, MatrixReport, MatrixSpec, RunReport};
pub use synthetic::synthetic_suite;

pub const LOADS: [u32; 4] = [25, 50, 75, 100];

/// The default employee: every application plus research and the
/// cognitive tools, working 8 to 18.
pub const DEFAULT_IDENTITY: &str = include_str!("../../fixtures/identity.txt");
/// The synthetic suite as shipped on disk.
pub const SUITE46: &str = include_str!("../../fixtures/suite46.txt");
/// Small knowledge base for the research sub-agent.
pub const DEFAULT_KB: &str = include_str!("../../fixtures/kb.txt");

pub fn default_identity() -> (Identity, Vec<ObjectiveTemplate>) {
    parse_identity(DEFAULT_IDENTITY).expect("shipped identity parses")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BenchError {
    #[error("unknown application {0}")]
    UnknownApp(AppId),
    #[error("load must be one of 25, 50, 75, 100; got {0}")]
    BadLoad(u32),
    #[error("suite is empty")]
    EmptySuite,
    #[error("judge fixture missing: {0}")]
    FixtureMissing(String),
    #[error("{0}")]
    Graph(String),
}

/// How a run's task subset is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Grouping {
    /// Stratified sample at a load percentage.
    Load(u32),
    /// Every task of one application.
    App(AppId),
}

impl std::fmt::Display for Grouping {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Grouping::Load(pct) => write!(f, "load{pct}"),
            Grouping::App(app) => write!(f, "app-{app}"),
        }
    }
}

/// Per-application sample sizes for a load level.
///
/// Each partition gets `round(pct * n / 100)` (half rounds up); the largest
/// partition then absorbs the difference to the overall rounded target.
pub fn stratified_counts(partitions: &BTreeMap<AppId, usize>, pct: u32) -> BTreeMap<AppId, usize> {
    let round = |n: usize| (n as u64 * u64::from(pct) * 2 + 100) / 200;
    let total: usize = partitions.values().sum();
    let target = round(total) as usize;
    let mut counts: BTreeMap<AppId, usize> = partitions
        .iter()
        .map(|(a, &n)| (a.clone(), (round(n) as usize).min(n)))
        .collect();
    let got: usize = counts.values().sum();
    if got != target {
        let largest = partitions
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(a, _)| a.clone());
        if let Some(app) = largest {
            let c = counts.get_mut(&app).expect("present");
            let adjusted = (*c + target).saturating_sub(got);
            *c = adjusted.min(partitions[&app]);
        }
    }
    counts
}

/// Seeded stratified sample of the suite at `pct` percent, sorted by id.
pub fn sample_load(suite: &TaskSuite, pct: u32, seed: u64) -> Result<Vec<TaskSpec>, BenchError> {
    if !LOADS.contains(&pct) {
        return Err(BenchError::BadLoad(pct));
    }
    let mut parts: BTreeMap<AppId, Vec<&TaskSpec>> = BTreeMap::new();
    for t in &suite.tasks {
        parts.entry(t.app_id.clone()).or_default().push(t);
    }
    for p in parts.values_mut() {
        p.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    }
    let sizes = parts.iter().map(|(a, v)| (a.clone(), v.len())).collect();
    let counts = stratified_counts(&sizes, pct);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (app, tasks) in &parts {
        let k = counts[app];
        if k == tasks.len() {
            out.extend(tasks.iter().map(|t| (*t).clone()));
        } else {
            out.extend(sample(&mut rng, tasks.len(), k).into_iter().map(|i| tasks[i].clone()));
        }
    }
    out.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    Ok(out)
}

/// A session plus the dependency edges that pointed outside the subset.
#[derive(Debug, Clone)]
pub struct BuiltSession {
    pub session: Session,
    pub dropped_edges: Vec<(TaskId, TaskId)>,
}

impl BuiltSession {
    pub fn warnings(&self) -> usize {
        self.dropped_edges.len()
    }
}

/// Concatenates `subset` into one backlog, keeping edges among selected
/// tasks and dropping (with a warning each) edges to unselected ones.
pub fn build_session(suite: &TaskSuite, subset: &[TaskSpec]) -> Result<BuiltSession, BenchError> {
    if subset.is_empty() {
        return Err(BenchError::EmptySuite);
    }
    let keep: BTreeSet<&TaskId> = subset.iter().map(|t| &t.task_id).collect();
    let (kept, dropped): (Vec<_>, Vec<_>) = suite
        .edges
        .iter()
        .filter(|(task, _)| keep.contains(task))
        .cloned()
        .partition(|(_, prereq)| keep.contains(prereq));
    let graph = build_graph(subset, &kept).map_err(|e| BenchError::Graph(e.to_string()))?;
    Ok(BuiltSession {
        session: Session::new(subset.to_vec(), graph),
        dropped_edges: dropped,
    })
}

/// All of one application's tasks as a session.
pub fn per_app_session(suite: &TaskSuite, app: &AppId) -> Result<BuiltSession, BenchError> {
    let subset: Vec<TaskSpec> = suite.tasks.iter().filter(|t| &t.app_id == app).cloned().collect();
    if subset.is_empty() {
        return Err(BenchError::UnknownApp(app.clone()));
    }
    build_session(suite, &subset)
}
