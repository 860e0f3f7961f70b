//! Artifact-based judging and completion-rate arithmetic.

use std::fmt;

use thiserror::Error;

use crate::env::{ActionRecord, Document, Operation, SimApplication};
use crate::task::TaskSpec;
use crate::time::SimTime;

/// Canonical text form: CRLF folded to LF, surrounding whitespace trimmed.
pub fn canonicalize(text: &str) -> String {
    text.replace("\r\n", "\n").trim().to_owned()
}

/// True iff both documents have the same keys and byte-identical canonical values.
pub fn judge_artifact(artifact: &Document, golden: &Document) -> bool {
    artifact.len() == golden.len()
        && artifact.iter().zip(golden.iter()).all(|((ka, va), (kg, vg))| {
            ka == kg && canonicalize(va).as_bytes() == canonicalize(vg).as_bytes()
        })
}

/// Golden deliverable: the task's edit script replayed on a pristine document.
///
/// The replay goes through [`SimApplication`] so the golden is exactly what a
/// faultless agent would produce.
pub fn golden_for(task: &TaskSpec) -> Document {
    let mut app = SimApplication::new(task.app_id.clone());
    app.insert_artifact(task.deliverable_id.clone(), Document::new());
    let mut at = SimTime::ZERO;
    let mut step = |op: Operation, app: &mut SimApplication| {
        let action = ActionRecord::new(
            "golden".into(),
            task.task_id.clone(),
            task.app_id.clone(),
            op,
            at,
        );
        at = at + 1;
        let outcome = app.apply(&action);
        debug_assert!(outcome.is_ok());
    };
    step(Operation::Open(task.deliverable_id.clone()), &mut app);
    for e in &task.edit_script {
        step(
            Operation::Edit {
                key: e.key.clone(),
                value: e.value.clone(),
            },
            &mut app,
        );
    }
    app.artifacts
        .remove(&task.deliverable_id)
        .expect("deliverable inserted above")
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum RateError {
    #[error("completion rate needs a positive total")]
    ZeroTotal,
    #[error("completed count {completed} exceeds total {total}")]
    Overcount { completed: u64, total: u64 },
}

/// A percentage with one decimal, held exactly as tenths of a percent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Percent {
    pub tenths: u64,
}

impl Percent {
    pub fn as_f64(self) -> f64 {
        self.tenths as f64 / 10.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.tenths / 10, self.tenths % 10)
    }
}

/// `100 * completed / total`, rounded half-up to one decimal.
pub fn completion_rate(completed: u64, total: u64) -> Result<Percent, RateError> {
    if total == 0 {
        return Err(RateError::ZeroTotal);
    }
    if completed > total {
        return Err(RateError::Overcount { completed, total });
    }
    // tenths = round_half_up(1000 c / t) = floor((2000 c + t) / 2t)
    let tenths = (2000 * completed + total) / (2 * total);
    Ok(Percent { tenths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::EditStep;

    #[test]
    fn identical_and_differing_documents() {
        let a: Document = [("title", "Q4"), ("owner", "ops")].into_iter().collect();
        assert!(judge_artifact(&a, &a.clone()));
        let mut b = a.clone();
        b.set("owner", "sales");
        assert!(!judge_artifact(&a, &b));
        let mut c = a.clone();
        c.set("extra", "x");
        assert!(!judge_artifact(&a, &c));
        let mut d = a.clone();
        d.set("title", "  Q4\r\n");
        assert!(judge_artifact(&a, &d));
    }

    #[test]
    fn replayed_script_matches_golden() {
        let task = TaskSpec {
            task_id: "T1".into(),
            app_id: "word".into(),
            description: "memo".into(),
            priority: 1,
            state_footprint: 5,
            step_count: 3,
            deadline: None,
            deliverable_id: "memo".into(),
            edit_script: vec![
                EditStep::new("title", "Draft"),
                EditStep::new("body", "text"),
                EditStep::new("title", "Final"),
            ],
        };
        let golden = golden_for(&task);
        // Independent replay: last write per key wins.
        let mut expected = Document::new();
        for e in &task.edit_script {
            expected.set(e.key.clone(), e.value.clone());
        }
        assert_eq!(golden, expected);
        assert!(judge_artifact(&expected, &golden));
    }

    #[test]
    fn rates() {
        assert_eq!(completion_rate(7, 46).unwrap().to_string(), "15.2");
        assert_eq!(completion_rate(0, 46).unwrap().to_string(), "0.0");
        assert_eq!(completion_rate(2, 23).unwrap().to_string(), "8.7");
        assert_eq!(completion_rate(1, 8).unwrap().to_string(), "12.5");
        assert_eq!(completion_rate(1, 0), Err(RateError::ZeroTotal));
        assert!(completion_rate(5, 4).is_err());
    }
}
