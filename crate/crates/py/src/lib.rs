//! Python module `mhte`: run days and matrices, evaluate the judge fixture.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use mhte_core::bench::{self, CellKey, Grouping, MatrixSpec};
use mhte_core::runtime::{PolicyKind, RuntimeConfig};
use mhte_core::suite::TaskSuite;

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn policy(name: &str) -> PyResult<PolicyKind> {
    name.parse().map_err(value_error)
}

fn suite(text: Option<&str>) -> PyResult<TaskSuite> {
    match text {
        Some(t) => TaskSuite::parse(t).map_err(value_error),
        None => Ok(bench::synthetic_suite()),
    }
}

/// Outcome of one agent-day.
#[pyclass(frozen, get_all)]
pub struct DaySummary {
    pub policy: String,
    pub seed: u64,
    pub subset_size: usize,
    pub completed: usize,
    pub judged: usize,
    pub skipped: usize,
    pub halt: String,
    pub minutes_used: u64,
    pub tool_calls: u64,
    pub total_steps: u64,
    pub rate_load: f64,
    pub rate_total: f64,
    /// The full text report.
    pub report: String,
}

#[pymethods]
impl DaySummary {
    fn __repr__(&self) -> String {
        format!(
            "DaySummary(policy={}, seed={}, judged={}/{}, halt={})",
            self.policy, self.seed, self.judged, self.subset_size, self.halt
        )
    }
}

/// Runs one day on a load sample (or one application's tasks when `app`
/// is given). `suite` is suite text; the shipped suite when omitted.
#[pyfunction]
#[pyo3(signature = (policy_name, load=100, seed=1, app=None, suite_text=None))]
fn run(policy_name: &str, load: u32, seed: u64, app: Option<String>, suite_text: Option<&str>) -> PyResult<DaySummary> {
    let p = policy(policy_name)?;
    let suite = suite(suite_text)?;
    let mut spec = MatrixSpec::new(vec![p], vec![], vec![seed]);
    spec.config = RuntimeConfig::new(p);
    let grouping = match app {
        Some(a) => Grouping::App(a.into()),
        None => Grouping::Load(load),
    };
    let r = bench::run_cell(&suite, &spec, &CellKey { policy: p, grouping }, seed);
    let day = r.day.as_ref().map_err(value_error)?;
    Ok(DaySummary {
        policy: p.to_string(),
        seed,
        subset_size: r.subset_size,
        completed: day.completed(),
        judged: day.judged(),
        skipped: day.skipped(),
        halt: day.halt.name().to_owned(),
        minutes_used: day.minutes_used,
        tool_calls: day.tool_calls,
        total_steps: day.counters.total_steps(),
        rate_load: r.rate_load().map_or(0.0, |p| p.as_f64()),
        rate_total: r.rate_total().map_or(0.0, |p| p.as_f64()),
        report: r.render(),
    })
}

/// Mean per-load completion rate for every (policy, load) cell.
#[pyfunction]
#[pyo3(signature = (policies, loads, seeds, suite_text=None))]
fn matrix(policies: Vec<String>, loads: Vec<u32>, seeds: Vec<u64>, suite_text: Option<&str>) -> PyResult<Vec<(String, u32, f64)>> {
    let ps = policies.iter().map(|p| policy(p)).collect::<PyResult<Vec<_>>>()?;
    let suite = suite(suite_text)?;
    let spec = MatrixSpec::new(ps, loads, seeds);
    let report = bench::run_matrix(&suite, &spec).map_err(value_error)?;
    Ok(report
        .cells()
        .into_iter()
        .filter_map(|(k, m)| match k.grouping {
            Grouping::Load(l) => Some((k.policy.to_string(), l, m.rate_load)),
            Grouping::App(_) => None,
        })
        .collect())
}

/// `(matches, cases, agreement percent)` on the shipped judge fixture.
#[pyfunction]
fn judge_fixture() -> PyResult<(usize, usize, f64)> {
    let r = bench::judge_fixture_eval(None).map_err(value_error)?;
    Ok((r.matches, r.decisions.len(), r.agreement.as_f64()))
}

/// The shipped 46-task suite as text.
#[pyfunction]
fn synthetic_suite() -> String {
    bench::SUITE46.to_owned()
}

#[pymodule]
fn mhte(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<DaySummary>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(matrix, m)?)?;
    m.add_function(wrap_pyfunction!(judge_fixture, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_suite, m)?)?;
    m.add("POLICIES", PolicyKind::LADDER.iter().map(|p| p.name()).collect::<Vec<_>>())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_and_suite() {
        assert_eq!(judge_fixture().unwrap(), (11, 11, 100.0));
        assert!(synthetic_suite().starts_with("task_id="));
    }
}
