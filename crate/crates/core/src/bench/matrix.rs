//! Policy by load (and per application) matrices.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::judge::{completion_rate, Percent};
use crate::planning::{Identity, ObjectiveTemplate};
use crate::runtime::{run_day, DayReport, PolicyKind, RuntimeConfig};
use crate::suite::TaskSuite;

use super::{build_session, default_identity, per_app_session, sample_load, BenchError, Grouping};

/// One averaged cell of the matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub policy: PolicyKind,
    pub grouping: Grouping,
}

#[derive(Debug, Clone)]
pub struct MatrixSpec {
    pub policies: Vec<PolicyKind>,
    pub loads: Vec<u32>,
    pub seeds: Vec<u64>,
    /// Also run one session per application for each policy.
    pub per_app: bool,
    /// Shared settings; the policy field is replaced per cell.
    pub config: RuntimeConfig,
    pub identity: Identity,
    pub templates: Vec<ObjectiveTemplate>,
}

impl MatrixSpec {
    pub fn new(policies: Vec<PolicyKind>, loads: Vec<u32>, seeds: Vec<u64>) -> Self {
        let (identity, templates) = default_identity();
        Self {
            policies,
            loads,
            seeds,
            per_app: false,
            config: RuntimeConfig::new(PolicyKind::FlatBaseline),
            identity,
            templates,
        }
    }

    fn runs(&self, suite: &TaskSuite) -> Vec<(CellKey, u64)> {
        let mut apps: Vec<_> = suite.tasks.iter().map(|t| t.app_id.clone()).collect();
        apps.sort();
        apps.dedup();
        let mut out = Vec::new();
        for &policy in &self.policies {
            let mut groups: Vec<Grouping> = self.loads.iter().map(|&l| Grouping::Load(l)).collect();
            if self.per_app {
                groups.extend(apps.iter().cloned().map(Grouping::App));
            }
            for grouping in groups {
                for &seed in &self.seeds {
                    out.push((CellKey { policy, grouping: grouping.clone() }, seed));
                }
            }
        }
        out.sort();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub key: CellKey,
    pub seed: u64,
    pub config: RuntimeConfig,
    pub subset_size: usize,
    pub suite_size: usize,
    pub warnings: usize,
    /// The finished day, or why the run could not complete.
    pub day: Result<DayReport, String>,
}

impl RunReport {
    pub fn judged(&self) -> usize {
        self.day.as_ref().map_or(0, |d| d.judged())
    }

    /// Judged completions over the sampled subset.
    pub fn rate_load(&self) -> Option<Percent> {
        self.day.as_ref().ok().and_then(|_| completion_rate(self.judged() as u64, self.subset_size as u64).ok())
    }

    /// Judged completions over the whole suite.
    pub fn rate_total(&self) -> Option<Percent> {
        self.day.as_ref().ok().and_then(|_| completion_rate(self.judged() as u64, self.suite_size as u64).ok())
    }

    pub fn file_name(&self) -> String {
        format!("{}-{}-seed{}.txt", self.key.policy, self.key.grouping, self.seed)
    }

    pub fn render(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(out, "grouping={}", self.key.grouping);
        let _ = writeln!(out, "subset_size={}", self.subset_size);
        let _ = writeln!(out, "suite_size={}", self.suite_size);
        let _ = writeln!(out, "dropped_edges={}", self.warnings);
        let _ = writeln!(
            out,
            "config=max_minutes:{} max_tool_calls:{} context_budget:{} reprioritize:{} reload:{} probes:{} memory_k:{} demo_k:{} demo_threshold:{}",
            c.max_minutes,
            c.max_tool_calls,
            c.context_budget,
            c.cost.reprioritize,
            c.cost.reload,
            c.cost.probes,
            c.cost.memory_k,
            c.cost.demo_k,
            c.cost.demo_threshold
        );
        match &self.day {
            Ok(day) => {
                let _ = writeln!(out, "rate_load={}", self.rate_load().unwrap_or_default());
                let _ = writeln!(out, "rate_total={}", self.rate_total().unwrap_or_default());
                out.push_str(&day.render());
            }
            Err(e) => {
                let _ = writeln!(out, "policy={}", self.key.policy);
                let _ = writeln!(out, "seed={}", self.seed);
                let _ = writeln!(out, "error={e}");
            }
        }
        out
    }
}

/// Runs one cell for one seed. Sampling and the agent share the seed.
pub fn run_cell(suite: &TaskSuite, spec: &MatrixSpec, key: &CellKey, seed: u64) -> RunReport {
    let mut config = spec.config.clone();
    config.policy = key.policy;
    let built = match &key.grouping {
        Grouping::Load(pct) => sample_load(suite, *pct, seed).and_then(|subset| build_session(suite, &subset)),
        Grouping::App(app) => per_app_session(suite, app),
    };
    let (subset_size, warnings, day) = match built {
        Ok(b) => {
            let day = run_day(&spec.identity, &spec.templates, &b.session, &config, seed).map_err(|e| e.to_string());
            (b.session.len(), b.warnings(), day)
        }
        Err(e) => (0, 0, Err(e.to_string())),
    };
    RunReport {
        key: key.clone(),
        seed,
        config,
        subset_size,
        suite_size: suite.tasks.len(),
        warnings,
        day,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixReport {
    /// Sorted by cell, then seed.
    pub runs: Vec<RunReport>,
}

/// Mean of per-seed rates, failed runs excluded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMean {
    pub rate_load: f64,
    pub rate_total: f64,
    pub runs: usize,
    pub failures: usize,
}

impl MatrixReport {
    pub fn cells(&self) -> BTreeMap<CellKey, CellMean> {
        let mut out: BTreeMap<CellKey, CellMean> = BTreeMap::new();
        for r in &self.runs {
            let m = out.entry(r.key.clone()).or_insert(CellMean {
                rate_load: 0.0,
                rate_total: 0.0,
                runs: 0,
                failures: 0,
            });
            match (r.rate_load(), r.rate_total()) {
                (Some(l), Some(t)) => {
                    m.rate_load += l.as_f64();
                    m.rate_total += t.as_f64();
                    m.runs += 1;
                }
                _ => m.failures += 1,
            }
        }
        for m in out.values_mut() {
            if m.runs > 0 {
                m.rate_load /= m.runs as f64;
                m.rate_total /= m.runs as f64;
            }
        }
        out
    }

    /// Mean per-load completion rate of one cell.
    pub fn mean(&self, policy: PolicyKind, grouping: Grouping) -> Option<f64> {
        self.cells()
            .get(&CellKey { policy, grouping })
            .filter(|m| m.runs > 0)
            .map(|m| m.rate_load)
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.day.is_err()).count()
    }

    /// One tab-separated line per averaged cell.
    pub fn render_cells(&self) -> String {
        let mut out = String::from("policy\tgrouping\truns\tfailures\trate_load\trate_total\n");
        for (k, m) in self.cells() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.2}\t{:.2}",
                k.policy, k.grouping, m.runs, m.failures, m.rate_load, m.rate_total
            );
        }
        out
    }

    /// One tab-separated line per run.
    pub fn render_runs(&self) -> String {
        let mut out = String::from(
            "policy\tgrouping\tseed\tsubset\tjudged\tcompleted\tskipped\thalt\tminutes\ttool_calls\tsteps\trate_load\trate_total\twarnings\tstatus\n",
        );
        for r in &self.runs {
            let (completed, skipped, halt, minutes, calls, steps, status) = match &r.day {
                Ok(d) => (
                    d.completed(),
                    d.skipped(),
                    d.halt.name().to_owned(),
                    d.minutes_used,
                    d.tool_calls,
                    d.counters.total_steps(),
                    "ok".to_owned(),
                ),
                Err(e) => (0, 0, "-".into(), 0, 0, 0, format!("error: {e}")),
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.key.policy,
                r.key.grouping,
                r.seed,
                r.subset_size,
                r.judged(),
                completed,
                skipped,
                halt,
                minutes,
                calls,
                steps,
                r.rate_load().map_or("-".into(), |p| p.to_string()),
                r.rate_total().map_or("-".into(), |p| p.to_string()),
                r.warnings,
                status
            );
        }
        out
    }

    /// Completion table: policies by load, then policies by application.
    pub fn render_table(&self) -> String {
        let cells = self.cells();
        let mut policies: Vec<PolicyKind> = cells.keys().map(|k| k.policy).collect();
        policies.dedup();
        let mut out = String::new();
        for (title, is_load) in [("Completion by load (%)", true), ("Completion by application (%)", false)] {
            let mut groups: Vec<&Grouping> = cells
                .keys()
                .map(|k| &k.grouping)
                .filter(|g| matches!(g, Grouping::Load(_)) == is_load)
                .collect();
            groups.sort();
            groups.dedup();
            if groups.is_empty() {
                continue;
            }
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "{title}");
            let _ = write!(out, "{:<16}", "policy");
            for g in &groups {
                let label = match g {
                    Grouping::Load(p) => format!("{p}%"),
                    Grouping::App(a) => a.to_string(),
                };
                let _ = write!(out, "{label:>10}");
            }
            out.push('\n');
            for &p in &policies {
                let _ = write!(out, "{:<16}", p.name());
                for g in &groups {
                    let cell = cells.get(&CellKey {
                        policy: p,
                        grouping: (*g).clone(),
                    });
                    let text = match cell {
                        Some(m) if m.runs > 0 => format!("{:.1}", m.rate_load),
                        Some(_) => "fail".into(),
                        None => "-".into(),
                    };
                    let _ = write!(out, "{text:>10}");
                }
                out.push('\n');
            }
        }
        out
    }

    /// Writes `cells.tsv`, `runs.tsv`, `table.txt` and one `runs/*.txt`
    /// per run. Contents depend only on the inputs.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir.join("runs"))?;
        std::fs::write(dir.join("cells.tsv"), self.render_cells())?;
        std::fs::write(dir.join("runs.tsv"), self.render_runs())?;
        std::fs::write(dir.join("table.txt"), self.render_table())?;
        for r in &self.runs {
            std::fs::write(dir.join("runs").join(r.file_name()), r.render())?;
        }
        Ok(())
    }
}

/// Runs every (policy, grouping, seed) cell, in parallel across threads.
/// A failing run is recorded and the rest of the matrix still runs.
pub fn run_matrix(suite: &TaskSuite, spec: &MatrixSpec) -> Result<MatrixReport, BenchError> {
    if suite.tasks.is_empty() {
        return Err(BenchError::EmptySuite);
    }
    if let Some(&bad) = spec.loads.iter().find(|l| !super::LOADS.contains(l)) {
        return Err(BenchError::BadLoad(bad));
    }
    let jobs = spec.runs(suite);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    let mut runs: Vec<RunReport> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let jobs = &jobs;
                s.spawn(move || {
                    jobs.iter()
                        .skip(t)
                        .step_by(threads)
                        .map(|(key, seed)| run_cell(suite, spec, key, *seed))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("cell thread")).collect()
    });
    runs.sort_by(|a, b| (&a.key, a.seed).cmp(&(&b.key, b.seed)));
    Ok(MatrixReport { runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::synthetic_suite;

    #[test]
    fn counts_runs_and_cells() {
        let suite = synthetic_suite();
        let spec = MatrixSpec::new(
            vec![PolicyKind::FlatBaseline, PolicyKind::ExpLearning],
            vec![25, 50, 75, 100],
            vec![1, 2, 3],
        );
        let m = run_matrix(&suite, &spec).unwrap();
        assert_eq!(m.runs.len(), 24);
        assert_eq!(m.cells().len(), 8);
        assert_eq!(m.failures(), 0);
        for r in &m.runs {
            let day = r.day.as_ref().unwrap();
            assert!(r.judged() <= day.completed());
            assert!(day.minutes_used <= r.config.max_minutes);
            assert!(day.tool_calls <= r.config.max_tool_calls);
            // Per-load rate times subset size recovers the judged count.
            let back = r.rate_load().unwrap().as_f64() * r.subset_size as f64 / 100.0;
            assert!((back - r.judged() as f64).abs() < 0.05 * r.subset_size as f64 / 10.0 + 1e-9, "{back}");
        }
    }

    #[test]
    fn bad_load_rejected() {
        let spec = MatrixSpec::new(vec![PolicyKind::FlatBaseline], vec![30], vec![1]);
        assert_eq!(run_matrix(&synthetic_suite(), &spec), Err(BenchError::BadLoad(30)));
    }

    #[test]
    fn per_app_cells() {
        let mut spec = MatrixSpec::new(vec![PolicyKind::Scripted], vec![], vec![1]);
        spec.per_app = true;
        let m = run_matrix(&synthetic_suite(), &spec).unwrap();
        assert_eq!(m.runs.len(), 4);
        let sizes: Vec<usize> = m.runs.iter().map(|r| r.subset_size).collect();
        assert_eq!(sizes, vec![11, 19, 7, 9]);
        assert!(m.render_table().contains("Completion by application"));
    }
}
