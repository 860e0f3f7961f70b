//! The shipped 46-task synthetic suite.
//!
//! Tasks come in families that share a description template and a key
//! space: a short base task followed by one or two long variants. A long
//! variant has 28 or 29 edits, which together with opening the document and
//! the default probes exceeds the per-attempt iteration cap; it only fits
//! when a demonstration removes the probes. Every multi-app task depends on
//! the base task of one single-app family.

use crate::ids::{AppId, ArtifactId, TaskId};
use crate::suite::TaskSuite;
use crate::task::{EditStep, TaskSpec};

struct Family {
    template: &'static str,
    /// Key prefix(es); multi-app families alternate between two.
    keys: &'static [&'static str],
}

const EXCEL: &[Family] = &[
    Family { template: "Reconcile the {} regional revenue ledger against booked invoices", keys: &["rev"] },
    Family { template: "Build the {} headcount forecast sheet from the hiring plan", keys: &["hc"] },
    Family { template: "Refresh the {} inventory valuation table with current unit costs", keys: &["inv"] },
    Family { template: "Compute the {} travel expense variance by cost centre", keys: &["tx"] },
];

const WORD: &[Family] = &[
    Family { template: "Draft the {} vendor contract renewal memo for legal review", keys: &["vc"] },
    Family { template: "Revise the {} onboarding handbook chapter on security policy", keys: &["hb"] },
    Family { template: "Write the {} incident postmortem report with remediation items", keys: &["pm"] },
];

const PPT: &[Family] = &[
    Family { template: "Assemble the {} board update deck with key performance charts", keys: &["bd"] },
    Family { template: "Prepare the {} product roadmap slides for the partner summit", keys: &["rm"] },
    Family { template: "Create the {} customer case study presentation for sales enablement", keys: &["cs"] },
];

const MULTI: &[Family] = &[
    Family { template: "Chart the {} sales pipeline figures into the weekly review deck", keys: &["excel/sp", "ppt/sp"] },
    Family { template: "Summarize the {} budget workbook findings in a finance briefing document", keys: &["excel/bg", "word/bg"] },
    Family { template: "Merge the {} survey results spreadsheet into the research report appendix", keys: &["excel/sv", "word/sv"] },
    Family { template: "Turn the {} training schedule document into an agenda slide", keys: &["word/tr", "ppt/tr"] },
    Family { template: "Attach the {} audit checklist workbook to the compliance memo", keys: &["excel/au", "word/au"] },
    Family { template: "Populate the {} staffing matrix slides from the resourcing spreadsheet", keys: &["ppt/st", "excel/st"] },
    Family { template: "Link the {} risk register sheet into the steering committee deck", keys: &["excel/rk", "ppt/rk"] },
    Family { template: "Convert the {} meeting minutes document into action item slides", keys: &["word/mm", "ppt/mm"] },
];

/// (app, task id prefix, document prefix, families, family sizes).
type AppRow = (&'static str, &'static str, &'static str, &'static [Family], &'static [usize]);

/// Family sizes per application, summing to 11, 9, 7 and 19.
const SIZES: [AppRow; 4] = [
    ("excel", "X", "xl", EXCEL, &[3, 3, 3, 2]),
    ("word", "W", "wd", WORD, &[3, 3, 3]),
    ("ppt", "P", "pp", PPT, &[3, 2, 2]),
    ("multi", "M", "mx", MULTI, &[3, 3, 3, 2, 2, 2, 2, 2]),
];

const SLOTS: [&str; 3] = ["north", "south", "west"];
pub const BASE_STEPS: [u32; 5] = [10, 11, 12, 13, 14];
pub const LONG_STEPS: [u32; 2] = [28, 29];
pub const MIN_FOOTPRINT: u32 = 240;
pub const FOOTPRINT_SPREAD: u32 = 81;

fn footprint(n: usize) -> u32 {
    MIN_FOOTPRINT + ((n as u32 * 37 + 11) % FOOTPRINT_SPREAD)
}

/// Generates the suite. Deterministic; the shipped fixture file is this
/// output rendered.
pub fn synthetic_suite() -> TaskSuite {
    let mut suite = TaskSuite::default();
    let mut serial = 0usize;
    let mut family_no = 0usize;
    let mut single_bases: Vec<TaskId> = Vec::new();
    let mut multi_tasks: Vec<(TaskId, usize)> = Vec::new();
    for (app, prefix, doc, families, sizes) in SIZES {
        let mut n = 0;
        for (fi, (fam, &size)) in families.iter().zip(sizes).enumerate() {
            let tier = family_no % 3;
            family_no += 1;
            for (member, slot) in SLOTS.iter().enumerate().take(size) {
                n += 1;
                serial += 1;
                let task_id = TaskId::new(format!("{prefix}{n:02}"));
                let steps = if member == 0 {
                    BASE_STEPS[serial % BASE_STEPS.len()]
                } else {
                    LONG_STEPS[serial % LONG_STEPS.len()]
                };
                let edit_script = (1..=steps as usize)
                    .map(|k| {
                        let prefix = fam.keys[k % fam.keys.len()];
                        EditStep::new(format!("{prefix}{k}"), format!("{slot} {}", (k * 37 + serial * 11) % 1000))
                    })
                    .collect();
                if member == 0 && app != "multi" {
                    single_bases.push(task_id.clone());
                }
                if app == "multi" {
                    multi_tasks.push((task_id.clone(), fi));
                }
                suite.tasks.push(TaskSpec {
                    task_id,
                    app_id: AppId::new(app),
                    description: fam.template.replace("{}", slot),
                    priority: 1 + tier as u32 + u32::from(member > 0),
                    state_footprint: footprint(serial),
                    step_count: steps,
                    deadline: None,
                    deliverable_id: ArtifactId::new(format!("{doc}-{n:02}")),
                    edit_script,
                });
            }
        }
    }
    for (task, fi) in multi_tasks {
        let prereq = single_bases[fi % single_bases.len()].clone();
        suite.edges.push((task, prereq));
    }
    suite
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::embed;
    use crate::xplearn::context_digest;
    use std::collections::BTreeMap;

    #[test]
    fn shape() {
        let s = synthetic_suite();
        assert_eq!(s.tasks.len(), 46);
        let mut per_app: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &s.tasks {
            *per_app.entry(t.app_id.as_str()).or_default() += 1;
            t.validate().unwrap();
            assert!((10..=30).contains(&t.step_count));
        }
        assert_eq!(per_app["excel"], 11);
        assert_eq!(per_app["word"], 9);
        assert_eq!(per_app["ppt"], 7);
        assert_eq!(per_app["multi"], 19);
        assert_eq!(s.edges.len(), 19);
        s.graph().unwrap();
        for (task, prereq) in &s.edges {
            assert_eq!(s.task(task).unwrap().app_id.as_str(), "multi");
            assert_ne!(s.task(prereq).unwrap().app_id.as_str(), "multi");
        }
    }

    #[test]
    fn footprints_fit_twelve_and_overflow_twenty_three() {
        let s = synthetic_suite();
        let mut fp: Vec<u32> = s.tasks.iter().map(|t| t.state_footprint).collect();
        fp.sort_unstable();
        let largest12: u32 = fp.iter().rev().take(12).sum();
        let smallest23: u32 = fp.iter().take(23).sum();
        assert!(largest12 < 4096 - 200, "{largest12}");
        assert!(smallest23 > 4096, "{smallest23}");
    }

    #[test]
    fn sibling_digests_match_and_strangers_do_not() {
        let s = synthetic_suite();
        let digest = |t: &TaskSpec| embed(&context_digest(&t.app_id, &t.description, "doc keys=0"));
        let family = |t: &TaskSpec| t.edit_script[0].key.trim_end_matches(char::is_numeric).to_owned();
        for a in &s.tasks {
            for b in &s.tasks {
                if a.task_id >= b.task_id || a.app_id != b.app_id {
                    continue;
                }
                let c = digest(a).cosine(&digest(b)).unwrap();
                if family(a) == family(b) {
                    assert!(c >= 0.8, "{} {} {c}", a.task_id, b.task_id);
                } else {
                    assert!(c < 0.8, "{} {} {c}", a.task_id, b.task_id);
                }
            }
        }
    }
}
