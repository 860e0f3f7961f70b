//! Eleven artifact/golden pairs with human labels for checking the judge.
//!
//! The judge here is deterministic, so it agrees with every label by
//! construction. Comparisons between LLM-based artifact and trace judges are
//! not modelled.

use std::path::Path;

use crate::env::Document;
use crate::judge::{completion_rate, judge_artifact, Percent};
use crate::record::{parse_lines, Record};

use super::BenchError;

pub const JUDGE_FIXTURE: &str = include_str!("../../fixtures/judge_fixture.txt");

/// One labelled case: `a=key:value` fields build the artifact, `g=` fields
/// the golden.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureCase {
    pub case_id: String,
    pub note: String,
    pub label: bool,
    pub artifact: Document,
    pub golden: Document,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureReport {
    /// `(case id, label, decision)` in file order.
    pub decisions: Vec<(String, bool, bool)>,
    pub matches: usize,
    pub agreement: Percent,
}

impl FixtureReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (id, label, decision) in &self.decisions {
            out.push_str(&format!(
                "case={id}\tlabel={}\tdecision={}\tagree={}\n",
                u8::from(*label),
                u8::from(*decision),
                u8::from(label == decision)
            ));
        }
        out.push_str(&format!(
            "agreement={}%\tmatches={}/{}\n",
            self.agreement,
            self.matches,
            self.decisions.len()
        ));
        out
    }
}

fn document(r: &Record, field: &'static str) -> Result<Document, BenchError> {
    let mut doc = Document::new();
    for kv in r.get_all(field) {
        let (k, v) = kv
            .split_once(':')
            .ok_or_else(|| BenchError::FixtureMissing(format!("line {}: {field}={kv:?} lacks ':'", r.line)))?;
        doc.set(k, v);
    }
    Ok(doc)
}

pub fn parse_fixture(text: &str) -> Result<Vec<FixtureCase>, BenchError> {
    let bad = |e: String| BenchError::FixtureMissing(e);
    parse_lines(text)
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(|r| {
            Ok(FixtureCase {
                case_id: r.require("case").map_err(|e| bad(e.to_string()))?.to_owned(),
                note: r.get("note").unwrap_or_default().to_owned(),
                label: match r.require("label").map_err(|e| bad(e.to_string()))? {
                    "1" => true,
                    "0" => false,
                    v => return Err(bad(r.invalid("label", v).to_string())),
                },
                artifact: document(r, "a")?,
                golden: document(r, "g")?,
            })
        })
        .collect()
}

/// The shipped fixture.
pub fn judge_fixture() -> Vec<FixtureCase> {
    parse_fixture(JUDGE_FIXTURE).expect("shipped fixture parses")
}

pub fn evaluate(cases: &[FixtureCase]) -> Result<FixtureReport, BenchError> {
    let decisions: Vec<(String, bool, bool)> = cases
        .iter()
        .map(|c| (c.case_id.clone(), c.label, judge_artifact(&c.artifact, &c.golden)))
        .collect();
    let matches = decisions.iter().filter(|(_, l, d)| l == d).count();
    let agreement = completion_rate(matches as u64, decisions.len() as u64)
        .map_err(|_| BenchError::FixtureMissing("fixture has no cases".into()))?;
    Ok(FixtureReport {
        decisions,
        matches,
        agreement,
    })
}

/// Evaluates the fixture at `path`, or the shipped one when `None`.
pub fn judge_fixture_eval(path: Option<&Path>) -> Result<FixtureReport, BenchError> {
    let cases = match path {
        None => judge_fixture(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| BenchError::FixtureMissing(format!("{}: {e}", p.display())))?;
            parse_fixture(&text)?
        }
    };
    evaluate(&cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_fixture_agrees_fully() {
        let r = judge_fixture_eval(None).unwrap();
        assert_eq!(r.decisions.len(), 11);
        assert_eq!(r.matches, 11);
        assert_eq!(r.agreement.to_string(), "100.0");
        let positives = r.decisions.iter().filter(|d| d.1).count();
        assert!(positives > 0 && positives < 11);
    }

    #[test]
    fn agreement_rounds_to_one_decimal() {
        let mut cases = judge_fixture();
        // Flip one label: 10 of 11 agree, 90.909... rounds to 90.9.
        cases[0].label = !cases[0].label;
        assert_eq!(evaluate(&cases).unwrap().agreement.to_string(), "90.9");
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            judge_fixture_eval(Some(Path::new("/nonexistent/fixture.txt"))),
            Err(BenchError::FixtureMissing(_))
        ));
    }

    /// Replaces byte `at` of the first artifact value with `with`.
    fn mutate(case: &mut FixtureCase, at: usize, with: u8) {
        let (k, v) = case.artifact.iter().next().map(|(k, v)| (k.to_owned(), v.to_owned())).unwrap();
        let mut bytes = v.into_bytes();
        bytes[at] = with;
        case.artifact.set(k, String::from_utf8(bytes).unwrap());
    }

    #[test]
    fn single_byte_mutation_flips_exactly_one_decision() {
        let cases = judge_fixture();
        let base = evaluate(&cases).unwrap();
        let mut targets: Vec<(usize, usize, u8)> = cases
            .iter()
            .enumerate()
            .filter(|(_, c)| c.label && !c.artifact.is_empty())
            .map(|(i, c)| {
                let first = c.artifact.iter().next().unwrap().1.as_bytes()[0];
                (i, 0, if first == b'#' { b'%' } else { b'#' })
            })
            .collect();
        // The wrong-digit case becomes a match when its last byte is fixed.
        let c06 = cases.iter().position(|c| c.case_id == "c06").unwrap();
        targets.push((c06, 4, b'5'));
        for (i, at, with) in targets {
            let mut mutated = cases.clone();
            mutate(&mut mutated[i], at, with);
            let after = evaluate(&mutated).unwrap();
            let flipped: Vec<usize> = (0..cases.len())
                .filter(|&j| base.decisions[j].2 != after.decisions[j].2)
                .collect();
            assert_eq!(flipped, vec![i], "{}", cases[i].case_id);
        }
    }
}
