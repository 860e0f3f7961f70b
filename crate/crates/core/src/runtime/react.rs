//! Reason/act alternation guard.

use crate::budget::SessionBudget;

use super::RuntimeError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReactStep {
    Reason(String),
    Invoke { tool: String, args: Vec<String> },
    Done(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Last {
    Start,
    Reason,
    Invoke,
    Done,
}

/// Accepts steps only in strict alternation: every Invoke follows a Reason,
/// two Reasons never follow each other, and nothing follows Done. Each
/// accepted Invoke is charged one tool call.
#[derive(Debug, Clone)]
pub struct ReactLoop {
    last: Last,
    position: usize,
    invokes: u64,
}

impl Default for ReactLoop {
    fn default() -> Self {
        Self::new()
    }
}

impl ReactLoop {
    pub fn new() -> Self {
        Self {
            last: Last::Start,
            position: 0,
            invokes: 0,
        }
    }

    pub fn invokes(&self) -> u64 {
        self.invokes
    }

    pub fn is_done(&self) -> bool {
        self.last == Last::Done
    }

    pub fn accept(&mut self, step: &ReactStep, budget: &mut SessionBudget) -> Result<(), RuntimeError> {
        let position = self.position;
        let violation = |reason| Err(RuntimeError::AlternationViolation { position, reason });
        if self.last == Last::Done {
            return violation("step after done");
        }
        let next = match step {
            ReactStep::Reason(_) if self.last == Last::Reason => return violation("two reasons in a row"),
            ReactStep::Reason(_) => Last::Reason,
            ReactStep::Invoke { .. } if self.last != Last::Reason => return violation("invoke without a preceding reason"),
            ReactStep::Invoke { .. } => {
                budget.charge_calls(1)?;
                self.invokes += 1;
                Last::Invoke
            }
            ReactStep::Done(_) => Last::Done,
        };
        self.last = next;
        self.position += 1;
        Ok(())
    }
}

/// Runs a fixed script through the guard; returns the number of invokes.
pub fn run_script(script: &[ReactStep], budget: &mut SessionBudget) -> Result<u64, RuntimeError> {
    let mut lp = ReactLoop::new();
    for step in script {
        lp.accept(step, budget)?;
    }
    Ok(lp.invokes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r() -> ReactStep {
        ReactStep::Reason("think".into())
    }

    fn i() -> ReactStep {
        ReactStep::Invoke {
            tool: "excel".into(),
            args: vec![],
        }
    }

    fn d() -> ReactStep {
        ReactStep::Done("ok".into())
    }

    #[test]
    fn alternating_script_is_accepted_and_charged() {
        let mut b = SessionBudget::default();
        assert_eq!(run_script(&[r(), i(), r(), i(), d()], &mut b).unwrap(), 2);
        assert_eq!(b.used_tool_calls(), 2);
    }

    #[test]
    fn violations() {
        for script in [vec![i()], vec![r(), r()], vec![r(), i(), i()], vec![r(), d(), r()]] {
            let mut b = SessionBudget::default();
            assert!(matches!(
                run_script(&script, &mut b),
                Err(RuntimeError::AlternationViolation { .. })
            ));
        }
    }

    #[test]
    fn invoke_refused_when_calls_run_out() {
        let mut b = SessionBudget::new(10, 1);
        assert!(matches!(run_script(&[r(), i(), r(), i()], &mut b), Err(RuntimeError::Budget(_))));
        assert_eq!(b.used_tool_calls(), 1);
    }
}
