//! Session caps on simulated duration and tool calls.

use thiserror::Error;

pub const DEFAULT_MAX_MINUTES: u64 = 6 * 60;
pub const DEFAULT_MAX_TOOL_CALLS: u64 = 25_000;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum BudgetError {
    #[error("session duration cap reached ({used}/{max} minutes)")]
    Duration { used: u64, max: u64 },
    #[error("tool-call cap reached ({used}/{max} calls)")]
    ToolCalls { used: u64, max: u64 },
}

/// Consumed counters never exceed their maxima: a charge that would
/// overflow is refused and leaves the counters unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionBudget {
    max_minutes: u64,
    max_tool_calls: u64,
    used_minutes: u64,
    used_tool_calls: u64,
}

impl Default for SessionBudget {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_MINUTES, DEFAULT_MAX_TOOL_CALLS)
    }
}

impl SessionBudget {
    pub fn new(max_minutes: u64, max_tool_calls: u64) -> Self {
        Self {
            max_minutes,
            max_tool_calls,
            used_minutes: 0,
            used_tool_calls: 0,
        }
    }

    pub fn max_minutes(&self) -> u64 {
        self.max_minutes
    }

    pub fn max_tool_calls(&self) -> u64 {
        self.max_tool_calls
    }

    pub fn used_minutes(&self) -> u64 {
        self.used_minutes
    }

    pub fn used_tool_calls(&self) -> u64 {
        self.used_tool_calls
    }

    pub fn is_exhausted(&self) -> bool {
        self.used_minutes >= self.max_minutes || self.used_tool_calls >= self.max_tool_calls
    }

    pub fn charge_minutes(&mut self, n: u64) -> Result<(), BudgetError> {
        if self.used_minutes + n > self.max_minutes {
            return Err(BudgetError::Duration {
                used: self.used_minutes,
                max: self.max_minutes,
            });
        }
        self.used_minutes += n;
        Ok(())
    }

    pub fn charge_calls(&mut self, n: u64) -> Result<(), BudgetError> {
        if self.used_tool_calls + n > self.max_tool_calls {
            return Err(BudgetError::ToolCalls {
                used: self.used_tool_calls,
                max: self.max_tool_calls,
            });
        }
        self.used_tool_calls += n;
        Ok(())
    }

    /// Charges one call and `minutes` of time together, or neither.
    pub fn charge_action(&mut self, minutes: u64) -> Result<(), BudgetError> {
        if self.used_tool_calls + 1 > self.max_tool_calls {
            return Err(BudgetError::ToolCalls {
                used: self.used_tool_calls,
                max: self.max_tool_calls,
            });
        }
        self.charge_minutes(minutes)?;
        self.used_tool_calls += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_overflow_without_side_effects() {
        let mut b = SessionBudget::new(10, 2);
        b.charge_action(4).unwrap();
        b.charge_action(4).unwrap();
        assert_eq!(b.charge_action(1), Err(BudgetError::ToolCalls { used: 2, max: 2 }));
        assert_eq!(b.used_minutes(), 8);
        assert!(b.charge_minutes(3).is_err());
        b.charge_minutes(2).unwrap();
        assert!(b.is_exhausted());
        let mut c = SessionBudget::new(1, 5);
        assert!(c.charge_action(2).is_err());
        assert_eq!((c.used_minutes(), c.used_tool_calls()), (0, 0));
    }
}
