//! Simulated time. One unit is one sim minute since the simulation epoch.

use std::fmt;
use std::ops::{Add, Sub};

pub const MINUTES_PER_HOUR: u64 = 60;
pub const MINUTES_PER_DAY: u64 = 24 * MINUTES_PER_HOUR;
/// Simulated months are a flat 30 days.
pub const DAYS_PER_MONTH: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn minutes(self) -> u64 {
        self.0
    }

    pub fn at(day: u64, hour: u64, minute: u64) -> Self {
        SimTime(day * MINUTES_PER_DAY + hour * MINUTES_PER_HOUR + minute)
    }

    pub fn day(self) -> u64 {
        self.0 / MINUTES_PER_DAY
    }

    pub fn month(self) -> u64 {
        self.day() / DAYS_PER_MONTH
    }

    pub fn month_start(month: u64) -> Self {
        SimTime(month * DAYS_PER_MONTH * MINUTES_PER_DAY)
    }

    /// Exclusive end of a month.
    pub fn month_end(month: u64) -> Self {
        Self::month_start(month + 1)
    }

    pub fn saturating_sub(self, other: SimTime) -> u64 {
        self.0.saturating_sub(other.0)
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;

    fn add(self, minutes: u64) -> SimTime {
        SimTime(self.0 + minutes)
    }
}

impl Sub for SimTime {
    type Output = u64;

    fn sub(self, other: SimTime) -> u64 {
        self.0 - other.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let in_day = self.0 % MINUTES_PER_DAY;
        write!(
            f,
            "d{}+{:02}:{:02}",
            self.day(),
            in_day / MINUTES_PER_HOUR,
            in_day % MINUTES_PER_HOUR
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calendar_arithmetic() {
        let t = SimTime::at(31, 8, 5);
        assert_eq!(t.day(), 31);
        assert_eq!(t.month(), 1);
        assert_eq!(t.to_string(), "d31+08:05");
        assert_eq!(SimTime::month_end(0), SimTime::month_start(1));
        assert_eq!(t + 10 - t, 10);
    }
}
