use std::f64::consts::TAU;
use std::fmt;

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

/// A calendar month, used to label chronological partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MonthLabel {
    pub year: i32,
    pub month: u32,
}

impl MonthLabel {
    pub fn new(year: i32, month: u32) -> Self {
        Self { year, month }
    }

    pub fn of(t: NaiveDateTime) -> Self {
        Self::new(t.year(), t.month())
    }
}

impl fmt::Display for MonthLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl std::str::FromStr for MonthLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, m) = s.split_once('-').ok_or_else(|| format!("expected YYYY-MM, got {s:?}"))?;
        let year = y.parse().map_err(|_| format!("bad year in {s:?}"))?;
        let month: u32 = m.parse().map_err(|_| format!("bad month in {s:?}"))?;
        if !(1..=12).contains(&month) {
            return Err(format!("month out of range in {s:?}"));
        }
        Ok(Self { year, month })
    }
}

/// Time of day on the unit circle, period 24 h.
pub fn encode_hour(t: NaiveDateTime) -> (f64, f64) {
    let hours = t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0;
    let angle = TAU * hours / 24.0;
    (angle.sin(), angle.cos())
}

/// Day of week on the unit circle, period 7 days, Monday at angle zero.
pub fn encode_day_of_week(t: NaiveDateTime) -> (f64, f64) {
    let angle = TAU * t.weekday().num_days_from_monday() as f64 / 7.0;
    (angle.sin(), angle.cos())
}
