//! Conversion between calendar dates and model time.
//!
//! Model time is continuous, measured in days since the model start date
//! (midnight). A calendar date `d` maps to the integer day offset
//! `d - model_start`; daily observations are attached to that instant.

use chrono::{Duration, NaiveDate};

/// A calendar anchored at the model start date.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Calendar {
    start: NaiveDate,
}

impl Calendar {
    pub fn new(start: NaiveDate) -> Self {
        Self { start }
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    /// Whole days from the model start to `date` (negative before it).
    pub fn day(&self, date: NaiveDate) -> i64 {
        (date - self.start).num_days()
    }

    pub fn time(&self, date: NaiveDate) -> f64 {
        self.day(date) as f64
    }

    pub fn date(&self, day: i64) -> NaiveDate {
        self.start + Duration::days(day)
    }

    /// Inclusive list of dates between `from` and `to`.
    pub fn dates_between(from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
        from.iter_days().take_while(|d| *d <= to).collect()
    }
}

pub fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}
