use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Daily reported counts of one region over a gap-free date range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseSeries {
    pub region: String,
    pub start: NaiveDate,
    pub counts: Vec<u64>,
}

impl CaseSeries {
    pub fn new(region: impl Into<String>, start: NaiveDate, counts: Vec<u64>) -> Self {
        Self {
            region: region.into(),
            start,
            counts,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Last date, or `None` when empty.
    pub fn end(&self) -> Option<NaiveDate> {
        (!self.counts.is_empty()).then(|| self.start + Duration::days(self.counts.len() as i64 - 1))
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start.iter_days().take(self.counts.len())
    }

    pub fn records(&self) -> impl Iterator<Item = (NaiveDate, u64)> + '_ {
        self.dates().zip(self.counts.iter().copied())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Keep records dated on or before `end`.
    pub fn truncated(&self, end: NaiveDate) -> Self {
        let keep = self.dates().take_while(|d| *d <= end).count();
        Self {
            region: self.region.clone(),
            start: self.start,
            counts: self.counts[..keep].to_vec(),
        }
    }

    /// Daily sum across aligned series, labelled `label`.
    pub fn sum(series: &[CaseSeries], label: &str) -> Result<Self> {
        let first = series
            .first()
            .ok_or_else(|| Error::InvalidArgument("no series to aggregate".into()))?;
        for s in series {
            if s.start != first.start || s.len() != first.len() {
                return Err(Error::InvalidArgument(format!(
                    "series {} ({} from {}) is not aligned with {} ({} from {})",
                    s.region,
                    s.len(),
                    s.start,
                    first.region,
                    first.len(),
                    first.start
                )));
            }
        }
        let counts = (0..first.len())
            .map(|k| series.iter().map(|s| s.counts[k]).sum())
            .collect();
        Ok(Self::new(label, first.start, counts))
    }
}
