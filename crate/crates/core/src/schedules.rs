//! Piecewise-in-time contact reduction `f(t)` and testing fraction `psi(r)`.
//!
//! The contact fraction is 1 before the first change point, constant on
//! each phase plateau, and moves linearly between consecutive plateaus
//! over a transition window. The testing fraction is a step function over
//! contiguous date segments; the last segment extends indefinitely to the
//! right so forecasts can query past the observation window.

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calendar::{ymd, Calendar};
use crate::error::{Error, Result};

/// One transition between consecutive contact phases: the previous phase
/// ends at `phase_end` and the next plateau starts at `next_start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionWindow {
    pub phase_end: NaiveDate,
    pub next_start: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistancingScheduleSpec", into = "DistancingScheduleSpec")]
pub struct DistancingSchedule {
    model_start: NaiveDate,
    observation_start: NaiveDate,
    windows: Vec<TransitionWindow>,
    // (phase_end, next_start) offsets in model days
    offsets: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DistancingScheduleSpec {
    model_start: NaiveDate,
    observation_start: NaiveDate,
    windows: Vec<TransitionWindow>,
}

impl TryFrom<DistancingScheduleSpec> for DistancingSchedule {
    type Error = Error;

    fn try_from(spec: DistancingScheduleSpec) -> Result<Self> {
        DistancingSchedule::new(spec.model_start, spec.observation_start, spec.windows)
    }
}

impl From<DistancingSchedule> for DistancingScheduleSpec {
    fn from(s: DistancingSchedule) -> Self {
        DistancingScheduleSpec {
            model_start: s.model_start,
            observation_start: s.observation_start,
            windows: s.windows,
        }
    }
}

/// Which level a contact-fraction value is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    /// No reduction (f = 1).
    Baseline,
    /// Plateau value of phase `j` (index 0 is the first estimated phase).
    Phase(usize),
}

/// `f(t) = (1 - weight) * from + weight * to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blend {
    pub from: Level,
    pub to: Level,
    pub weight: f64,
}

impl Blend {
    fn flat(level: Level) -> Self {
        Blend {
            from: level,
            to: level,
            weight: 1.0,
        }
    }

    pub fn apply(&self, f: &[f64]) -> f64 {
        let value = |l: Level| match l {
            Level::Baseline => 1.0,
            Level::Phase(j) => f[j],
        };
        if self.from == self.to {
            value(self.to)
        } else {
            (1.0 - self.weight) * value(self.from) + self.weight * value(self.to)
        }
    }
}

impl DistancingSchedule {
    pub fn new(
        model_start: NaiveDate,
        observation_start: NaiveDate,
        windows: Vec<TransitionWindow>,
    ) -> Result<Self> {
        let cal = Calendar::new(model_start);
        let offsets = windows
            .iter()
            .map(|w| (cal.time(w.phase_end), cal.time(w.next_start)))
            .collect();
        let sched = DistancingSchedule {
            model_start,
            observation_start,
            windows,
            offsets,
        };
        let violations = sched.validate();
        if violations.is_empty() {
            Ok(sched)
        } else {
            let msg = violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::InvalidSchedule(msg))
        }
    }

    /// British Columbia 2020 phases: six transitions, each one week long,
    /// including the Thanksgiving change point.
    pub fn bc_2020() -> Self {
        let w = |m1, d1, m2, d2| TransitionWindow {
            phase_end: ymd(2020, m1, d1),
            next_start: ymd(2020, m2, d2),
        };
        DistancingSchedule::new(
            ymd(2020, 2, 1),
            ymd(2020, 3, 1),
            vec![
                w(3, 14, 3, 21),
                w(5, 18, 5, 25),
                w(6, 23, 6, 30),
                w(9, 12, 9, 19),
                w(10, 12, 10, 19),
                w(11, 7, 11, 14),
            ],
        )
        .expect("built-in schedule is valid")
    }

    pub fn model_start(&self) -> NaiveDate {
        self.model_start
    }

    pub fn observation_start(&self) -> NaiveDate {
        self.observation_start
    }

    pub fn calendar(&self) -> Calendar {
        Calendar::new(self.model_start)
    }

    pub fn windows(&self) -> &[TransitionWindow] {
        &self.windows
    }

    /// Number of estimated plateau values (one per transition window).
    pub fn n_phases(&self) -> usize {
        self.windows.len()
    }

    /// All change-point offsets in model days, in increasing order.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.offsets.iter().flat_map(|&(a, b)| [a, b]).collect()
    }

    /// Index of the phase in effect at time `t` once all transitions that
    /// started by `t` are counted (0 = baseline, j = plateau j-1 or the
    /// transition into it).
    pub fn phases_started(&self, t: f64) -> usize {
        self.offsets.iter().take_while(|&&(end, _)| t >= end).count()
    }

    pub fn blend(&self, t: f64) -> Blend {
        let mut previous = Level::Baseline;
        for (j, &(end, start)) in self.offsets.iter().enumerate() {
            if t < end {
                return Blend::flat(previous);
            }
            if t < start {
                return Blend {
                    from: previous,
                    to: Level::Phase(j),
                    weight: (t - end) / (start - end),
                };
            }
            previous = Level::Phase(j);
        }
        Blend::flat(previous)
    }

    /// Monotonicity and window-length checks.
    pub fn validate(&self) -> Vec<ScheduleViolation> {
        let mut out = Vec::new();
        if self.observation_start < self.model_start {
            out.push(ScheduleViolation::ObservationBeforeModelStart {
                observation_start: self.observation_start,
                model_start: self.model_start,
            });
        }
        let mut prev: Option<NaiveDate> = None;
        for w in &self.windows {
            if w.next_start <= w.phase_end {
                out.push(ScheduleViolation::EmptyTransition {
                    phase_end: w.phase_end,
                    next_start: w.next_start,
                });
            }
            if let Some(p) = prev {
                if w.phase_end <= p {
                    out.push(ScheduleViolation::NonMonotone {
                        earlier: p,
                        later: w.phase_end,
                    });
                }
            }
            if w.phase_end < self.model_start {
                out.push(ScheduleViolation::BeforeModelStart { date: w.phase_end });
            }
            prev = Some(w.next_start);
        }
        out
    }
}

/// `f(t)` for plateau values `f` (one per transition window).
pub fn contact_fraction(t: f64, f: &[f64], sched: &DistancingSchedule) -> f64 {
    sched.blend(t).apply(f)
}

/// An inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateSegment {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestingSchedule {
    pub segments: Vec<DateSegment>,
}

impl TestingSchedule {
    pub fn new(segments: Vec<DateSegment>) -> Result<Self> {
        let sched = TestingSchedule { segments };
        let violations = sched.validate();
        if violations.is_empty() {
            Ok(sched)
        } else {
            let msg = violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::InvalidSchedule(msg))
        }
    }

    /// Testing eras of British Columbia 2020.
    pub fn bc_2020() -> Self {
        let s = |m1, d1, m2, d2| DateSegment {
            start: ymd(2020, m1, d1),
            end: ymd(2020, m2, d2),
        };
        TestingSchedule::new(vec![
            s(3, 1, 3, 15),
            s(3, 16, 4, 8),
            s(4, 9, 4, 20),
            s(4, 21, 12, 31),
        ])
        .expect("built-in schedule is valid")
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn start(&self) -> NaiveDate {
        self.segments[0].start
    }

    pub fn end(&self) -> NaiveDate {
        self.segments[self.segments.len() - 1].end
    }

    /// Segment containing `date`; dates after the last segment belong to it.
    pub fn segment_index(&self, date: NaiveDate) -> Result<usize> {
        if date < self.start() {
            return Err(Error::OutOfObservationWindow {
                date,
                start: self.start(),
            });
        }
        Ok(self
            .segments
            .iter()
            .position(|s| date <= s.end)
            .unwrap_or(self.segments.len() - 1))
    }

    pub fn validate(&self) -> Vec<ScheduleViolation> {
        let mut out = Vec::new();
        if self.segments.is_empty() {
            out.push(ScheduleViolation::NoSegments);
            return out;
        }
        for s in &self.segments {
            if s.end < s.start {
                out.push(ScheduleViolation::ReversedSegment {
                    start: s.start,
                    end: s.end,
                });
            }
        }
        for pair in self.segments.windows(2) {
            let expected = pair[0].end.succ_opt().expect("date in range");
            if pair[1].start > expected {
                out.push(ScheduleViolation::NonContiguous {
                    end: pair[0].end,
                    next_start: pair[1].start,
                });
            } else if pair[1].start < expected {
                out.push(ScheduleViolation::Overlapping {
                    end: pair[0].end,
                    next_start: pair[1].start,
                });
            }
        }
        out
    }
}

/// `psi(r)`: the testing fraction on `date`.
pub fn testing_fraction(date: NaiveDate, psi: &[f64], sched: &TestingSchedule) -> Result<f64> {
    Ok(psi[sched.segment_index(date)?])
}

/// Plateau contact fractions and testing fractions of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseValues {
    pub f: Vec<f64>,
    pub psi: Vec<f64>,
}

impl PhaseValues {
    pub fn new(f: Vec<f64>, psi: Vec<f64>) -> Result<Self> {
        if let Some(x) = f.iter().chain(&psi).find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidArgument(format!(
                "phase value {x} outside [0, 1]"
            )));
        }
        Ok(Self { f, psi })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleViolation {
    NonMonotone { earlier: NaiveDate, later: NaiveDate },
    EmptyTransition { phase_end: NaiveDate, next_start: NaiveDate },
    BeforeModelStart { date: NaiveDate },
    ObservationBeforeModelStart {
        observation_start: NaiveDate,
        model_start: NaiveDate,
    },
    NoSegments,
    ReversedSegment { start: NaiveDate, end: NaiveDate },
    NonContiguous { end: NaiveDate, next_start: NaiveDate },
    Overlapping { end: NaiveDate, next_start: NaiveDate },
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ScheduleViolation::*;
        match self {
            NonMonotone { earlier, later } => {
                write!(f, "non-monotone breakpoints: {later} does not follow {earlier}")
            }
            EmptyTransition {
                phase_end,
                next_start,
            } => write!(
                f,
                "non-monotone breakpoints: transition {phase_end} -> {next_start} has no positive length"
            ),
            BeforeModelStart { date } => write!(f, "breakpoint {date} precedes the model start"),
            ObservationBeforeModelStart {
                observation_start,
                model_start,
            } => write!(
                f,
                "observation start {observation_start} precedes model start {model_start}"
            ),
            NoSegments => write!(f, "testing schedule has no segments"),
            ReversedSegment { start, end } => write!(f, "segment {start}..{end} ends before it starts"),
            NonContiguous { end, next_start } => write!(
                f,
                "non-contiguous segments: gap between {end} and {next_start}"
            ),
            Overlapping { end, next_start } => write!(
                f,
                "overlapping segments: {next_start} starts on or before {end}"
            ),
        }
    }
}
