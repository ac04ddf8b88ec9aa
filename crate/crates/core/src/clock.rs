//! Pluggable time source.
//!
//! Artifacts carry wall-clock timestamps and elapsed times. A [`FixedClock`]
//! pins both so scripted runs can be compared byte for byte.

use std::time::Instant;

use chrono::{DateTime, NaiveDate, Utc};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;

    /// Monotonic reading in seconds, only meaningful as a difference.
    fn seconds(&self) -> f64;

    fn today(&self) -> NaiveDate {
        self.now().date_naive()
    }
}

#[derive(Debug)]
pub struct WallClock {
    origin: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn seconds(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Always reports the same instant; every measured interval is zero.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock {
    at: DateTime<Utc>,
}

impl FixedClock {
    pub fn new(at: DateTime<Utc>) -> Self {
        Self { at }
    }

    /// Midnight UTC of `date`.
    pub fn at_date(date: NaiveDate) -> Self {
        Self::new(date.and_hms_opt(0, 0, 0).unwrap().and_utc())
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.at
    }

    fn seconds(&self) -> f64 {
        0.0
    }
}

/// Measures an interval against any [`Clock`].
pub struct Stopwatch<'a> {
    clock: &'a dyn Clock,
    start: f64,
}

impl<'a> Stopwatch<'a> {
    pub fn start(clock: &'a dyn Clock) -> Self {
        Self {
            clock,
            start: clock.seconds(),
        }
    }

    pub fn elapsed_seconds(&self) -> f64 {
        (self.clock.seconds() - self.start).max(0.0)
    }
}
