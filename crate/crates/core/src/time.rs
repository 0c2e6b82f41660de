//! Integer simulation clock.
//!
//! All simulated time is a count of base ticks of 10 µs. Timeslots and
//! reporting intervals are exact multiples of the tick, so ordering never
//! depends on floating-point rounding.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// Ticks per simulated second (base unit = 1e-5 s).
pub const TICKS_PER_SECOND: u64 = 100_000;

/// A point in (or span of) simulated time, in base ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_ticks(ticks: u64) -> Self {
        SimTime(ticks)
    }

    pub const fn ticks(self) -> u64 {
        self.0
    }

    /// Converts seconds to ticks, rounding to the nearest tick.
    pub fn from_secs_f64(secs: f64) -> Self {
        debug_assert!(secs >= 0.0 && secs.is_finite());
        SimTime((secs * TICKS_PER_SECOND as f64).round() as u64)
    }

    /// Like [`SimTime::from_secs_f64`] but refuses values that are not a
    /// whole number of ticks.
    pub fn try_from_secs_exact(secs: f64) -> Option<Self> {
        if !secs.is_finite() || secs < 0.0 {
            return None;
        }
        let scaled = secs * TICKS_PER_SECOND as f64;
        let rounded = scaled.round();
        if (scaled - rounded).abs() > 1e-6 * rounded.max(1.0) {
            return None;
        }
        Some(SimTime(rounded as u64))
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / TICKS_PER_SECOND as f64
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.as_secs_f64())
    }
}

/// Index of a synchronization timeslot `[s·τ, (s+1)·τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeslotIndex(pub u64);

/// Index of a metrics reporting interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntervalIndex(pub u64);

/// Fixed-width partition of the time axis (timeslots or metrics intervals).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotClock {
    width: SimTime,
}

impl SlotClock {
    pub fn new(width: SimTime) -> Self {
        assert!(width.0 > 0, "slot width must be positive");
        SlotClock { width }
    }

    pub fn width(&self) -> SimTime {
        self.width
    }

    /// Slot containing `t`; slots are half-open so a boundary tick belongs
    /// to the later slot.
    pub fn slot_of(&self, t: SimTime) -> TimeslotIndex {
        TimeslotIndex(t.0 / self.width.0)
    }

    pub fn start(&self, slot: TimeslotIndex) -> SimTime {
        SimTime(slot.0 * self.width.0)
    }

    pub fn end(&self, slot: TimeslotIndex) -> SimTime {
        SimTime((slot.0 + 1) * self.width.0)
    }

    /// Number of slots needed to cover `horizon`.
    pub fn slots_to_cover(&self, horizon: SimTime) -> u64 {
        horizon.0.div_ceil(self.width.0)
    }
}
