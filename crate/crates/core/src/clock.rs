//! Monotonic clocks and clock calibration.
//!
//! Every measurement in the crate reads time through the [`Clock`] trait. In
//! production this is [`MonotonicClock`]; tests inject [`ManualClock`] or
//! [`ScriptedClock`] so that every downstream statistic is reproducible.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nanosecond timestamps from a monotonic source.
pub trait Clock {
    /// Current timestamp in nanoseconds. Non-decreasing across calls on one thread.
    fn now(&self) -> u64;
}

impl<C: Clock + ?Sized> Clock for &C {
    fn now(&self) -> u64 {
        (**self).now()
    }
}

impl<C: Clock + ?Sized> Clock for Arc<C> {
    fn now(&self) -> u64 {
        (**self).now()
    }
}

impl<C: Clock + ?Sized> Clock for Box<C> {
    fn now(&self) -> u64 {
        (**self).now()
    }
}

/// The process monotonic clock, reported relative to construction.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        MonotonicClock { origin: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    #[inline]
    fn now(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }
}

/// A clock that only moves when told to.
///
/// Clones share the same time, so a benchmark body can hold a clone and
/// [`advance`](ManualClock::advance) it to simulate its own cost. An optional
/// `tick` is added after every read, modelling a timer with nonzero cost.
#[derive(Debug, Clone, Default)]
pub struct ManualClock {
    now: Arc<AtomicU64>,
    tick: u64,
    reads: Arc<AtomicU64>,
}

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every read advances the clock by `tick` nanoseconds after returning.
    pub fn with_tick(tick: u64) -> Self {
        ManualClock {
            tick,
            ..Self::default()
        }
    }

    pub fn advance(&self, ns: u64) {
        self.now.fetch_add(ns, Ordering::SeqCst);
    }

    /// Number of times `now()` has been called on this clock or any clone.
    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::SeqCst)
    }
}

impl Clock for ManualClock {
    fn now(&self) -> u64 {
        self.reads.fetch_add(1, Ordering::SeqCst);
        self.now.fetch_add(self.tick, Ordering::SeqCst)
    }
}

/// A clock that advances by a fixed, cyclic sequence of deltas: the first
/// read returns 0 and read `i + 1` returns read `i` plus `deltas[i % len]`.
#[derive(Debug)]
pub struct ScriptedClock {
    deltas: Vec<u64>,
    now: AtomicU64,
    cursor: AtomicUsize,
}

impl ScriptedClock {
    pub fn new(deltas: impl Into<Vec<u64>>) -> Self {
        let deltas = deltas.into();
        assert!(!deltas.is_empty(), "scripted clock needs at least one delta");
        ScriptedClock {
            deltas,
            now: AtomicU64::new(0),
            cursor: AtomicUsize::new(0),
        }
    }

    /// A clock that advances by `step` nanoseconds per query.
    pub fn constant(step: u64) -> Self {
        Self::new(vec![step])
    }
}

impl Clock for ScriptedClock {
    fn now(&self) -> u64 {
        let i = self.cursor.fetch_add(1, Ordering::SeqCst);
        let delta = self.deltas[i % self.deltas.len()];
        self.now.fetch_add(delta, Ordering::SeqCst)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClockError {
    #[error("clock did not advance over {reps} consecutive reads")]
    ClockUnusable { reps: usize },
    #[error("clock calibration needs at least {min} repetitions, got {got}")]
    TooFewReps { min: usize, got: usize },
    #[error("invalid clock model: {0}")]
    InvalidModel(String),
}

/// Minimum number of calibration repetitions accepted by [`estimate_clock`].
pub const MIN_CALIBRATION_REPS: usize = 100;

/// Measured properties of a clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    resolution_ns: f64,
    timer_cost_ns: f64,
    calibration_reps: usize,
}

impl ClockModel {
    /// Builds a model after checking `resolution_ns > 0` and
    /// `0 <= timer_cost_ns <= 1000 * resolution_ns`.
    pub fn new(resolution_ns: f64, timer_cost_ns: f64, calibration_reps: usize) -> Result<Self, ClockError> {
        if !(resolution_ns.is_finite() && resolution_ns > 0.0) {
            return Err(ClockError::InvalidModel(format!(
                "resolution must be positive, got {resolution_ns}"
            )));
        }
        if !(timer_cost_ns.is_finite() && timer_cost_ns >= 0.0) {
            return Err(ClockError::InvalidModel(format!(
                "timer cost must be non-negative, got {timer_cost_ns}"
            )));
        }
        if timer_cost_ns > resolution_ns * 1000.0 {
            return Err(ClockError::InvalidModel(format!(
                "timer cost {timer_cost_ns} ns exceeds 1000x resolution {resolution_ns} ns"
            )));
        }
        Ok(ClockModel {
            resolution_ns,
            timer_cost_ns,
            calibration_reps,
        })
    }

    pub fn resolution_ns(&self) -> f64 {
        self.resolution_ns
    }

    pub fn timer_cost_ns(&self) -> f64 {
        self.timer_cost_ns
    }

    pub fn calibration_reps(&self) -> usize {
        self.calibration_reps
    }
}

/// Calibrates `clock`.
///
/// Resolution is the median of the nonzero deltas between `calibration_reps + 1`
/// consecutive reads. Timer cost is the median, over a few batches, of the
/// elapsed time per read in a tight loop of `calibration_reps` reads.
pub fn estimate_clock<C: Clock + ?Sized>(clock: &C, calibration_reps: usize) -> Result<ClockModel, ClockError> {
    if calibration_reps < MIN_CALIBRATION_REPS {
        return Err(ClockError::TooFewReps {
            min: MIN_CALIBRATION_REPS,
            got: calibration_reps,
        });
    }

    let mut deltas = Vec::with_capacity(calibration_reps);
    let mut prev = clock.now();
    for _ in 0..calibration_reps {
        let t = clock.now();
        let d = t.saturating_sub(prev);
        if d > 0 {
            deltas.push(d as f64);
        }
        prev = t;
    }
    if deltas.is_empty() {
        return Err(ClockError::ClockUnusable { reps: calibration_reps });
    }
    let resolution = median(&mut deltas);

    const COST_BATCHES: usize = 11;
    let mut costs = Vec::with_capacity(COST_BATCHES);
    for _ in 0..COST_BATCHES {
        let start = clock.now();
        for _ in 0..calibration_reps {
            std::hint::black_box(clock.now());
        }
        let end = clock.now();
        // calibration_reps inner reads plus the closing read.
        costs.push(end.saturating_sub(start) as f64 / (calibration_reps + 1) as f64);
    }
    let cost = median(&mut costs).min(resolution * 1000.0);

    ClockModel::new(resolution, cost, calibration_reps)
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 0 {
        (xs[mid - 1] + xs[mid]) / 2.0
    } else {
        xs[mid]
    }
}
