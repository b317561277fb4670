//! Turning a closure into resolvable timing samples.
//!
//! The pipeline for one benchmark is: [`warmup`] to estimate the cost of a
//! single invocation, [`estimate_iterations`] to pick how many invocations a
//! sample must batch so that it spans at least `resolution_multiple` clock
//! ticks, then [`collect_samples`] (or [`measure_advanced`] when per-sample
//! setup must stay outside the timed region).
//!
//! The iteration count is frozen once estimated: every sample in a
//! [`SampleSet`] covers the same number of invocations.

use std::hint::black_box;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, ClockModel};

/// Error type produced by benchmark bodies.
pub type BoxError = Box<dyn std::error::Error + Send + Sync + 'static>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPlan {
    pub samples: usize,
    pub resamples: usize,
    pub confidence: f64,
    pub warmup_time_ns: u64,
    pub resolution_multiple: u64,
}

impl Default for MeasurementPlan {
    fn default() -> Self {
        MeasurementPlan {
            samples: 100,
            resamples: 100_000,
            confidence: 0.95,
            warmup_time_ns: 100_000_000,
            resolution_multiple: 100,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("need at least 1 resample")]
    NoResamples,
    #[error("confidence must lie strictly between 0 and 1, got {0}")]
    BadConfidence(f64),
    #[error("resolution multiple must be at least 1")]
    BadResolutionMultiple,
}

impl MeasurementPlan {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.samples < 2 {
            return Err(PlanError::TooFewSamples(self.samples));
        }
        if self.resamples < 1 {
            return Err(PlanError::NoResamples);
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(PlanError::BadConfidence(self.confidence));
        }
        if self.resolution_multiple < 1 {
            return Err(PlanError::BadResolutionMultiple);
        }
        Ok(())
    }

    /// Smallest elapsed time a sample must cover to be resolvable.
    pub fn resolvable_floor_ns(&self, clock: &ClockModel) -> f64 {
        self.resolution_multiple as f64 * clock.resolution_ns()
    }
}

/// One timed batch of `iterations` consecutive invocations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub total_elapsed_ns: u64,
    pub iterations: u64,
}

impl Sample {
    pub fn per_iteration_ns(&self) -> f64 {
        self.total_elapsed_ns as f64 / self.iterations as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    pub iterations_per_sample: u64,
    pub clock: ClockModel,
}

impl SampleSet {
    /// Per-iteration time of every sample, in collection order.
    pub fn per_iteration_ns(&self) -> Vec<f64> {
        self.samples.iter().map(Sample::per_iteration_ns).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Consumes benchmark results through [`std::hint::black_box`] so the
/// optimizer cannot treat the computation that produced them as dead.
#[derive(Debug, Default)]
pub struct Sink {
    consumed: u64,
}

impl Sink {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline(always)]
    pub fn consume<T>(&mut self, value: T) {
        black_box(value);
        self.consumed += 1;
    }

    /// Number of values consumed so far.
    pub fn consumed(&self) -> u64 {
        self.consumed
    }
}

/// Which part of a measurement failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Setup,
    Body,
    Teardown,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Warmup => "warmup",
            Phase::Setup => "setup",
            Phase::Body => "timed body",
            Phase::Teardown => "teardown",
        })
    }
}

#[derive(Debug, Error)]
#[error("{phase} failed in sample {sample}: {source}")]
pub struct SampleError {
    pub phase: Phase,
    pub sample: usize,
    #[source]
    pub source: BoxError,
}

impl SampleError {
    fn new(phase: Phase, sample: usize, source: BoxError) -> Self {
        SampleError { phase, sample, source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmupEstimate {
    /// Mean duration of one invocation observed during warmup.
    pub per_invocation_ns: f64,
    pub invocations: u64,
}

/// Invokes `body` until at least `plan.warmup_time_ns` has elapsed (and at
/// least once), returning the mean observed cost per invocation.
pub fn warmup<T, F, C>(mut body: F, plan: &MeasurementPlan, clock: &C) -> Result<WarmupEstimate, SampleError>
where
    F: FnMut() -> Result<T, BoxError>,
    C: Clock + ?Sized,
{
    let start = clock.now();
    let mut invocations = 0u64;
    loop {
        let value = body().map_err(|e| SampleError::new(Phase::Warmup, 0, e))?;
        black_box(value);
        invocations += 1;
        let elapsed = clock.now().saturating_sub(start);
        if elapsed >= plan.warmup_time_ns {
            return Ok(WarmupEstimate {
                per_invocation_ns: elapsed as f64 / invocations as f64,
                invocations,
            });
        }
    }
}

/// Warmup for setup/teardown benchmarks. Only the timed body contributes to
/// the estimate; the warmup budget counts everything up to the end of each
/// timed region.
pub fn warmup_advanced<S: ?Sized, T, C>(
    state: &mut S,
    mut setup: impl FnMut(&mut S) -> Result<(), BoxError>,
    mut timed: impl FnMut(&mut S) -> Result<T, BoxError>,
    mut teardown: impl FnMut(&mut S) -> Result<(), BoxError>,
    plan: &MeasurementPlan,
    clock: &C,
) -> Result<WarmupEstimate, SampleError>
where
    C: Clock + ?Sized,
{
    let start = clock.now();
    let mut timed_total = 0u64;
    let mut invocations = 0u64;
    loop {
        let warm = |e| SampleError::new(Phase::Warmup, 0, e);
        setup(state).map_err(warm)?;
        let t0 = clock.now();
        let value = timed(state).map_err(warm)?;
        let t1 = clock.now();
        black_box(value);
        teardown(state).map_err(warm)?;
        timed_total += t1.saturating_sub(t0);
        invocations += 1;
        if t1.saturating_sub(start) >= plan.warmup_time_ns {
            return Ok(WarmupEstimate {
                per_invocation_ns: timed_total as f64 / invocations as f64,
                invocations,
            });
        }
    }
}

/// Smallest `k >= 1` with `k * max(per_invocation_ns, 1) >= resolution_multiple * resolution`.
pub fn estimate_iterations(per_invocation_ns: f64, clock: &ClockModel, plan: &MeasurementPlan) -> u64 {
    let cost = if per_invocation_ns.is_finite() {
        per_invocation_ns.max(1.0)
    } else {
        1.0
    };
    let floor = plan.resolvable_floor_ns(clock);
    let mut k = (floor / cost).ceil().max(1.0) as u64;
    // Correct for rounding in the division.
    while (k as f64) * cost < floor {
        k += 1;
    }
    while k > 1 && ((k - 1) as f64) * cost >= floor {
        k -= 1;
    }
    k
}

/// Collects `plan.samples` samples of `k` invocations each. Every result is
/// passed to `sink`.
pub fn collect_samples<T, F, C>(
    mut body: F,
    k: u64,
    plan: &MeasurementPlan,
    clock: &C,
    model: &ClockModel,
    sink: &mut Sink,
) -> Result<SampleSet, SampleError>
where
    F: FnMut() -> Result<T, BoxError>,
    C: Clock + ?Sized,
{
    assert!(k >= 1, "iteration count must be at least 1");
    let mut samples = Vec::with_capacity(plan.samples);
    for index in 0..plan.samples {
        let start = clock.now();
        for _ in 0..k {
            match body() {
                Ok(v) => sink.consume(v),
                Err(e) => return Err(SampleError::new(Phase::Body, index, e)),
            }
        }
        let end = clock.now();
        samples.push(Sample {
            total_elapsed_ns: end.saturating_sub(start),
            iterations: k,
        });
    }
    Ok(SampleSet {
        samples,
        iterations_per_sample: k,
        clock: *model,
    })
}

/// Like [`collect_samples`], but runs `setup` before and `teardown` after
/// each sample. The clock reads bracket only the `k` invocations of `timed`.
#[allow(clippy::too_many_arguments)]
pub fn measure_advanced<S: ?Sized, T, C>(
    state: &mut S,
    mut setup: impl FnMut(&mut S) -> Result<(), BoxError>,
    mut timed: impl FnMut(&mut S) -> Result<T, BoxError>,
    mut teardown: impl FnMut(&mut S) -> Result<(), BoxError>,
    k: u64,
    plan: &MeasurementPlan,
    clock: &C,
    model: &ClockModel,
    sink: &mut Sink,
) -> Result<SampleSet, SampleError>
where
    C: Clock + ?Sized,
{
    assert!(k >= 1, "iteration count must be at least 1");
    let mut samples = Vec::with_capacity(plan.samples);
    for index in 0..plan.samples {
        setup(state).map_err(|e| SampleError::new(Phase::Setup, index, e))?;
        let start = clock.now();
        for _ in 0..k {
            match timed(state) {
                Ok(v) => sink.consume(v),
                Err(e) => return Err(SampleError::new(Phase::Body, index, e)),
            }
        }
        let end = clock.now();
        teardown(state).map_err(|e| SampleError::new(Phase::Teardown, index, e))?;
        samples.push(Sample {
            total_elapsed_ns: end.saturating_sub(start),
            iterations: k,
        });
    }
    Ok(SampleSet {
        samples,
        iterations_per_sample: k,
        clock: *model,
    })
}
