//! Bootstrap estimates over per-iteration sample times.
//!
//! # Resampling stream
//!
//! Resampling is driven by a [`ChaCha8Rng`] seeded with
//! `ChaCha8Rng::seed_from_u64(seed)`. For each of the `resamples` rounds, `n`
//! indices are drawn in order, each as the high 64 bits of
//! `next_u64() as u128 * n as u128` (a multiply-shift reduction into
//! `0..n`). The statistic of each round is computed over the drawn values in
//! draw order. Confidence bounds are the percentiles at `(1 - c) / 2` and
//! `1 - (1 - c) / 2` of the sorted round statistics, interpolated linearly
//! between order statistics (position `q * (m - 1)`).
//!
//! This contract is stable: the same inputs and seed reproduce the same
//! estimate bit for bit on every platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("need at least one resample")]
    NoResamples,
    #[error("confidence must lie strictly between 0 and 1, got {0}")]
    BadConfidence(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    StdDev,
}

impl Statistic {
    pub fn compute(self, xs: &[f64]) -> Result<f64, StatsError> {
        match self {
            Statistic::Mean => point_mean(xs),
            Statistic::StdDev => point_stddev(xs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
}

impl BootstrapEstimate {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }

    pub fn overlaps(&self, other: &BootstrapEstimate) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkStats {
    pub mean: BootstrapEstimate,
    pub std_dev: BootstrapEstimate,
    pub sample_count: usize,
    pub resample_count: usize,
    pub rng_seed: u64,
}

/// Arithmetic mean, summed in input order.
pub fn point_mean(xs: &[f64]) -> Result<f64, StatsError> {
    if xs.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation (n - 1 denominator).
///
/// Two-pass over values shifted by the first element, so constant input
/// yields exactly zero.
pub fn point_stddev(xs: &[f64]) -> Result<f64, StatsError> {
    if xs.len() < 2 {
        return Err(StatsError::InsufficientData {
            needed: 2,
            got: xs.len(),
        });
    }
    Ok(stddev_unchecked(xs.iter().copied(), xs[0], xs.len()))
}

fn stddev_unchecked(xs: impl Iterator<Item = f64> + Clone, shift: f64, n: usize) -> f64 {
    let mean_shifted = xs.clone().map(|x| x - shift).sum::<f64>() / n as f64;
    let ss: f64 = xs
        .map(|x| {
            let d = (x - shift) - mean_shifted;
            d * d
        })
        .sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Percentile of already sorted data with linear interpolation between order
/// statistics.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Draws the stream of resample indices described in the module docs.
pub struct ResampleStream {
    rng: ChaCha8Rng,
    n: u64,
}

impl ResampleStream {
    pub fn new(seed: u64, n: usize) -> Self {
        ResampleStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            n: n as u64,
        }
    }

    #[inline]
    pub fn next_index(&mut self) -> usize {
        ((self.rng.next_u64() as u128 * self.n as u128) >> 64) as usize
    }

    /// Fills `out` with one resample of `xs`.
    pub fn resample_into(&mut self, xs: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..xs.len()).map(|_| xs[self.next_index()]));
    }
}

fn check_inputs(xs: &[f64], resamples: usize, confidence: f64) -> Result<(), StatsError> {
    if xs.len() < 2 {
        return Err(StatsError::InsufficientData {
            needed: 2,
            got: xs.len(),
        });
    }
    if resamples < 1 {
        return Err(StatsError::NoResamples);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::BadConfidence(confidence));
    }
    Ok(())
}

/// The statistic of every resample round, in round order (unsorted).
pub fn bootstrap_distribution(
    xs: &[f64],
    statistic: Statistic,
    resamples: usize,
    seed: u64,
) -> Result<Vec<f64>, StatsError> {
    check_inputs(xs, resamples, 0.5)?;
    let mut stream = ResampleStream::new(seed, xs.len());
    let mut buf = Vec::with_capacity(xs.len());
    let mut dist = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        stream.resample_into(xs, &mut buf);
        dist.push(statistic.compute(&buf)?);
    }
    Ok(dist)
}

fn estimate_from(point: f64, mut dist: Vec<f64>, confidence: f64) -> BootstrapEstimate {
    dist.sort_by(f64::total_cmp);
    let alpha = (1.0 - confidence) / 2.0;
    BootstrapEstimate {
        point,
        lower: percentile_sorted(&dist, alpha),
        upper: percentile_sorted(&dist, 1.0 - alpha),
        confidence,
    }
}

/// Percentile bootstrap of `statistic` over `xs`.
pub fn bootstrap(
    xs: &[f64],
    statistic: Statistic,
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> Result<BootstrapEstimate, StatsError> {
    check_inputs(xs, resamples, confidence)?;
    let point = statistic.compute(xs)?;
    let dist = bootstrap_distribution(xs, statistic, resamples, seed)?;
    Ok(estimate_from(point, dist, confidence))
}

/// Bootstraps mean and standard deviation together. Both statistics are
/// computed on the same resample rounds, so each matches a standalone
/// [`bootstrap`] call with the same seed.
pub fn analyze(xs: &[f64], resamples: usize, confidence: f64, seed: u64) -> Result<BenchmarkStats, StatsError> {
    check_inputs(xs, resamples, confidence)?;
    let mut stream = ResampleStream::new(seed, xs.len());
    let mut buf = Vec::with_capacity(xs.len());
    let mut means = Vec::with_capacity(resamples);
    let mut sds = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        stream.resample_into(xs, &mut buf);
        means.push(point_mean(&buf)?);
        sds.push(point_stddev(&buf)?);
    }
    Ok(BenchmarkStats {
        mean: estimate_from(point_mean(xs)?, means, confidence),
        std_dev: estimate_from(point_stddev(xs)?, sds, confidence),
        sample_count: xs.len(),
        resample_count: resamples,
        rng_seed: seed,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlierCounts {
    pub low_severe: usize,
    pub low_mild: usize,
    pub high_mild: usize,
    pub high_severe: usize,
}

impl OutlierCounts {
    pub fn total(&self) -> usize {
        self.low_severe + self.low_mild + self.high_mild + self.high_severe
    }
}

/// Tukey-fence outlier classification. Mild outliers fall outside
/// `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`, severe ones outside `[Q1 - 3 IQR, Q3 + 3 IQR]`.
pub fn classify_outliers(xs: &[f64]) -> Result<OutlierCounts, StatsError> {
    if xs.len() < 4 {
        return Err(StatsError::InsufficientData {
            needed: 4,
            got: xs.len(),
        });
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = percentile_sorted(&sorted, 0.25);
    let q3 = percentile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (low_severe, low_mild) = (q1 - 3.0 * iqr, q1 - 1.5 * iqr);
    let (high_mild, high_severe) = (q3 + 1.5 * iqr, q3 + 3.0 * iqr);

    let mut counts = OutlierCounts::default();
    for &x in &sorted {
        if x < low_severe {
            counts.low_severe += 1;
        } else if x < low_mild {
            counts.low_mild += 1;
        } else if x > high_severe {
            counts.high_severe += 1;
        } else if x > high_mild {
            counts.high_mild += 1;
        }
    }
    Ok(counts)
}
