//! Statistical microbenchmarking.
//!
//! Measurements follow a fixed pipeline: calibrate the clock, warm the
//! benchmark up, pick an iteration count large enough for every sample to
//! span many clock ticks, collect samples, then bootstrap the mean and
//! standard deviation of the per-iteration time. Results are reported as
//! tables, JSON or CSV and can be compared across configurations.

pub mod abi;
pub mod clock;
pub mod env;
pub mod kernels;
pub mod registry;
pub mod report;
pub mod sampling;
pub mod stats;
pub mod suite;

pub use clock::{estimate_clock, Clock, ClockModel, ManualClock, MonotonicClock, ScriptedClock};
pub use kernels::{DType, DeviceBuffer, KernelConfig, Scalar, WorkerPool};
pub use registry::{BenchmarkDef, BenchmarkRecord, Registry, Runner, Verification};
pub use report::RunDocument;
pub use sampling::{MeasurementPlan, Sample, SampleSet, Sink};
pub use stats::{BenchmarkStats, BootstrapEstimate, OutlierCounts, Statistic};
