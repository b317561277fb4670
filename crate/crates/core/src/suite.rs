//! The kernel benchmark suite: each kernel family wrapped as a
//! [`BenchmarkDef`] whose verifier checks the final output against a serial
//! single-threaded reference.
//!
//! Inputs are regenerated from the configuration seed, so verifiers never
//! share buffers with the routine they check. Operand seeds: `x`/`src`/`A`
//! use `seed`, `y`/`B` use `seed + 1`, GEMM's `C` uses `seed + 2`.

use thiserror::Error;

use crate::clock::ManualClock;
use crate::kernels::{self, reference, DType, DeviceBuffer, KernelConfig, Scalar, WorkerPool, THREADS_PER_TEAM};
use crate::registry::{BenchmarkDef, Mode, Output, Routine};
use crate::sampling::BoxError;

pub const ARRAY_INIT: &str = "array_init";
pub const ZAXPY: &str = "zaxpy";
pub const ATOMIC_CAPTURE: &str = "atomic_capture";
pub const ATOMIC_UPDATE: &str = "atomic_update";
pub const GEMM: &str = "gemm";

pub const FAMILIES: [&str; 5] = [ARRAY_INIT, ZAXPY, ATOMIC_CAPTURE, ATOMIC_UPDATE, GEMM];

/// Seed used for kernel inputs in the default suite.
pub const DEFAULT_INPUT_SEED: u64 = 2024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SuiteError {
    #[error("unknown kernel family {0:?}")]
    UnknownFamily(String),
    #[error(transparent)]
    Kernel(#[from] kernels::KernelError),
}

/// The zaxpy scale factor for a datatype.
pub fn zaxpy_factor(dtype: DType) -> Scalar {
    match dtype {
        DType::F64 => Scalar::F64(2.5),
        DType::F32 => Scalar::F32(2.5),
        DType::I32 => Scalar::I32(3),
    }
}

/// GEMM `(alpha, beta)`: `(1, 0.5)` for floats, `(1, 1)` for integers.
pub fn gemm_scalars(dtype: DType) -> (Scalar, Scalar) {
    match dtype {
        DType::F64 => (Scalar::F64(1.0), Scalar::F64(0.5)),
        DType::F32 => (Scalar::F32(1.0), Scalar::F32(0.5)),
        DType::I32 => (Scalar::I32(1), Scalar::I32(1)),
    }
}

/// Machine epsilon of the datatype, zero for integers.
pub fn epsilon(dtype: DType) -> f64 {
    match dtype {
        DType::F64 => f64::EPSILON,
        DType::F32 => f32::EPSILON as f64,
        DType::I32 => 0.0,
    }
}

/// Per-element relative tolerance used when verifying GEMM.
pub fn gemm_tolerance(dtype: DType) -> f64 {
    match dtype {
        DType::F64 => 1e-12,
        DType::F32 => 1e-4,
        DType::I32 => 0.0,
    }
}

struct ArrayInit {
    cfg: KernelConfig,
    pool: WorkerPool,
    buf: DeviceBuffer,
}

impl Routine for ArrayInit {
    fn run(&mut self) -> Result<f64, BoxError> {
        Ok(kernels::array_init(&mut self.buf, &self.cfg, &self.pool)?)
    }

    fn reset(&mut self) {
        self.buf = DeviceBuffer::random(self.cfg.dtype, self.cfg.n, self.cfg.seed);
    }

    fn output(&self) -> Output {
        Output::Buffer(self.buf.clone())
    }
}

struct Zaxpy {
    cfg: KernelConfig,
    pool: WorkerPool,
    x: DeviceBuffer,
    y: DeviceBuffer,
    z: DeviceBuffer,
}

impl Routine for Zaxpy {
    fn run(&mut self) -> Result<f64, BoxError> {
        let a = zaxpy_factor(self.cfg.dtype);
        Ok(kernels::zaxpy(&mut self.z, &self.x, &self.y, a, &self.cfg, &self.pool)?)
    }

    fn reset(&mut self) {
        self.z.fill(0.0);
    }

    fn output(&self) -> Output {
        Output::Buffer(self.z.clone())
    }
}

struct AtomicCapture {
    cfg: KernelConfig,
    pool: WorkerPool,
    src: DeviceBuffer,
    out: DeviceBuffer,
    count: usize,
}

impl Routine for AtomicCapture {
    fn run(&mut self) -> Result<f64, BoxError> {
        self.count = kernels::atomic_capture(&self.src, &mut self.out, &self.cfg, &self.pool)?;
        Ok(self.count as f64)
    }

    fn reset(&mut self) {
        self.out.fill(0.0);
        self.count = 0;
    }

    fn output(&self) -> Output {
        Output::Captured {
            count: self.count,
            values: self.out.prefix(self.count),
        }
    }
}

struct AtomicUpdate {
    cfg: KernelConfig,
    pool: WorkerPool,
    src: DeviceBuffer,
    last: Option<Scalar>,
}

impl Routine for AtomicUpdate {
    fn run(&mut self) -> Result<f64, BoxError> {
        let sum = kernels::atomic_update(&self.src, &self.cfg, &self.pool);
        self.last = Some(sum);
        Ok(sum.as_f64())
    }

    fn output(&self) -> Output {
        self.last.map_or(Output::None, Output::Scalar)
    }
}

struct Gemm {
    cfg: KernelConfig,
    pool: WorkerPool,
    a: DeviceBuffer,
    b: DeviceBuffer,
    c: DeviceBuffer,
    c_initial: DeviceBuffer,
}

impl Routine for Gemm {
    fn run(&mut self) -> Result<f64, BoxError> {
        let (alpha, beta) = gemm_scalars(self.cfg.dtype);
        Ok(kernels::gemm(
            &self.a,
            &self.b,
            &mut self.c,
            self.cfg.n,
            alpha,
            beta,
            &self.cfg,
            &self.pool,
        )?)
    }

    fn reset(&mut self) {
        self.c.clone_from(&self.c_initial);
    }

    fn output(&self) -> Output {
        Output::Buffer(self.c.clone())
    }
}

fn expect_buffer(out: &Output) -> Result<&DeviceBuffer, String> {
    match out {
        Output::Buffer(b) => Ok(b),
        other => Err(format!("expected an output buffer, got {other:?}")),
    }
}

fn first_mismatch(got: &DeviceBuffer, want: &DeviceBuffer, tol: f64) -> Result<(), String> {
    if got.dtype() != want.dtype() || got.len() != want.len() {
        return Err(format!(
            "output shape {}x{} differs from reference {}x{}",
            got.dtype(),
            got.len(),
            want.dtype(),
            want.len()
        ));
    }
    let (g, w) = (got.to_f64_vec(), want.to_f64_vec());
    for (i, (&g, &w)) in g.iter().zip(&w).enumerate() {
        let ok = if tol == 0.0 {
            g == w
        } else {
            (g - w).abs() <= tol * w.abs().max(f64::MIN_POSITIVE)
        };
        if !ok {
            return Err(format!("element {i}: got {g}, expected {w}"));
        }
    }
    Ok(())
}

/// Checks an [`Output::Captured`] against the positive elements of `src`.
pub fn check_capture(out: &Output, src: &DeviceBuffer) -> Result<(), String> {
    let Output::Captured { count, values } = out else {
        return Err(format!("expected captured values, got {out:?}"));
    };
    let mut want = reference::positives(src);
    if *count != want.len() {
        return Err(format!("captured {count} values, expected {}", want.len()));
    }
    let mut got = values.to_f64_vec();
    got.sort_by(f64::total_cmp);
    want.sort_by(f64::total_cmp);
    if got != want {
        return Err("captured values differ from the positive source elements".into());
    }
    Ok(())
}

/// Checks an atomic-update sum: exact for integers, within
/// `n * eps * sum(|x|)` of a compensated serial sum for floats.
pub fn check_sum(out: &Output, src: &DeviceBuffer) -> Result<(), String> {
    let Output::Scalar(sum) = out else {
        return Err(format!("expected a scalar sum, got {out:?}"));
    };
    let (want, abs_sum) = reference::sum(src);
    let bound = src.len() as f64 * epsilon(src.dtype()) * abs_sum;
    let err = (sum.as_f64() - want).abs();
    if err > bound {
        return Err(format!(
            "sum {} differs from reference {want} by {err} (bound {bound})",
            sum.as_f64()
        ));
    }
    Ok(())
}

/// Builds the benchmark for one kernel family and configuration.
pub fn kernel_benchmark(family: &str, cfg: KernelConfig) -> Result<BenchmarkDef, SuiteError> {
    let (dtype, n, seed) = (cfg.dtype, cfg.n, cfg.seed);
    let def = match family {
        ARRAY_INIT => BenchmarkDef::new(ARRAY_INIT, cfg, Mode::Simple, move || {
            Ok(ArrayInit {
                cfg,
                pool: WorkerPool::for_config(&cfg),
                buf: DeviceBuffer::random(dtype, n, seed),
            })
        })
        .with_verifier(move |out| {
            let buf = expect_buffer(out)?;
            first_mismatch(buf, &DeviceBuffer::zeroed(dtype, n), 0.0)
        }),
        ZAXPY => BenchmarkDef::new(ZAXPY, cfg, Mode::Simple, move || {
            Ok(Zaxpy {
                cfg,
                pool: WorkerPool::for_config(&cfg),
                x: DeviceBuffer::random(dtype, n, seed),
                y: DeviceBuffer::random(dtype, n, seed.wrapping_add(1)),
                z: DeviceBuffer::zeroed(dtype, n),
            })
        })
        .with_verifier(move |out| {
            let x = DeviceBuffer::random(dtype, n, seed);
            let y = DeviceBuffer::random(dtype, n, seed.wrapping_add(1));
            first_mismatch(expect_buffer(out)?, &reference::zaxpy(&x, &y, zaxpy_factor(dtype)), 0.0)
        }),
        ATOMIC_CAPTURE => BenchmarkDef::new(ATOMIC_CAPTURE, cfg, Mode::Simple, move || {
            Ok(AtomicCapture {
                cfg,
                pool: WorkerPool::for_config(&cfg),
                src: DeviceBuffer::random(dtype, n, seed),
                out: DeviceBuffer::zeroed(dtype, n),
                count: 0,
            })
        })
        .with_verifier(move |out| check_capture(out, &DeviceBuffer::random(dtype, n, seed))),
        ATOMIC_UPDATE => BenchmarkDef::new(ATOMIC_UPDATE, cfg, Mode::Simple, move || {
            Ok(AtomicUpdate {
                cfg,
                pool: WorkerPool::for_config(&cfg),
                src: DeviceBuffer::random(dtype, n, seed),
                last: None,
            })
        })
        .with_verifier(move |out| check_sum(out, &DeviceBuffer::random(dtype, n, seed))),
        GEMM => BenchmarkDef::new(GEMM, cfg, Mode::Simple, move || {
            let c = DeviceBuffer::random(dtype, n * n, seed.wrapping_add(2));
            Ok(Gemm {
                cfg,
                pool: WorkerPool::for_config(&cfg),
                a: DeviceBuffer::random(dtype, n * n, seed),
                b: DeviceBuffer::random(dtype, n * n, seed.wrapping_add(1)),
                c_initial: c.clone(),
                c,
            })
        })
        .with_verifier(move |out| {
            let a = DeviceBuffer::random(dtype, n * n, seed);
            let b = DeviceBuffer::random(dtype, n * n, seed.wrapping_add(1));
            let c = DeviceBuffer::random(dtype, n * n, seed.wrapping_add(2));
            let (alpha, beta) = gemm_scalars(dtype);
            let want = reference::gemm(&a, &b, &c, n, alpha, beta);
            first_mismatch(expect_buffer(out)?, &want, gemm_tolerance(dtype))
        }),
        other => return Err(SuiteError::UnknownFamily(other.to_string())),
    };
    Ok(def)
}

/// Configuration with enough teams to cover the family's work items
/// (elements, or output elements for GEMM).
pub fn covering_config(
    family: &str,
    dtype: DType,
    n: usize,
    threads_per_team: usize,
    seed: u64,
) -> Result<KernelConfig, SuiteError> {
    let work = if family == GEMM { n * n } else { n };
    Ok(KernelConfig::covering(dtype, n, work, threads_per_team, seed)?)
}

/// Element counts of the vector kernels in the default suite.
pub const DEFAULT_SIZES: [usize; 3] = [1 << 12, 1 << 16, 1 << 20];
/// Matrix sides of the GEMM benchmarks in the default suite.
pub const DEFAULT_GEMM_SIDES: [usize; 2] = [128, 256];

/// Every vector kernel over all datatypes, [`DEFAULT_SIZES`] and
/// threads-per-team values, plus GEMM at 256 threads per team.
pub fn default_suite() -> Vec<BenchmarkDef> {
    let mut defs = Vec::new();
    for family in [ARRAY_INIT, ZAXPY, ATOMIC_CAPTURE, ATOMIC_UPDATE] {
        for dtype in DType::ALL {
            for n in DEFAULT_SIZES {
                for tpb in THREADS_PER_TEAM {
                    let cfg = covering_config(family, dtype, n, tpb, DEFAULT_INPUT_SEED).expect("valid default config");
                    defs.push(kernel_benchmark(family, cfg).expect("known family"));
                }
            }
        }
    }
    for dtype in DType::ALL {
        for side in DEFAULT_GEMM_SIDES {
            let cfg = covering_config(GEMM, dtype, side, 256, DEFAULT_INPUT_SEED).expect("valid default config");
            defs.push(kernel_benchmark(GEMM, cfg).expect("known family"));
        }
    }
    defs
}

/// Nominal cost of one invocation under a scripted clock: one nanosecond per
/// element, `2n^3 + 3n^2` for GEMM.
pub fn scripted_cost_ns(family: &str, cfg: &KernelConfig) -> u64 {
    if family == GEMM {
        kernels::gemm_flops(cfg.n as u64)
    } else {
        cfg.n as u64
    }
}

struct ScriptedCost {
    inner: Box<dyn Routine>,
    clock: ManualClock,
    cost_ns: u64,
}

impl Routine for ScriptedCost {
    fn setup(&mut self) -> Result<(), BoxError> {
        self.inner.setup()
    }

    fn run(&mut self) -> Result<f64, BoxError> {
        let v = self.inner.run()?;
        self.clock.advance(self.cost_ns);
        Ok(v)
    }

    fn teardown(&mut self) -> Result<(), BoxError> {
        self.inner.teardown()
    }

    fn reset(&mut self) {
        self.inner.reset()
    }

    fn output(&self) -> Output {
        self.inner.output()
    }
}

/// Makes every invocation of `def` advance `clock` by its
/// [`scripted_cost_ns`], so timings become deterministic.
pub fn with_scripted_cost(def: BenchmarkDef, clock: &ManualClock) -> BenchmarkDef {
    let cost_ns = scripted_cost_ns(&def.family, &def.config);
    let clock = clock.clone();
    def.map_routine(move |inner| {
        Box::new(ScriptedCost {
            inner,
            clock: clock.clone(),
            cost_ns,
        })
    })
}
