//! CPU analogs of the offload kernels: array initialization, zaxpy, atomic
//! capture, atomic update and GEMM.
//!
//! A [`KernelConfig`] carries the `teams` / `threads_per_team` decomposition.
//! Work is split into `threads_per_team`-sized chunks handed out grid-stride
//! to `min(teams, available parallelism)` workers: chunk `c` goes to worker
//! `c % workers`. Buffers are allocated by the caller, outside any timed
//! region.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::atomic::{AtomicI32, AtomicU32, AtomicU64, AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Threads-per-team values accepted by [`KernelConfig`].
pub const THREADS_PER_TEAM: [usize; 4] = [128, 256, 512, 1024];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F64,
    F32,
    I32,
}

impl DType {
    pub const ALL: [DType; 3] = [DType::F64, DType::F32, DType::I32];

    pub fn as_str(self) -> &'static str {
        match self {
            DType::F64 => "f64",
            DType::F32 => "f32",
            DType::I32 => "i32",
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DType {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f64" | "double" => Ok(DType::F64),
            "f32" | "float" => Ok(DType::F32),
            "i32" | "int" => Ok(DType::I32),
            other => Err(KernelError::UnknownDType(other.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("datatype mismatch: expected {expected}, got {got}")]
    DTypeMismatch { expected: DType, got: DType },
    #[error("unknown datatype {0:?}")]
    UnknownDType(String),
    #[error("invalid kernel configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelConfig {
    pub dtype: DType,
    /// Element count; the matrix side for GEMM.
    pub n: usize,
    pub teams: usize,
    pub threads_per_team: usize,
    pub seed: u64,
}

impl KernelConfig {
    pub fn new(dtype: DType, n: usize, teams: usize, threads_per_team: usize, seed: u64) -> Result<Self, KernelError> {
        if n == 0 {
            return Err(KernelError::InvalidConfig("n must be at least 1".into()));
        }
        if teams == 0 {
            return Err(KernelError::InvalidConfig("teams must be at least 1".into()));
        }
        if !THREADS_PER_TEAM.contains(&threads_per_team) {
            return Err(KernelError::InvalidConfig(format!(
                "threads per team must be one of {THREADS_PER_TEAM:?}, got {threads_per_team}"
            )));
        }
        Ok(KernelConfig {
            dtype,
            n,
            teams,
            threads_per_team,
            seed,
        })
    }

    /// A configuration with just enough teams to cover `work_items`
    /// (`teams * threads_per_team >= work_items`).
    pub fn covering(
        dtype: DType,
        n: usize,
        work_items: usize,
        threads_per_team: usize,
        seed: u64,
    ) -> Result<Self, KernelError> {
        let teams = work_items.div_ceil(threads_per_team.max(1)).max(1);
        Self::new(dtype, n, teams, threads_per_team, seed)
    }

    /// Canonical benchmark name: `family/dtype/n=<n>/teams=<t>/tpb=<k>`.
    pub fn name(&self, family: &str) -> String {
        format!(
            "{family}/{}/n={}/teams={}/tpb={}",
            self.dtype, self.n, self.teams, self.threads_per_team
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dtype", content = "value", rename_all = "lowercase")]
pub enum Scalar {
    F64(f64),
    F32(f32),
    I32(i32),
}

impl Scalar {
    pub fn dtype(&self) -> DType {
        match self {
            Scalar::F64(_) => DType::F64,
            Scalar::F32(_) => DType::F32,
            Scalar::I32(_) => DType::I32,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            Scalar::F64(v) => v,
            Scalar::F32(v) => v as f64,
            Scalar::I32(v) => v as f64,
        }
    }
}

/// Numeric storage for one kernel operand.
#[derive(Debug, Clone, PartialEq)]
pub enum DeviceBuffer {
    F64(Vec<f64>),
    F32(Vec<f32>),
    I32(Vec<i32>),
}

impl DeviceBuffer {
    pub fn zeroed(dtype: DType, len: usize) -> Self {
        match dtype {
            DType::F64 => DeviceBuffer::F64(vec![0.0; len]),
            DType::F32 => DeviceBuffer::F32(vec![0.0; len]),
            DType::I32 => DeviceBuffer::I32(vec![0; len]),
        }
    }

    /// A buffer filled by [`init_random`].
    pub fn random(dtype: DType, len: usize, seed: u64) -> Self {
        let mut buf = Self::zeroed(dtype, len);
        init_random(&mut buf, seed);
        buf
    }

    pub fn dtype(&self) -> DType {
        match self {
            DeviceBuffer::F64(_) => DType::F64,
            DeviceBuffer::F32(_) => DType::F32,
            DeviceBuffer::I32(_) => DType::I32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            DeviceBuffer::F64(v) => v.len(),
            DeviceBuffer::F32(v) => v.len(),
            DeviceBuffer::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lossless for every supported dtype.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match self {
            DeviceBuffer::F64(v) => v.clone(),
            DeviceBuffer::F32(v) => v.iter().map(|&x| x as f64).collect(),
            DeviceBuffer::I32(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn fill(&mut self, value: f64) {
        match self {
            DeviceBuffer::F64(v) => v.fill(value),
            DeviceBuffer::F32(v) => v.fill(value as f32),
            DeviceBuffer::I32(v) => v.fill(value as i32),
        }
    }

    /// The first `len` elements as a new buffer.
    pub fn prefix(&self, len: usize) -> DeviceBuffer {
        match self {
            DeviceBuffer::F64(v) => DeviceBuffer::F64(v[..len].to_vec()),
            DeviceBuffer::F32(v) => DeviceBuffer::F32(v[..len].to_vec()),
            DeviceBuffer::I32(v) => DeviceBuffer::I32(v[..len].to_vec()),
        }
    }
}

/// Element operations the kernels need, including an atomic accumulator.
pub trait Element: Copy + Send + Sync + PartialOrd + 'static {
    type Atomic: Send + Sync;

    const ZERO: Self;

    /// `a * x + y`; wraps on integer overflow.
    fn mul_add(a: Self, x: Self, y: Self) -> Self;
    /// `a * x`; wraps on integer overflow.
    fn mul(a: Self, x: Self) -> Self;
    fn is_positive(self) -> bool;
    fn to_f64(self) -> f64;

    fn atomic(v: Self) -> Self::Atomic;
    fn atomic_add(acc: &Self::Atomic, v: Self);
    fn atomic_load(acc: &Self::Atomic) -> Self;
}

macro_rules! float_element {
    ($t:ty, $atomic:ty) => {
        impl Element for $t {
            type Atomic = $atomic;
            const ZERO: Self = 0.0;

            #[inline]
            fn mul_add(a: Self, x: Self, y: Self) -> Self {
                a * x + y
            }

            #[inline]
            fn mul(a: Self, x: Self) -> Self {
                a * x
            }

            #[inline]
            fn is_positive(self) -> bool {
                self > 0.0
            }

            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }

            fn atomic(v: Self) -> Self::Atomic {
                <$atomic>::new(v.to_bits())
            }

            #[inline]
            fn atomic_add(acc: &Self::Atomic, v: Self) {
                let mut cur = acc.load(Ordering::Relaxed);
                loop {
                    let next = (<$t>::from_bits(cur) + v).to_bits();
                    match acc.compare_exchange_weak(cur, next, Ordering::Relaxed, Ordering::Relaxed) {
                        Ok(_) => return,
                        Err(actual) => cur = actual,
                    }
                }
            }

            fn atomic_load(acc: &Self::Atomic) -> Self {
                <$t>::from_bits(acc.load(Ordering::Acquire))
            }
        }
    };
}

float_element!(f64, AtomicU64);
float_element!(f32, AtomicU32);

impl Element for i32 {
    type Atomic = AtomicI32;
    const ZERO: Self = 0;

    #[inline]
    fn mul_add(a: Self, x: Self, y: Self) -> Self {
        a.wrapping_mul(x).wrapping_add(y)
    }

    #[inline]
    fn mul(a: Self, x: Self) -> Self {
        a.wrapping_mul(x)
    }

    #[inline]
    fn is_positive(self) -> bool {
        self > 0
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    fn atomic(v: Self) -> Self::Atomic {
        AtomicI32::new(v)
    }

    #[inline]
    fn atomic_add(acc: &Self::Atomic, v: Self) {
        acc.fetch_add(v, Ordering::Relaxed);
    }

    fn atomic_load(acc: &Self::Atomic) -> Self {
        acc.load(Ordering::Acquire)
    }
}

/// OS workers executing a kernel's chunks.
pub struct WorkerPool {
    workers: usize,
    pool: Option<rayon::ThreadPool>,
}

impl fmt::Debug for WorkerPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WorkerPool").field("workers", &self.workers).finish()
    }
}

impl WorkerPool {
    /// `min(teams, available parallelism)` workers.
    pub fn for_config(cfg: &KernelConfig) -> Self {
        let hw = std::thread::available_parallelism().map_or(1, |n| n.get());
        Self::with_workers(cfg.teams.min(hw))
    }

    pub fn with_workers(workers: usize) -> Self {
        let workers = workers.max(1);
        let pool = (workers > 1).then(|| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .thread_name(|i| format!("bootbench-worker-{i}"))
                .build()
                .expect("failed to start kernel worker pool")
        });
        WorkerPool { workers, pool }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Runs `f` once per work group and blocks until all have finished.
    fn run<G, F>(&self, groups: Vec<G>, f: F)
    where
        G: Send,
        F: Fn(G) + Sync,
    {
        match &self.pool {
            None => groups.into_iter().for_each(&f),
            Some(pool) => pool.scope(|s| {
                let f = &f;
                for g in groups {
                    s.spawn(move |_| f(g));
                }
            }),
        }
    }

    /// The element ranges worker `worker` processes for a `len`-element
    /// array split into `chunk`-sized pieces.
    fn ranges(&self, len: usize, chunk: usize, worker: usize) -> impl Iterator<Item = Range<usize>> {
        let chunks = len.div_ceil(chunk);
        (worker..chunks)
            .step_by(self.workers)
            .map(move |c| c * chunk..((c + 1) * chunk).min(len))
    }

    /// Splits `data` into `chunk`-sized mutable pieces tagged with their
    /// offset, grouped per worker in grid-stride order.
    fn split_mut<'a, T>(&self, data: &'a mut [T], chunk: usize) -> Vec<Vec<(usize, &'a mut [T])>> {
        let mut groups: Vec<Vec<_>> = (0..self.workers).map(|_| Vec::new()).collect();
        for (c, piece) in data.chunks_mut(chunk).enumerate() {
            groups[c % self.workers].push((c * chunk, piece));
        }
        groups
    }
}

/// Fills `buf` with i.i.d. uniform values: floats on `[-1, 1]`, integers on
/// `[-100, 100]`. Deterministic per seed.
pub fn init_random(buf: &mut DeviceBuffer, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match buf {
        DeviceBuffer::F64(v) => v.iter_mut().for_each(|x| *x = rng.random_range(-1.0..=1.0)),
        DeviceBuffer::F32(v) => v.iter_mut().for_each(|x| *x = rng.random_range(-1.0f32..=1.0)),
        DeviceBuffer::I32(v) => v.iter_mut().for_each(|x| *x = rng.random_range(-100..=100)),
    }
}

fn probe<T: Element>(v: &[T]) -> f64 {
    match v.len() {
        0 => 0.0,
        n => v[0].to_f64() + v[n / 2].to_f64() + v[n - 1].to_f64(),
    }
}

fn check_dtype(expected: DType, got: DType) -> Result<(), KernelError> {
    if expected != got {
        return Err(KernelError::DTypeMismatch { expected, got });
    }
    Ok(())
}

/// Zeroes `buf`. Returns a checksum of a few probed elements.
pub fn array_init(buf: &mut DeviceBuffer, cfg: &KernelConfig, pool: &WorkerPool) -> Result<f64, KernelError> {
    if buf.len() != cfg.n {
        return Err(KernelError::LengthMismatch(format!(
            "buffer has {} elements, config expects {}",
            buf.len(),
            cfg.n
        )));
    }
    fn typed<T: Element>(v: &mut [T], chunk: usize, pool: &WorkerPool) -> f64 {
        pool.run(pool.split_mut(v, chunk), |group| {
            for (_, piece) in group {
                piece.fill(T::ZERO);
            }
        });
        probe(v)
    }
    let chunk = cfg.threads_per_team;
    Ok(match buf {
        DeviceBuffer::F64(v) => typed(v, chunk, pool),
        DeviceBuffer::F32(v) => typed(v, chunk, pool),
        DeviceBuffer::I32(v) => typed(v, chunk, pool),
    })
}

/// `z[i] = a * x[i] + y[i]`. Returns a checksum of a few probed elements of `z`.
pub fn zaxpy(
    z: &mut DeviceBuffer,
    x: &DeviceBuffer,
    y: &DeviceBuffer,
    a: Scalar,
    cfg: &KernelConfig,
    pool: &WorkerPool,
) -> Result<f64, KernelError> {
    if x.len() != y.len() || z.len() != x.len() {
        return Err(KernelError::LengthMismatch(format!(
            "z={}, x={}, y={}",
            z.len(),
            x.len(),
            y.len()
        )));
    }
    fn typed<T: Element>(z: &mut [T], x: &[T], y: &[T], a: T, chunk: usize, pool: &WorkerPool) -> f64 {
        pool.run(pool.split_mut(z, chunk), |group| {
            for (offset, piece) in group {
                let xs = &x[offset..offset + piece.len()];
                let ys = &y[offset..offset + piece.len()];
                for ((zi, &xi), &yi) in piece.iter_mut().zip(xs).zip(ys) {
                    *zi = T::mul_add(a, xi, yi);
                }
            }
        });
        probe(z)
    }
    let chunk = cfg.threads_per_team;
    match (z, x, y, a) {
        (DeviceBuffer::F64(z), DeviceBuffer::F64(x), DeviceBuffer::F64(y), Scalar::F64(a)) => {
            Ok(typed(z, x, y, a, chunk, pool))
        }
        (DeviceBuffer::F32(z), DeviceBuffer::F32(x), DeviceBuffer::F32(y), Scalar::F32(a)) => {
            Ok(typed(z, x, y, a, chunk, pool))
        }
        (DeviceBuffer::I32(z), DeviceBuffer::I32(x), DeviceBuffer::I32(y), Scalar::I32(a)) => {
            Ok(typed(z, x, y, a, chunk, pool))
        }
        (z, x, y, a) => {
            let expected = z.dtype();
            let got = [x.dtype(), y.dtype(), a.dtype()]
                .into_iter()
                .find(|&d| d != expected)
                .unwrap_or(expected);
            Err(KernelError::DTypeMismatch { expected, got })
        }
    }
}

struct SlotWriter<T>(*mut T);

// Each slot index is claimed exactly once through an atomic counter, so
// concurrent writers never alias.
unsafe impl<T: Send> Send for SlotWriter<T> {}
unsafe impl<T: Send> Sync for SlotWriter<T> {}

/// Copies every strictly positive element of `src` into `out[0..c)`, claiming
/// each slot with an atomic fetch-increment. Returns `c`. Slots at and past
/// `c` are left untouched; the order of the captured values is unspecified.
pub fn atomic_capture(
    src: &DeviceBuffer,
    out: &mut DeviceBuffer,
    cfg: &KernelConfig,
    pool: &WorkerPool,
) -> Result<usize, KernelError> {
    check_dtype(src.dtype(), out.dtype())?;
    if out.len() < src.len() {
        return Err(KernelError::LengthMismatch(format!(
            "output has {} slots, source has {} elements",
            out.len(),
            src.len()
        )));
    }
    fn typed<T: Element>(src: &[T], out: &mut [T], chunk: usize, pool: &WorkerPool) -> usize {
        let counter = AtomicUsize::new(0);
        let writer = SlotWriter(out.as_mut_ptr());
        pool.run((0..pool.workers()).collect(), |worker| {
            let writer = &writer;
            for range in pool.ranges(src.len(), chunk, worker) {
                for &v in &src[range] {
                    if v.is_positive() {
                        let slot = counter.fetch_add(1, Ordering::Relaxed);
                        // SAFETY: slot < number of positive elements <= src.len() <= out.len(),
                        // and no other writer receives the same slot.
                        unsafe { writer.0.add(slot).write(v) };
                    }
                }
            }
        });
        counter.into_inner()
    }
    let chunk = cfg.threads_per_team;
    Ok(match (src, out) {
        (DeviceBuffer::F64(s), DeviceBuffer::F64(o)) => typed(s, o, chunk, pool),
        (DeviceBuffer::F32(s), DeviceBuffer::F32(o)) => typed(s, o, chunk, pool),
        (DeviceBuffer::I32(s), DeviceBuffer::I32(o)) => typed(s, o, chunk, pool),
        _ => unreachable!("dtypes checked above"),
    })
}

/// Sums `src` by having every worker atomically add each of its elements to
/// one shared accumulator. Integer sums wrap.
pub fn atomic_update(src: &DeviceBuffer, cfg: &KernelConfig, pool: &WorkerPool) -> Scalar {
    fn typed<T: Element>(src: &[T], chunk: usize, pool: &WorkerPool) -> T {
        let acc = T::atomic(T::ZERO);
        pool.run((0..pool.workers()).collect(), |worker| {
            for range in pool.ranges(src.len(), chunk, worker) {
                for &v in &src[range] {
                    T::atomic_add(&acc, v);
                }
            }
        });
        T::atomic_load(&acc)
    }
    let chunk = cfg.threads_per_team;
    match src {
        DeviceBuffer::F64(s) => Scalar::F64(typed(s, chunk, pool)),
        DeviceBuffer::F32(s) => Scalar::F32(typed(s, chunk, pool)),
        DeviceBuffer::I32(s) => Scalar::I32(typed(s, chunk, pool)),
    }
}

/// Rows of C handled by one team: enough to cover `threads_per_team`
/// output elements.
fn gemm_rows_per_chunk(side: usize, threads_per_team: usize) -> usize {
    threads_per_team.div_ceil(side).max(1)
}

/// `C <- alpha * A * B + beta * C` for row-major square matrices of side
/// `side`. Returns a checksum of a few probed elements of C.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    a: &DeviceBuffer,
    b: &DeviceBuffer,
    c: &mut DeviceBuffer,
    side: usize,
    alpha: Scalar,
    beta: Scalar,
    cfg: &KernelConfig,
    pool: &WorkerPool,
) -> Result<f64, KernelError> {
    if side == 0 {
        return Err(KernelError::DimensionMismatch("matrix side must be at least 1".into()));
    }
    let elems = side * side;
    for (label, len) in [("A", a.len()), ("B", b.len()), ("C", c.len())] {
        if len != elems {
            return Err(KernelError::DimensionMismatch(format!(
                "{label} has {len} elements, expected {side}x{side}"
            )));
        }
    }
    fn typed<T: Element>(
        a: &[T],
        b: &[T],
        c: &mut [T],
        side: usize,
        alpha: T,
        beta: T,
        tpb: usize,
        pool: &WorkerPool,
    ) -> f64 {
        let rows = gemm_rows_per_chunk(side, tpb);
        pool.run(pool.split_mut(c, rows * side), |group| {
            let mut acc = vec![T::ZERO; side];
            for (offset, block) in group {
                let first_row = offset / side;
                for (r, c_row) in block.chunks_mut(side).enumerate() {
                    let i = first_row + r;
                    acc.fill(T::ZERO);
                    for (k, &aik) in a[i * side..(i + 1) * side].iter().enumerate() {
                        let b_row = &b[k * side..(k + 1) * side];
                        for (acc_j, &bkj) in acc.iter_mut().zip(b_row) {
                            *acc_j = T::mul_add(aik, bkj, *acc_j);
                        }
                    }
                    for (cij, &s) in c_row.iter_mut().zip(&acc) {
                        *cij = T::mul_add(alpha, s, T::mul(beta, *cij));
                    }
                }
            }
        });
        probe(c)
    }
    let tpb = cfg.threads_per_team;
    match (a, b, c, alpha, beta) {
        (DeviceBuffer::F64(a), DeviceBuffer::F64(b), DeviceBuffer::F64(c), Scalar::F64(al), Scalar::F64(be)) => {
            Ok(typed(a, b, c, side, al, be, tpb, pool))
        }
        (DeviceBuffer::F32(a), DeviceBuffer::F32(b), DeviceBuffer::F32(c), Scalar::F32(al), Scalar::F32(be)) => {
            Ok(typed(a, b, c, side, al, be, tpb, pool))
        }
        (DeviceBuffer::I32(a), DeviceBuffer::I32(b), DeviceBuffer::I32(c), Scalar::I32(al), Scalar::I32(be)) => {
            Ok(typed(a, b, c, side, al, be, tpb, pool))
        }
        (a, b, c, al, be) => {
            let expected = a.dtype();
            let got = [b.dtype(), c.dtype(), al.dtype(), be.dtype()]
                .into_iter()
                .find(|&d| d != expected)
                .unwrap_or(expected);
            Err(KernelError::DTypeMismatch { expected, got })
        }
    }
}

/// Floating-point operations in one GEMM of side `n`: `2n^3` for the
/// multiply-adds plus `3n^2` for the alpha and beta scaling and the final add.
pub fn gemm_flops(n: u64) -> u64 {
    2 * n * n * n + 3 * n * n
}

/// Serial single-threaded implementations used to verify kernel output.
pub mod reference {
    use super::*;

    pub fn zaxpy(x: &DeviceBuffer, y: &DeviceBuffer, a: Scalar) -> DeviceBuffer {
        match (x, y, a) {
            (DeviceBuffer::F64(x), DeviceBuffer::F64(y), Scalar::F64(a)) => {
                DeviceBuffer::F64(x.iter().zip(y).map(|(&x, &y)| a * x + y).collect())
            }
            (DeviceBuffer::F32(x), DeviceBuffer::F32(y), Scalar::F32(a)) => {
                DeviceBuffer::F32(x.iter().zip(y).map(|(&x, &y)| a * x + y).collect())
            }
            (DeviceBuffer::I32(x), DeviceBuffer::I32(y), Scalar::I32(a)) => DeviceBuffer::I32(
                x.iter()
                    .zip(y)
                    .map(|(&x, &y)| a.wrapping_mul(x).wrapping_add(y))
                    .collect(),
            ),
            _ => panic!("reference zaxpy called with mixed datatypes"),
        }
    }

    /// Positive elements of `src` in source order.
    pub fn positives(src: &DeviceBuffer) -> Vec<f64> {
        src.to_f64_vec().into_iter().filter(|&v| v > 0.0).collect()
    }

    /// Exact wrapping sum for integers; compensated sum (in f64) for floats,
    /// together with the sum of absolute values for error bounds.
    pub fn sum(src: &DeviceBuffer) -> (f64, f64) {
        match src {
            DeviceBuffer::I32(v) => {
                let s = v.iter().fold(0i32, |acc, &x| acc.wrapping_add(x));
                (s as f64, v.iter().map(|&x| (x as f64).abs()).sum())
            }
            other => {
                let v = other.to_f64_vec();
                let (mut s, mut c) = (0.0f64, 0.0f64);
                for &x in &v {
                    let y = x - c;
                    let t = s + y;
                    c = (t - s) - y;
                    s = t;
                }
                (s, v.iter().map(|x| x.abs()).sum())
            }
        }
    }

    pub fn gemm(
        a: &DeviceBuffer,
        b: &DeviceBuffer,
        c: &DeviceBuffer,
        side: usize,
        alpha: Scalar,
        beta: Scalar,
    ) -> DeviceBuffer {
        fn typed<T: Element>(a: &[T], b: &[T], c: &[T], side: usize, alpha: T, beta: T) -> Vec<T> {
            let mut out = c.to_vec();
            for i in 0..side {
                for j in 0..side {
                    let mut s = T::ZERO;
                    for k in 0..side {
                        s = T::mul_add(a[i * side + k], b[k * side + j], s);
                    }
                    out[i * side + j] = T::mul_add(alpha, s, T::mul(beta, c[i * side + j]));
                }
            }
            out
        }
        match (a, b, c, alpha, beta) {
            (DeviceBuffer::F64(a), DeviceBuffer::F64(b), DeviceBuffer::F64(c), Scalar::F64(al), Scalar::F64(be)) => {
                DeviceBuffer::F64(typed(a, b, c, side, al, be))
            }
            (DeviceBuffer::F32(a), DeviceBuffer::F32(b), DeviceBuffer::F32(c), Scalar::F32(al), Scalar::F32(be)) => {
                DeviceBuffer::F32(typed(a, b, c, side, al, be))
            }
            (DeviceBuffer::I32(a), DeviceBuffer::I32(b), DeviceBuffer::I32(c), Scalar::I32(al), Scalar::I32(be)) => {
                DeviceBuffer::I32(typed(a, b, c, side, al, be))
            }
            _ => panic!("reference gemm called with mixed datatypes"),
        }
    }
}
