//! Shared-memory asynchronous solver.
//!
//! Worker threads claim global iteration indices from one counter, read the
//! live iterate on the pattern of the chosen row and commit their correction
//! to a single cell. Cells hold `f64` bit patterns in `AtomicU64` words; the
//! atomic write mode adds through a compare-exchange loop while the plain
//! mode is a separate load and store, so concurrent increments to one cell
//! can be lost.
//!
//! Cell accesses use `Relaxed` ordering. The commit counter and the barrier
//! epoch (`Release`/`Acquire`) are the only cross-thread synchronization.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::direction::{DirectionStream, IterationCounter};
use crate::error::{Error, Result};
use crate::rgs::{check_dims, ErrorTrace, SolveConfig, TraceRecorder};
use crate::sparse::{norm2, SparseMatrix, UnitDiagonalSystem};

fn default_threads() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsyncConfig {
    pub base: SolveConfig,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default = "default_true")]
    pub atomic_writes: bool,
    /// Global iterations between barriers; `None` runs fully asynchronous.
    #[serde(default)]
    pub sync_period: Option<u64>,
    /// Per-iteration collision instrumentation. Adds sequentially consistent
    /// bookkeeping to every iteration.
    #[serde(default)]
    pub instrument: bool,
    /// Keep the executed `(iteration, coordinate)` pairs in the metadata.
    #[serde(default)]
    pub record_directions: bool,
}

impl AsyncConfig {
    pub fn new(base: SolveConfig, threads: usize) -> Self {
        AsyncConfig {
            base,
            threads,
            atomic_writes: true,
            sync_period: None,
            instrument: false,
            record_directions: false,
        }
    }

    pub fn with_sync_period(mut self, period: Option<u64>) -> Self {
        self.sync_period = period;
        self
    }

    pub fn with_instrumentation(mut self, on: bool) -> Self {
        self.instrument = on;
        self
    }

    pub fn with_recorded_directions(mut self, on: bool) -> Self {
        self.record_directions = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.threads == 0 {
            return Err(Error::InvalidParameter("threads must be at least 1".into()));
        }
        if self.sync_period == Some(0) {
            return Err(Error::InvalidParameter("sync_period must be at least 1".into()));
        }
        Ok(())
    }
}

/// Switches between atomic read-modify-write and plain load/store updates.
/// The plain mode is for experiments only.
pub fn set_write_mode(cfg: &AsyncConfig, atomic: bool) -> AsyncConfig {
    AsyncConfig {
        atomic_writes: atomic,
        ..cfg.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriteMode {
    Atomic,
    Plain,
}

/// Iterate vector stored as `f64` bit patterns in atomic words.
#[derive(Debug)]
pub struct SharedIterate {
    cells: Vec<AtomicU64>,
}

impl SharedIterate {
    pub fn from_slice(x: &[f64]) -> Self {
        SharedIterate {
            cells: x.iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub fn load(&self, i: usize) -> f64 {
        f64::from_bits(self.cells[i].load(Ordering::Relaxed))
    }

    #[inline]
    pub fn store(&self, i: usize, v: f64) {
        self.cells[i].store(v.to_bits(), Ordering::Relaxed)
    }

    /// `x_i += delta` as one indivisible step; returns the previous value.
    #[inline]
    pub fn fetch_add(&self, i: usize, delta: f64) -> f64 {
        let cell = &self.cells[i];
        let mut cur = cell.load(Ordering::Relaxed);
        loop {
            let new = (f64::from_bits(cur) + delta).to_bits();
            match cell.compare_exchange_weak(cur, new, Ordering::Relaxed, Ordering::Relaxed) {
                Ok(prev) => return f64::from_bits(prev),
                Err(actual) => cur = actual,
            }
        }
    }

    /// `x_i += delta` as a separate load and store. A concurrent update
    /// landing between the two is overwritten.
    #[inline]
    pub fn racy_add(&self, i: usize, delta: f64) {
        let v = self.load(i);
        self.store(i, v + delta);
    }

    #[inline]
    pub fn add(&self, i: usize, delta: f64, mode: WriteMode) {
        match mode {
            WriteMode::Atomic => {
                self.fetch_add(i, delta);
            }
            WriteMode::Plain => self.racy_add(i, delta),
        }
    }

    pub fn snapshot(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.load(i)).collect()
    }
}

/// One coordinate-update rule run by the asynchronous engine.
pub(crate) trait CoordinateKernel: Sync {
    type Scratch: Send;

    fn dim(&self) -> usize;
    fn scratch(&self) -> Self::Scratch;
    /// Correction `γ` for coordinate `r`; `read` is called once per entry of
    /// the read pattern.
    fn gamma<F: FnMut(usize) -> f64>(&self, r: usize, read: F, scratch: &mut Self::Scratch) -> f64;
    /// Distinct iterate entries read by `gamma(r)`.
    fn pattern(&self, r: usize, out: &mut Vec<usize>);
    fn max_pattern(&self) -> usize;
    fn residual_norm(&self, x: &[f64]) -> f64;
    fn error_sq(&self, x: &[f64], x_star: &[f64]) -> f64;
}

pub(crate) struct UnitKernel<'a> {
    pub a: &'a SparseMatrix,
    pub rhs: &'a [f64],
}

impl<'a> UnitKernel<'a> {
    pub fn new(sys: &'a UnitDiagonalSystem) -> Self {
        UnitKernel {
            a: sys.matrix(),
            rhs: sys.rhs(),
        }
    }
}

impl CoordinateKernel for UnitKernel<'_> {
    type Scratch = ();

    fn dim(&self) -> usize {
        self.a.n_rows()
    }

    fn scratch(&self) {}

    #[inline]
    fn gamma<F: FnMut(usize) -> f64>(&self, r: usize, mut read: F, _: &mut ()) -> f64 {
        let (cols, vals) = self.a.row(r);
        let mut acc = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            acc += v * read(c);
        }
        self.rhs[r] - acc
    }

    fn pattern(&self, r: usize, out: &mut Vec<usize>) {
        out.clear();
        out.extend_from_slice(self.a.row(r).0);
    }

    fn max_pattern(&self) -> usize {
        (0..self.dim()).map(|r| self.a.row_nnz(r)).max().unwrap_or(0)
    }

    fn residual_norm(&self, x: &[f64]) -> f64 {
        norm2(&self.a.residual(self.rhs, x).expect("dimension"))
    }

    fn error_sq(&self, x: &[f64], x_star: &[f64]) -> f64 {
        let e: Vec<f64> = x.iter().zip(x_star).map(|(a, b)| a - b).collect();
        self.a.quad_form(&e).expect("dimension")
    }
}

/// Observation of one instrumented iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionSample {
    pub iteration: u64,
    /// Distinct pattern cells written by other threads during the read.
    pub changed_cells: u32,
    /// Writes that may have overlapped the read window.
    pub concurrent_updates: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub iterations: u64,
    pub with_any_change: u64,
    pub with_multiple_changes: u64,
    pub rate_any: f64,
    pub rate_multiple: f64,
    /// Mean over iterations of `P(Bin(u, C₂/n) ≥ 1)`.
    pub heuristic_any: f64,
    /// Mean over iterations of `P(Bin(u, C₂/n) ≥ 2)`.
    pub heuristic_multiple: f64,
    pub max_pattern: usize,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub threads: usize,
    pub total_iterations: u64,
    pub atomic_writes: bool,
    pub sync_period: Option<u64>,
    pub barriers: u64,
    /// Iterations that started before the preceding barrier epoch was fully
    /// committed; zero unless the barrier is broken.
    pub barrier_violations: u64,
    /// Largest `(claimed at commit) - (committed at read start)`, an upper
    /// proxy for the delay bound.
    pub max_in_flight_spread: u64,
    pub wall_time_seconds: f64,
    pub collisions: Option<CollisionReport>,
    #[serde(skip)]
    pub collision_samples: Option<Vec<CollisionSample>>,
    #[serde(skip)]
    pub executed: Option<Vec<(u64, usize)>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsyncResult {
    pub x: Vec<f64>,
    pub trace: ErrorTrace,
    pub metadata: RunMetadata,
}

/// `P(X ≥ 1)` and `P(X ≥ 2)` for `X ~ Bin(u, p)`.
pub fn binomial_tails(u: u64, p: f64) -> (f64, f64) {
    let p = p.clamp(0.0, 1.0);
    if u == 0 || p == 0.0 {
        return (0.0, 0.0);
    }
    if p == 1.0 {
        return (1.0, if u >= 2 { 1.0 } else { 0.0 });
    }
    let l = (-p).ln_1p();
    let none = (u as f64 * l).exp();
    let one = u as f64 * p * ((u - 1) as f64 * l).exp();
    ((1.0 - none).max(0.0), (1.0 - none - one).max(0.0))
}

/// Aggregates the collision samples of an instrumented run.
pub fn measure_update_collisions(meta: &RunMetadata) -> Result<CollisionReport> {
    let samples = meta.collision_samples.as_ref().ok_or(Error::InstrumentationDisabled)?;
    let report = meta.collisions.ok_or(Error::InstrumentationDisabled)?;
    Ok(collision_report(samples, report.max_pattern, report.n))
}

fn collision_report(samples: &[CollisionSample], max_pattern: usize, n: usize) -> CollisionReport {
    let p = max_pattern as f64 / n as f64;
    let mut any = 0;
    let mut multi = 0;
    let (mut h1, mut h2) = (0.0, 0.0);
    for s in samples {
        any += (s.changed_cells >= 1) as u64;
        multi += (s.changed_cells >= 2) as u64;
        let (a, b) = binomial_tails(s.concurrent_updates, p);
        h1 += a;
        h2 += b;
    }
    let k = samples.len().max(1) as f64;
    CollisionReport {
        iterations: samples.len() as u64,
        with_any_change: any,
        with_multiple_changes: multi,
        rate_any: any as f64 / k,
        rate_multiple: multi as f64 / k,
        heuristic_any: h1 / k,
        heuristic_multiple: h2 / k,
        max_pattern,
        n,
    }
}

#[derive(Default)]
struct WorkerLog {
    max_spread: u64,
    barrier_violations: u64,
    samples: Vec<CollisionSample>,
    executed: Vec<(u64, usize)>,
}

struct Shared<'a> {
    x: SharedIterate,
    counter: IterationCounter,
    committed: AtomicU64,
    released: AtomicU64,
    begun: AtomicU64,
    versions: Vec<AtomicU64>,
    recorder: Mutex<TraceRecorder>,
    x_star: Option<&'a [f64]>,
}

impl Shared<'_> {
    fn checkpoint<K: CoordinateKernel>(&self, kernel: &K, iteration: u64) {
        let x = self.x.snapshot();
        let err = self.x_star.map(|xs| kernel.error_sq(&x, xs));
        let res = kernel.residual_norm(&x);
        self.recorder.lock().expect("recorder poisoned").record(iteration, res, err);
    }
}

fn worker<K: CoordinateKernel>(kernel: &K, cfg: &AsyncConfig, sh: &Shared<'_>) -> WorkerLog {
    let total = cfg.base.total_iterations;
    let stream = DirectionStream::new(cfg.base.seed, kernel.dim());
    let mode = if cfg.atomic_writes { WriteMode::Atomic } else { WriteMode::Plain };
    let beta = cfg.base.beta;
    let mut log = WorkerLog::default();
    let mut scratch = kernel.scratch();
    let mut pattern = Vec::new();
    let mut before = Vec::new();
    loop {
        let j = sh.counter.claim_next_index();
        if j >= total {
            break;
        }
        if let Some(s) = cfg.sync_period {
            let epoch = j / s;
            while sh.released.load(Ordering::Acquire) < epoch {
                std::hint::spin_loop();
                std::thread::yield_now();
            }
        }
        let start = sh.committed.load(Ordering::Acquire);
        if let Some(s) = cfg.sync_period {
            if start < (j / s) * s {
                log.barrier_violations += 1;
            }
        }
        let r = stream.direction_at(j);

        let gamma = if cfg.instrument {
            let base = sh.committed.load(Ordering::SeqCst);
            kernel.pattern(r, &mut pattern);
            before.clear();
            before.extend(pattern.iter().map(|&c| sh.versions[c].load(Ordering::SeqCst)));
            let g = kernel.gamma(r, |c| sh.x.load(c), &mut scratch);
            let changed = pattern
                .iter()
                .zip(&before)
                .filter(|(&c, &v)| sh.versions[c].load(Ordering::SeqCst) != v)
                .count();
            let begun = sh.begun.load(Ordering::SeqCst);
            log.samples.push(CollisionSample {
                iteration: j,
                changed_cells: changed as u32,
                concurrent_updates: begun.saturating_sub(base),
            });
            sh.begun.fetch_add(1, Ordering::SeqCst);
            g
        } else {
            kernel.gamma(r, |c| sh.x.load(c), &mut scratch)
        };

        sh.x.add(r, beta * gamma, mode);
        if cfg.instrument {
            sh.versions[r].fetch_add(1, Ordering::SeqCst);
        }
        let spread = sh.counter.claimed().min(total).saturating_sub(start);
        log.max_spread = log.max_spread.max(spread);
        if cfg.record_directions {
            log.executed.push((j, r));
        }

        let done = sh.committed.fetch_add(1, Ordering::AcqRel) + 1;
        if cfg.threads == 1 && done % cfg.base.checkpoint_every == 0 {
            sh.checkpoint(kernel, done);
        }
        if let Some(s) = cfg.sync_period {
            if done % s == 0 {
                // Every index below `done` has committed and nobody past it
                // has started, so the iterate is quiescent here.
                sh.checkpoint(kernel, done);
                sh.released.store(done / s, Ordering::Release);
            }
        }
    }
    log
}

pub(crate) fn run_async<K: CoordinateKernel>(
    kernel: &K,
    cfg: &AsyncConfig,
    x0: &[f64],
    x_star: Option<&[f64]>,
) -> Result<AsyncResult> {
    cfg.validate()?;
    let n = kernel.dim();
    let x_star = x_star.filter(|_| cfg.base.record_a_norm_error);
    let t0 = Instant::now();
    let sh = Shared {
        x: SharedIterate::from_slice(x0),
        counter: IterationCounter::new(),
        committed: AtomicU64::new(0),
        released: AtomicU64::new(0),
        begun: AtomicU64::new(0),
        versions: if cfg.instrument {
            (0..n).map(|_| AtomicU64::new(0)).collect()
        } else {
            Vec::new()
        },
        recorder: Mutex::new(TraceRecorder::new(x_star.is_some())),
        x_star,
    };
    sh.checkpoint(kernel, 0);

    let logs: Vec<WorkerLog> = if cfg.threads == 1 {
        vec![worker(kernel, cfg, &sh)]
    } else {
        std::thread::scope(|s| -> Result<Vec<WorkerLog>> {
            let mut handles = Vec::with_capacity(cfg.threads);
            for t in 0..cfg.threads {
                let sh = &sh;
                let h = std::thread::Builder::new()
                    .name(format!("asyrgs-{t}"))
                    .spawn_scoped(s, move || worker(kernel, cfg, sh))
                    .map_err(|e| Error::Spawn(e.to_string()))?;
                handles.push(h);
            }
            handles
                .into_iter()
                .map(|h| h.join().map_err(|_| Error::Spawn("worker panicked".into())))
                .collect()
        })?
    };

    let total = cfg.base.total_iterations;
    sh.checkpoint(kernel, total);
    let wall = t0.elapsed().as_secs_f64();

    let mut max_spread = 0;
    let mut violations = 0;
    let mut samples = Vec::new();
    let mut executed = Vec::new();
    for log in logs {
        max_spread = max_spread.max(log.max_spread);
        violations += log.barrier_violations;
        samples.extend(log.samples);
        executed.extend(log.executed);
    }
    samples.sort_unstable_by_key(|s| s.iteration);
    executed.sort_unstable();

    let collisions = cfg.instrument.then(|| collision_report(&samples, kernel.max_pattern(), n));
    let metadata = RunMetadata {
        threads: cfg.threads,
        total_iterations: total,
        atomic_writes: cfg.atomic_writes,
        sync_period: cfg.sync_period,
        barriers: cfg.sync_period.map_or(0, |s| sh.released.load(Ordering::Acquire).min(total / s)),
        barrier_violations: violations,
        max_in_flight_spread: max_spread,
        wall_time_seconds: wall,
        collisions,
        collision_samples: cfg.instrument.then_some(samples),
        executed: cfg.record_directions.then_some(executed),
    };
    let trace = sh.recorder.into_inner().expect("recorder poisoned").finish();
    Ok(AsyncResult {
        x: sh.x.snapshot(),
        trace,
        metadata,
    })
}

/// Runs `cfg.threads` workers on one shared iterate until
/// `cfg.base.total_iterations` indices have been claimed.
///
/// Trace checkpoints are taken at the start, at every barrier, and at the
/// end. With one thread they also follow `base.checkpoint_every`, which
/// makes the trace line up with [`crate::rgs::solve_sync`].
pub fn solve_async(
    sys: &UnitDiagonalSystem,
    cfg: &AsyncConfig,
    x0: &[f64],
    x_star: Option<&[f64]>,
) -> Result<AsyncResult> {
    check_dims(sys, x0, x_star)?;
    run_async(&UnitKernel::new(sys), cfg, x0, x_star)
}
