//! Synchronous randomized Gauss-Seidel with step size, the sequential
//! reference for every asynchronous variant.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::direction::DirectionStream;
use crate::error::{Error, Result};
use crate::sparse::{SparseMatrix, UnitDiagonalSystem};

pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub total_iterations: u64,
    #[serde(default)]
    pub seed: u64,
    /// Trace granularity in iterations; a sweep when built by [`SolveConfig::sweeps`].
    #[serde(default = "default_checkpoint")]
    pub checkpoint_every: u64,
    #[serde(default)]
    pub record_a_norm_error: bool,
}

fn default_beta() -> f64 {
    1.0
}

fn default_checkpoint() -> u64 {
    u64::MAX
}

impl SolveConfig {
    pub fn new(total_iterations: u64, seed: u64) -> Self {
        SolveConfig {
            beta: 1.0,
            total_iterations,
            seed,
            checkpoint_every: total_iterations.max(1),
            record_a_norm_error: false,
        }
    }

    /// `sweeps * n` iterations, checkpointed once per sweep.
    pub fn sweeps(n: usize, sweeps: u64, seed: u64) -> Self {
        SolveConfig {
            checkpoint_every: n.max(1) as u64,
            ..SolveConfig::new(sweeps * n as u64, seed)
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_checkpoint_every(mut self, every: u64) -> Self {
        self.checkpoint_every = every;
        self
    }

    pub fn with_a_norm_error(mut self, on: bool) -> Self {
        self.record_a_norm_error = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate_beta(self.beta)?;
        if self.checkpoint_every == 0 {
            return Err(Error::InvalidParameter("checkpoint_every must be at least 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn validate_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("step size {beta} outside (0, 2)")))
    }
}

/// Residual and error history sampled at checkpoints.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorTrace {
    pub checkpoint_index: Vec<u64>,
    pub residual_2norm: Vec<f64>,
    /// `‖x_m - x*‖²_A` (or the X-norm on the least-squares path).
    pub a_norm_error_sq: Option<Vec<f64>>,
    pub wall_time_seconds: Vec<f64>,
}

impl ErrorTrace {
    pub fn len(&self) -> usize {
        self.checkpoint_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoint_index.is_empty()
    }

    pub fn last_residual(&self) -> Option<f64> {
        self.residual_2norm.last().copied()
    }

    pub fn last_error(&self) -> Option<f64> {
        self.a_norm_error_sq.as_ref().and_then(|e| e.last().copied())
    }
}

/// Incremental builder for [`ErrorTrace`] with a monotonic clock.
pub(crate) struct TraceRecorder {
    start: Instant,
    trace: ErrorTrace,
}

impl TraceRecorder {
    pub(crate) fn new(with_error: bool) -> Self {
        TraceRecorder {
            start: Instant::now(),
            trace: ErrorTrace {
                a_norm_error_sq: with_error.then(Vec::new),
                ..ErrorTrace::default()
            },
        }
    }

    pub(crate) fn record(&mut self, iteration: u64, residual: f64, error: Option<f64>) {
        if self.trace.checkpoint_index.last() == Some(&iteration) {
            return;
        }
        self.trace.checkpoint_index.push(iteration);
        self.trace.residual_2norm.push(residual);
        if let (Some(errs), Some(e)) = (self.trace.a_norm_error_sq.as_mut(), error) {
            errs.push(e);
        }
        self.trace
            .wall_time_seconds
            .push(self.start.elapsed().as_secs_f64());
    }

    pub(crate) fn finish(self) -> ErrorTrace {
        self.trace
    }
}

pub(crate) fn record_unit(
    rec: &mut TraceRecorder,
    sys: &UnitDiagonalSystem,
    iteration: u64,
    x: &[f64],
    x_star: Option<&[f64]>,
) {
    let err = x_star.map(|xs| sys.a_norm_error_sq(x, xs));
    rec.record(iteration, sys.residual_norm(x), err);
}

pub(crate) fn check_dims(sys: &UnitDiagonalSystem, x0: &[f64], x_star: Option<&[f64]>) -> Result<()> {
    let n = sys.dim();
    for len in std::iter::once(x0.len()).chain(x_star.map(<[f64]>::len)) {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    Ok(())
}

/// One coordinate step on coordinate `r`: `γ = b_r - A_r x`, `x_r += βγ`.
/// Returns `γ`.
#[inline]
pub fn rgs_step(sys: &UnitDiagonalSystem, x: &mut [f64], r: usize, beta: f64) -> f64 {
    let gamma = sys.rhs()[r] - sys.matrix().row_dot_unchecked(r, x);
    x[r] += beta * gamma;
    gamma
}

/// Runs `cfg.total_iterations` steps along the direction stream of `cfg.seed`.
///
/// The trace holds the starting point, every `checkpoint_every`-th iterate and
/// the final iterate. When `x_star` is given and `record_a_norm_error` is set,
/// the squared A-norm error is recorded too.
pub fn solve_sync(
    sys: &UnitDiagonalSystem,
    cfg: &SolveConfig,
    x0: &[f64],
    x_star: Option<&[f64]>,
) -> Result<(Vec<f64>, ErrorTrace)> {
    cfg.validate()?;
    check_dims(sys, x0, x_star)?;
    let stream = DirectionStream::new(cfg.seed, sys.dim());
    let x_star = x_star.filter(|_| cfg.record_a_norm_error);
    let mut rec = TraceRecorder::new(x_star.is_some());
    let mut x = x0.to_vec();
    record_unit(&mut rec, sys, 0, &x, x_star);
    for j in 0..cfg.total_iterations {
        let r = stream.direction_at(j);
        rgs_step(sys, &mut x, r, cfg.beta);
        if (j + 1) % cfg.checkpoint_every == 0 {
            record_unit(&mut rec, sys, j + 1, &x, x_star);
        }
    }
    record_unit(&mut rec, sys, cfg.total_iterations, &x, x_star);
    Ok((x, rec.finish()))
}

/// Calls `f` once for every direction sequence in `{0..n}^m`.
pub fn for_each_sequence(n: usize, m: usize, cap: u128, mut f: impl FnMut(&[usize])) -> Result<u128> {
    let count = (n as u128).checked_pow(m as u32).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let mut seq = vec![0usize; m];
    for _ in 0..count {
        f(&seq);
        for digit in seq.iter_mut().rev() {
            *digit += 1;
            if *digit < n {
                break;
            }
            *digit = 0;
        }
    }
    Ok(count)
}

/// Exact `E[‖x_m - x*‖²_A]` by averaging over all `n^m` equally likely
/// direction sequences.
pub fn expected_error_exact(
    sys: &UnitDiagonalSystem,
    x0: &[f64],
    x_star: &[f64],
    beta: f64,
    m: usize,
    cap: u128,
) -> Result<f64> {
    validate_beta(beta)?;
    check_dims(sys, x0, Some(x_star))?;
    let mut sum = 0.0;
    let mut x = x0.to_vec();
    let count = for_each_sequence(sys.dim(), m, cap, |seq| {
        x.copy_from_slice(x0);
        for &r in seq {
            rgs_step(sys, &mut x, r, beta);
        }
        sum += sys.a_norm_error_sq(&x, x_star);
    })?;
    Ok(sum / count as f64)
}

/// `E_d[(x - x*, d)²_A] = (1/n) ‖A (x - x*)‖²₂` for a uniform coordinate `d`.
pub fn lemma1_exact_expectation(sys: &UnitDiagonalSystem, x: &[f64], x_star: &[f64]) -> Result<f64> {
    check_dims(sys, x, Some(x_star))?;
    let e: Vec<f64> = x.iter().zip(x_star).map(|(a, b)| a - b).collect();
    let ae = sys.matrix().spmv(&e)?;
    Ok(ae.iter().map(|v| v * v).sum::<f64>() / sys.dim() as f64)
}

/// Coordinate step on a symmetric matrix with arbitrary positive diagonal:
/// `γ = (z_r - B_r y) / B_rr`, `y_r += βγ`.
pub fn nonunit_rgs_step(b: &SparseMatrix, z: &[f64], y: &mut [f64], r: usize, beta: f64) -> f64 {
    let diag = b.get(r, r).unwrap_or(0.0);
    let gamma = (z[r] - b.row_dot_unchecked(r, y)) / diag;
    y[r] += beta * gamma;
    gamma
}
