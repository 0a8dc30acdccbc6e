//! Flexible conjugate gradient with asynchronous Gauss-Seidel sweeps as a
//! variable preconditioner.
//!
//! The search directions are orthogonalized against the full history in the
//! A-inner product, without truncation or restarts.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::async_solver::{run_async, AsyncConfig, UnitKernel};
use crate::error::{Error, Result};
use crate::rgs::{ErrorTrace, SolveConfig, TraceRecorder};
use crate::sparse::{dot, norm2, UnitDiagonalSystem};

fn default_tol() -> f64 {
    1e-8
}

fn default_max_outer() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcgConfig {
    pub inner_sweeps: u64,
    /// Inner solver settings. `base.total_iterations` is replaced by
    /// `inner_sweeps · n`; `base.seed` is the base of the per-application
    /// seeds.
    pub inner: AsyncConfig,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
}

impl FcgConfig {
    pub fn new(inner_sweeps: u64, seed: u64) -> Self {
        FcgConfig {
            inner_sweeps,
            inner: AsyncConfig::new(SolveConfig::new(0, seed), 1),
            tol: default_tol(),
            max_outer: default_max_outer(),
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.inner.threads = threads;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_outer(mut self, max_outer: usize) -> Self {
        self.max_outer = max_outer;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol {} must be positive", self.tol)));
        }
        if self.inner_sweeps == 0 {
            return Err(Error::InvalidParameter("inner_sweeps must be at least 1".into()));
        }
        self.inner.validate()
    }

    /// Inner configuration for preconditioner application `k`.
    pub fn inner_for(&self, n: usize, k: u64) -> AsyncConfig {
        let mut c = self.inner.clone();
        c.base.total_iterations = self.inner_sweeps * n as u64;
        c.base.seed = self.inner.base.seed ^ k;
        c.base.checkpoint_every = u64::MAX;
        c.base.record_a_norm_error = false;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcgReport {
    pub outer_iterations: u64,
    /// `outer · (inner_sweeps + 1)`, counting one sweep as one matrix
    /// operation.
    pub matrix_operations: u64,
    pub converged: bool,
    /// `‖b - A x‖₂ / ‖b‖₂` recomputed at the returned iterate.
    pub relative_residual: f64,
    /// Recurrence residual after every outer iteration.
    pub trace: ErrorTrace,
}

/// Flexible CG with an arbitrary preconditioner `precond(k, r)`, where `k`
/// counts applications.
pub fn fcg_with_preconditioner(
    sys: &UnitDiagonalSystem,
    x0: &[f64],
    tol: f64,
    max_outer: usize,
    matops_per_outer: u64,
    mut precond: impl FnMut(u64, &[f64]) -> Result<Vec<f64>>,
) -> Result<(Vec<f64>, FcgReport)> {
    let n = sys.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    let a = sys.matrix();
    let b_norm = norm2(sys.rhs());
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let mut x = x0.to_vec();
    let mut r = a.residual(sys.rhs(), &x)?;
    let mut rec = TraceRecorder::new(false);
    rec.record(0, norm2(&r), None);

    let mut ps: Vec<Vec<f64>> = Vec::new();
    let mut aps: Vec<Vec<f64>> = Vec::new();
    let mut paps: Vec<f64> = Vec::new();
    let mut outer = 0u64;
    let mut rel = norm2(&r) / scale;
    let mut converged = rel <= tol;

    while !converged && (outer as usize) < max_outer {
        let z = precond(outer, &r)?;
        let mut p = z.clone();
        for ((pi, api), papi) in ps.iter().zip(&aps).zip(&paps) {
            let c = dot(&z, api) / papi;
            for (pk, pik) in p.iter_mut().zip(pi) {
                *pk -= c * pik;
            }
        }
        let ap = a.spmv(&p)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            // Direction lost A-conjugacy or vanished; stop with what we have.
            break;
        }
        let alpha = dot(&p, &r) / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        ps.push(p);
        aps.push(ap);
        paps.push(pap);
        outer += 1;
        rec.record(outer, norm2(&r), None);
        if norm2(&r) / scale <= tol {
            // Accept only on the true residual.
            r = a.residual(sys.rhs(), &x)?;
            rel = norm2(&r) / scale;
            converged = rel <= tol;
        }
    }
    rel = norm2(&a.residual(sys.rhs(), &x)?) / scale;
    converged = converged && rel <= tol;
    Ok((
        x,
        FcgReport {
            outer_iterations: outer,
            matrix_operations: outer * matops_per_outer,
            converged,
            relative_residual: rel,
            trace: rec.finish(),
        },
    ))
}

/// Flexible CG where every preconditioner application runs
/// `cfg.inner_sweeps` sweeps of the asynchronous solver on `A z = r` from
/// zero, with seed `inner.base.seed ^ k` for application `k`.
///
/// Running out of outer iterations is reported through
/// `FcgReport::converged`, not as an error.
pub fn fcg_solve(sys: &UnitDiagonalSystem, cfg: &FcgConfig, x0: &[f64]) -> Result<(Vec<f64>, FcgReport)> {
    cfg.validate()?;
    let n = sys.dim();
    let zero = vec![0.0; n];
    fcg_with_preconditioner(sys, x0, cfg.tol, cfg.max_outer, cfg.inner_sweeps + 1, |k, r| {
        let kernel = UnitKernel { a: sys.matrix(), rhs: r };
        Ok(run_async(&kernel, &cfg.inner_for(n, k), &zero, None)?.x)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub inner_sweeps: u64,
    /// Median over repetitions.
    pub outer_iterations: u64,
    pub mat_ops: u64,
    /// Median wall time.
    pub time_seconds: f64,
    pub mat_ops_per_second: f64,
    pub converged_runs: usize,
    pub repetitions: usize,
}

/// Seed for repetition `rep`: spread far apart so the per-application seeds
/// `seed ^ k` of different repetitions do not overlap.
pub fn repetition_seed(base: u64, rep: usize) -> u64 {
    base.wrapping_add((rep as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn median<T: Copy + PartialOrd>(v: &mut [T]) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    v[v.len() / 2]
}

/// Runs `fcg_solve` `repetitions` times per grid value with fresh inner
/// seeds and reports medians.
pub fn sweep_tradeoff_experiment(
    sys: &UnitDiagonalSystem,
    cfg: &FcgConfig,
    grid: &[u64],
    repetitions: usize,
) -> Result<Vec<TradeoffRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty sweep grid".into()));
    }
    if repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be at least 1".into()));
    }
    let x0 = vec![0.0; sys.dim()];
    let mut rows = Vec::with_capacity(grid.len());
    for &inner in grid {
        let mut outers = Vec::with_capacity(repetitions);
        let mut times = Vec::with_capacity(repetitions);
        let mut converged = 0;
        for rep in 0..repetitions {
            let mut c = cfg.clone();
            c.inner_sweeps = inner;
            c.inner.base.seed = repetition_seed(cfg.inner.base.seed, rep);
            let t = Instant::now();
            let (_, report) = fcg_solve(sys, &c, &x0)?;
            times.push(t.elapsed().as_secs_f64());
            outers.push(report.outer_iterations);
            converged += report.converged as usize;
        }
        let outer = median(&mut outers);
        let time = median(&mut times);
        let mat_ops = outer * (inner + 1);
        rows.push(TradeoffRow {
            inner_sweeps: inner,
            outer_iterations: outer,
            mat_ops,
            time_seconds: time,
            mat_ops_per_second: if time > 0.0 { mat_ops as f64 / time } else { f64::INFINITY },
            converged_runs: converged,
            repetitions,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{Cholesky, DenseMatrix};
    use crate::direction::DirectionStream;
    use crate::sparse::SparseMatrix;

    fn tridiag(n: usize) -> UnitDiagonalSystem {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 1.0));
            if i + 1 < n {
                t.push((i, i + 1, -0.45));
                t.push((i + 1, i, -0.45));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, t).unwrap();
        UnitDiagonalSystem::new(a, (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect()).unwrap()
    }

    #[test]
    fn exact_preconditioner_takes_one_step() {
        let sys = tridiag(30);
        let chol = Cholesky::factor(&DenseMatrix::from_sparse(sys.matrix()).unwrap()).unwrap();
        let (_, rep) = fcg_with_preconditioner(&sys, &[0.0; 30], 1e-10, 10, 1, |_, r| Ok(chol.solve(r))).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.outer_iterations, 1);
    }

    #[test]
    fn identity_converges_once_inner_covers_all_coordinates() {
        let n = 6;
        let b = vec![1.0, -2.0, 3.0, 0.5, 0.0, 4.0];
        let sys = UnitDiagonalSystem::new(SparseMatrix::identity(n), b.clone()).unwrap();
        let cfg = FcgConfig::new(10, 3);
        let stream = DirectionStream::new(cfg.inner_for(n, 0).base.seed, n);
        let mut hit = vec![false; n];
        stream.iter(0, 10 * n as u64).for_each(|r| hit[r] = true);
        assert!(hit.iter().all(|&h| h));
        let (x, rep) = fcg_solve(&sys, &cfg, &vec![0.0; n]).unwrap();
        assert_eq!(rep.outer_iterations, 1);
        assert!(rep.converged);
        assert_eq!(x, b);
        assert_eq!(rep.matrix_operations, 11);
    }

    #[test]
    fn converges_and_is_deterministic() {
        let sys = tridiag(40);
        let cfg = FcgConfig::new(2, 11);
        let (x1, r1) = fcg_solve(&sys, &cfg, &[0.0; 40]).unwrap();
        let (x2, r2) = fcg_solve(&sys, &cfg, &[0.0; 40]).unwrap();
        assert!(r1.converged && r1.relative_residual <= 1e-8);
        assert_eq!(x1, x2);
        assert_eq!(r1.outer_iterations, r2.outer_iterations);
        assert_eq!(r1.matrix_operations, r1.outer_iterations * 3);
    }

    #[test]
    fn max_outer_is_reported_not_fatal() {
        let sys = tridiag(40);
        let (_, rep) = fcg_solve(&sys, &FcgConfig::new(1, 0).with_max_outer(2), &[0.0; 40]).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.outer_iterations, 2);
    }

    #[test]
    fn tradeoff_rows() {
        let sys = UnitDiagonalSystem::new(SparseMatrix::identity(1), vec![2.0]).unwrap();
        let rows = sweep_tradeoff_experiment(&sys, &FcgConfig::new(1, 0), &[1], 5).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].outer_iterations, 1);
        assert_eq!(rows[0].mat_ops, 2);
        assert!(sweep_tradeoff_experiment(&sys, &FcgConfig::new(1, 0), &[], 5).is_err());
    }
}
