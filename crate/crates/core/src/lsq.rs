//! Coordinate descent for `min ‖Ax - b‖₂` on column-normalized `A`.
//!
//! Each step picks a column `j`, recomputes the residual entries on the
//! support of that column from the rows of `A` and moves `x_j` by
//! `β · a_jᵀ (b - A x)`. No residual vector is maintained, so the
//! synchronous and asynchronous paths execute the same arithmetic.

use crate::async_solver::{run_async, AsyncConfig, AsyncResult, CoordinateKernel};
use crate::direction::DirectionStream;
use crate::error::{Error, Result};
use crate::rgs::{ErrorTrace, SolveConfig, TraceRecorder};
use crate::sparse::{norm2, ColumnMatrix, SparseMatrix, UnitDiagonalSystem};

#[derive(Clone, Debug)]
pub struct LsqSystem {
    a_cols: ColumnMatrix,
    a_rows: SparseMatrix,
    rhs: Vec<f64>,
    col_scale: Vec<f64>,
}

/// Scales every column of `a` to unit 2-norm.
pub fn normalize_columns(a: &ColumnMatrix, z: &[f64]) -> Result<LsqSystem> {
    if z.len() != a.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: a.n_rows(),
            got: z.len(),
        });
    }
    if a.n_rows() < a.n_cols() {
        return Err(Error::InvalidParameter(format!(
            "least squares needs at least as many rows as columns, got {}x{}",
            a.n_rows(),
            a.n_cols()
        )));
    }
    let mut col_scale = Vec::with_capacity(a.n_cols());
    for j in 0..a.n_cols() {
        let s = a.col_norm(j);
        if s == 0.0 || !s.is_finite() {
            return Err(Error::ZeroColumn { col: j });
        }
        col_scale.push(s);
    }
    let inv: Vec<f64> = col_scale.iter().map(|s| 1.0 / s).collect();
    let a_cols = a.scale_columns(&inv);
    Ok(LsqSystem {
        a_rows: a_cols.to_rows(),
        a_cols,
        rhs: z.to_vec(),
        col_scale,
    })
}

impl LsqSystem {
    pub fn from_rows(a: &SparseMatrix, z: &[f64]) -> Result<Self> {
        normalize_columns(&a.to_columns(), z)
    }

    pub fn n_rows(&self) -> usize {
        self.a_rows.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.a_rows.n_cols()
    }

    pub fn columns(&self) -> &ColumnMatrix {
        &self.a_cols
    }

    pub fn rows(&self) -> &SparseMatrix {
        &self.a_rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn col_scale(&self) -> &[f64] {
        &self.col_scale
    }

    /// Maps a solution of the normalized problem back: `x_i / s_i`.
    pub fn to_original(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.col_scale).map(|(v, s)| v / s).collect()
    }

    pub fn from_original(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.col_scale).map(|(v, s)| v * s).collect()
    }

    pub fn residual_norm(&self, x: &[f64]) -> f64 {
        norm2(&self.a_rows.residual(&self.rhs, x).expect("dimension"))
    }

    /// `‖x - x*‖²_X` with `X = AᵀA`, computed as `‖A(x - x*)‖²₂`.
    pub fn x_norm_error_sq(&self, x: &[f64], x_star: &[f64]) -> f64 {
        let e: Vec<f64> = x.iter().zip(x_star).map(|(a, b)| a - b).collect();
        let ae = self.a_rows.spmv(&e).expect("dimension");
        ae.iter().map(|v| v * v).sum()
    }

    /// `AᵀA x = Aᵀb` as a unit-diagonal system. Diagonal entries equal one
    /// up to rounding and are set to exactly one.
    pub fn gram_system(&self) -> Result<UnitDiagonalSystem> {
        let g = self.a_rows.gram();
        let triplets = g.triplets().map(|(i, j, v)| (i, j, if i == j { 1.0 } else { v }));
        let g = SparseMatrix::from_triplets(g.n_rows(), g.n_cols(), triplets)?;
        let rhs = self.a_rows.spmv_transpose(&self.rhs)?;
        UnitDiagonalSystem::new(g, rhs)
    }

    fn check_dims(&self, x0: &[f64], x_star: Option<&[f64]>) -> Result<()> {
        let n = self.n_cols();
        for len in std::iter::once(x0.len()).chain(x_star.map(<[f64]>::len)) {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        Ok(())
    }
}

/// Reused buffers for gathering the read pattern of one step.
#[derive(Clone, Debug)]
pub struct LsqScratch {
    value: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<usize>,
}

impl LsqScratch {
    pub fn new(n: usize) -> Self {
        LsqScratch {
            value: vec![0.0; n],
            seen: vec![false; n],
            touched: Vec::new(),
        }
    }
}

struct LsqKernel<'a>(&'a LsqSystem);

impl LsqKernel<'_> {
    fn gamma_impl<F: FnMut(usize) -> f64>(&self, j: usize, mut read: F, s: &mut LsqScratch) -> f64 {
        let sys = self.0;
        let (rows, col_vals) = sys.a_cols.col(j);
        // Every iterate entry on the union of the row patterns is read once.
        for &i in rows {
            for &c in sys.a_rows.row(i).0 {
                if !s.seen[c] {
                    s.seen[c] = true;
                    s.value[c] = read(c);
                    s.touched.push(c);
                }
            }
        }
        let mut gamma = 0.0;
        for (&i, &a_ij) in rows.iter().zip(col_vals) {
            let (cols, vals) = sys.a_rows.row(i);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * s.value[c];
            }
            gamma += a_ij * (sys.rhs[i] - acc);
        }
        for c in s.touched.drain(..) {
            s.seen[c] = false;
        }
        gamma
    }
}

impl CoordinateKernel for LsqKernel<'_> {
    type Scratch = LsqScratch;

    fn dim(&self) -> usize {
        self.0.n_cols()
    }

    fn scratch(&self) -> LsqScratch {
        LsqScratch::new(self.0.n_cols())
    }

    fn gamma<F: FnMut(usize) -> f64>(&self, r: usize, read: F, s: &mut LsqScratch) -> f64 {
        self.gamma_impl(r, read, s)
    }

    fn pattern(&self, r: usize, out: &mut Vec<usize>) {
        out.clear();
        for &i in self.0.a_cols.col(r).0 {
            out.extend_from_slice(self.0.a_rows.row(i).0);
        }
        out.sort_unstable();
        out.dedup();
    }

    fn max_pattern(&self) -> usize {
        let mut buf = Vec::new();
        (0..self.dim())
            .map(|r| {
                self.pattern(r, &mut buf);
                buf.len()
            })
            .max()
            .unwrap_or(0)
    }

    fn residual_norm(&self, x: &[f64]) -> f64 {
        self.0.residual_norm(x)
    }

    fn error_sq(&self, x: &[f64], x_star: &[f64]) -> f64 {
        self.0.x_norm_error_sq(x, x_star)
    }
}

/// One step on column `j`. Returns `γ`.
pub fn lsq_step(sys: &LsqSystem, x: &mut [f64], j: usize, beta: f64, scratch: &mut LsqScratch) -> f64 {
    let gamma = LsqKernel(sys).gamma_impl(j, |c| x[c], scratch);
    x[j] += beta * gamma;
    gamma
}

/// Synchronous loop over the direction stream. The trace reports
/// `‖Ax - b‖₂` and, with `x_star`, the squared X-norm error.
pub fn solve_lsq_sync(
    sys: &LsqSystem,
    cfg: &SolveConfig,
    x0: &[f64],
    x_star: Option<&[f64]>,
) -> Result<(Vec<f64>, ErrorTrace)> {
    cfg.validate()?;
    sys.check_dims(x0, x_star)?;
    let stream = DirectionStream::new(cfg.seed, sys.n_cols());
    let x_star = x_star.filter(|_| cfg.record_a_norm_error);
    let mut rec = TraceRecorder::new(x_star.is_some());
    let mut scratch = LsqScratch::new(sys.n_cols());
    let mut x = x0.to_vec();
    let checkpoint = |rec: &mut TraceRecorder, j: u64, x: &[f64]| {
        rec.record(j, sys.residual_norm(x), x_star.map(|xs| sys.x_norm_error_sq(x, xs)));
    };
    checkpoint(&mut rec, 0, &x);
    for j in 0..cfg.total_iterations {
        lsq_step(sys, &mut x, stream.direction_at(j), cfg.beta, &mut scratch);
        if (j + 1) % cfg.checkpoint_every == 0 {
            checkpoint(&mut rec, j + 1, &x);
        }
    }
    checkpoint(&mut rec, cfg.total_iterations, &x);
    Ok((x, rec.finish()))
}

/// Multi-threaded variant under the shared-iterate contract of
/// [`crate::async_solver`].
pub fn solve_lsq_async(
    sys: &LsqSystem,
    cfg: &AsyncConfig,
    x0: &[f64],
    x_star: Option<&[f64]>,
) -> Result<AsyncResult> {
    sys.check_dims(x0, x_star)?;
    run_async(&LsqKernel(sys), cfg, x0, x_star)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(d: &[Vec<f64>]) -> SparseMatrix {
        SparseMatrix::from_dense(d).unwrap()
    }

    #[test]
    fn normalization_examples() {
        let sys = LsqSystem::from_rows(&rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]), &[1.0, 1.0]).unwrap();
        assert_eq!(sys.col_scale(), &[1.0, 1.0]);

        let sys = LsqSystem::from_rows(&rows(&[vec![2.0], vec![0.0]]), &[4.0, 1.0]).unwrap();
        assert_eq!(sys.col_scale(), &[2.0]);
        assert_eq!(sys.columns().col(0).1, &[1.0]);
        let (x, _) = solve_lsq_sync(&sys, &SolveConfig::new(1, 0), &[0.0], None).unwrap();
        assert_eq!(sys.to_original(&x), vec![2.0]);

        let zero = SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0)]).unwrap();
        assert!(matches!(LsqSystem::from_rows(&zero, &[1.0, 1.0]), Err(Error::ZeroColumn { col: 1 })));
    }

    #[test]
    fn identity_reduces_to_rgs() {
        let b = [3.0, -1.0, 2.0];
        let lsq = LsqSystem::from_rows(&SparseMatrix::identity(3), &b).unwrap();
        let unit = UnitDiagonalSystem::new(SparseMatrix::identity(3), b.to_vec()).unwrap();
        let cfg = SolveConfig::new(20, 9).with_beta(0.7);
        let (xl, _) = solve_lsq_sync(&lsq, &cfg, &[0.0; 3], None).unwrap();
        let (xr, _) = crate::rgs::solve_sync(&unit, &cfg, &[0.0; 3], None).unwrap();
        assert_eq!(xl, xr);
    }

    #[test]
    fn tall_diagonal_one_sweep() {
        let a = rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]);
        let sys = LsqSystem::from_rows(&a, &[1.0, 2.0, 3.0]).unwrap();
        let mut x = vec![0.0, 0.0];
        let mut s = LsqScratch::new(2);
        lsq_step(&sys, &mut x, 0, 1.0, &mut s);
        lsq_step(&sys, &mut x, 1, 1.0, &mut s);
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn async_single_thread_matches_sync() {
        let a = rows(&[vec![1.0, 0.5, 0.0], vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![0.3, 0.2, 0.0]]);
        let sys = LsqSystem::from_rows(&a, &[1.0, 0.0, -1.0, 2.0]).unwrap();
        let cfg = SolveConfig::new(300, 5).with_beta(0.5).with_checkpoint_every(50);
        let (xs, ts) = solve_lsq_sync(&sys, &cfg, &[0.0; 3], None).unwrap();
        let r = solve_lsq_async(&sys, &AsyncConfig::new(cfg, 1), &[0.0; 3], None).unwrap();
        assert_eq!(
            r.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            xs.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(r.trace.residual_2norm, ts.residual_2norm);
    }

    #[test]
    fn gram_system_has_unit_diagonal() {
        let a = rows(&[vec![3.0, 1.0], vec![4.0, 0.0], vec![0.0, 2.0]]);
        let sys = LsqSystem::from_rows(&a, &[1.0, 1.0, 1.0]).unwrap();
        let g = sys.gram_system().unwrap();
        assert_eq!(g.dim(), 2);
        assert!((g.rhs()[0] - 7.0 / 5.0).abs() < 1e-15);
    }
}
