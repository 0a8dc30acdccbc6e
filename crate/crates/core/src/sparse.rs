//! Compressed sparse storage, unit-diagonal rescaling and the row statistics
//! that enter the asynchronous convergence bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-compressed real matrix.
///
/// Rows are sorted by column index and contain no duplicates. The
/// `symmetric` flag is set exactly when the matrix is square and every
/// stored `(i, j, v)` has a bitwise identical mirror `(j, i, v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_start: Vec<usize>,
    col_index: Vec<usize>,
    value: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets in any order.
    ///
    /// Explicit zeros are kept as stored entries. Repeated coordinates are
    /// rejected rather than summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (row, col, v) in triplets {
            if row >= n_rows || col >= n_cols {
                return Err(Error::IndexOutOfBounds {
                    row,
                    col,
                    n_rows,
                    n_cols,
                });
            }
            entries.push((row, col, v));
        }
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::DuplicateEntry {
                    row: w[0].0,
                    col: w[0].1,
                });
            }
        }

        let mut row_start = vec![0usize; n_rows + 1];
        for &(row, _, _) in &entries {
            row_start[row + 1] += 1;
        }
        for i in 0..n_rows {
            row_start[i + 1] += row_start[i];
        }
        let col_index = entries.iter().map(|e| e.1).collect();
        let value = entries.iter().map(|e| e.2).collect();

        let mut m = SparseMatrix {
            n_rows,
            n_cols,
            row_start,
            col_index,
            value,
            symmetric: false,
        };
        m.symmetric = m.detect_symmetry();
        Ok(m)
    }

    /// Row-major dense input; exact zeros are not stored.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n_rows, n_cols, triplets)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0))).expect("identity is well formed")
    }

    fn detect_symmetry(&self) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        (0..self.n_rows).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .all(|(&j, &v)| self.get(j, i).map(f64::to_bits) == Some(v.to_bits()))
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.value.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row_start(&self) -> &[usize] {
        &self.row_start
    }

    pub fn col_index(&self) -> &[usize] {
        &self.col_index
    }

    pub fn values(&self) -> &[f64] {
        &self.value
    }

    /// Column indices and values stored in row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_start[i]..self.row_start[i + 1];
        (&self.col_index[span.clone()], &self.value[span])
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_start[i + 1] - self.row_start[i]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i >= self.n_rows {
            return None;
        }
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).ok().map(|k| vals[k])
    }

    /// Iterates stored entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    /// Stored diagonal, `None` where a row has no diagonal entry.
    pub fn diagonal(&self) -> Vec<Option<f64>> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// `A_i . x` over the stored entries of row `i`.
    pub fn row_dot(&self, i: usize, x: &[f64]) -> Result<f64> {
        if i >= self.n_rows {
            return Err(Error::IndexOutOfBounds {
                row: i,
                col: 0,
                n_rows: self.n_rows,
                n_cols: self.n_cols,
            });
        }
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: x.len(),
            });
        }
        Ok(self.row_dot_unchecked(i, x))
    }

    #[inline]
    pub(crate) fn row_dot_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        let mut acc = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            acc += v * x[c];
        }
        acc
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: x.len(),
            });
        }
        Ok((0..self.n_rows)
            .map(|i| self.row_dot_unchecked(i, x))
            .collect())
    }

    /// `Aᵀ y` without forming the transpose.
    pub fn spmv_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                got: y.len(),
            });
        }
        let mut out = vec![0.0; self.n_cols];
        for (i, &yi) in y.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                out[c] += v * yi;
            }
        }
        Ok(out)
    }

    /// `b - A x`.
    pub fn residual(&self, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                got: b.len(),
            });
        }
        let ax = self.spmv(x)?;
        Ok(b.iter().zip(ax).map(|(bi, axi)| bi - axi).collect())
    }

    /// `v^T A v`. Requires a square matrix of matching dimension.
    pub fn quad_form(&self, v: &[f64]) -> Result<f64> {
        let av = self.spmv(v)?;
        Ok(dot(&av, v))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    /// Column-compressed copy, built by one counting pass over the rows.
    pub fn to_columns(&self) -> ColumnMatrix {
        let mut col_start = vec![0usize; self.n_cols + 1];
        for &c in &self.col_index {
            col_start[c + 1] += 1;
        }
        for j in 0..self.n_cols {
            col_start[j + 1] += col_start[j];
        }
        let mut next = col_start.clone();
        let mut row_index = vec![0usize; self.nnz()];
        let mut value = vec![0.0; self.nnz()];
        for (i, j, v) in self.triplets() {
            let k = next[j];
            row_index[k] = i;
            value[k] = v;
            next[j] += 1;
        }
        ColumnMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            col_start,
            row_index,
            value,
        }
    }

    /// `Aᵀ` in row storage.
    pub fn transpose(&self) -> SparseMatrix {
        let cols = self.to_columns();
        let mut m = SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_start: cols.col_start,
            col_index: cols.row_index,
            value: cols.value,
            symmetric: false,
        };
        m.symmetric = m.detect_symmetry();
        m
    }

    /// Explicit `Aᵀ A` in row storage.
    pub fn gram(&self) -> SparseMatrix {
        let cols = self.to_columns();
        let n = self.n_cols;
        let mut triplets = Vec::new();
        let mut acc = vec![0.0; n];
        let mut touched = vec![false; n];
        let mut pattern = Vec::new();
        for i in 0..n {
            let (rows, vals) = cols.col(i);
            for (&r, &a_ri) in rows.iter().zip(vals) {
                let (rcols, rvals) = self.row(r);
                for (&j, &a_rj) in rcols.iter().zip(rvals) {
                    if !touched[j] {
                        touched[j] = true;
                        pattern.push(j);
                    }
                    acc[j] += a_ri * a_rj;
                }
            }
            for &j in &pattern {
                triplets.push((i, j, acc[j]));
                acc[j] = 0.0;
                touched[j] = false;
            }
            pattern.clear();
        }
        let mut g = SparseMatrix::from_triplets(n, n, triplets).expect("gram pattern is unique");
        // Entries (i,j) and (j,i) are accumulated in different orders.
        g.symmetrize_lower();
        g
    }

    /// Replaces every strictly upper entry by its lower mirror so the matrix
    /// is bitwise symmetric. The pattern must already be structurally symmetric.
    fn symmetrize_lower(&mut self) {
        if !self.is_square() {
            return;
        }
        for i in 0..self.n_rows {
            for k in self.row_start[i]..self.row_start[i + 1] {
                let j = self.col_index[k];
                if j > i {
                    if let Some(v) = self.get(j, i) {
                        self.value[k] = v;
                    }
                }
            }
        }
        self.symmetric = self.detect_symmetry();
    }
}

/// Column-compressed real matrix, used where column access dominates.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnMatrix {
    n_rows: usize,
    n_cols: usize,
    col_start: Vec<usize>,
    row_index: Vec<usize>,
    value: Vec<f64>,
}

impl ColumnMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.value.len()
    }

    #[inline]
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let span = self.col_start[j]..self.col_start[j + 1];
        (&self.row_index[span.clone()], &self.value[span])
    }

    pub fn col_norm(&self, j: usize) -> f64 {
        self.col(j).1.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Scales column `j` by `factors[j]`.
    pub fn scale_columns(&self, factors: &[f64]) -> ColumnMatrix {
        let mut out = self.clone();
        for j in 0..self.n_cols {
            for k in out.col_start[j]..out.col_start[j + 1] {
                out.value[k] *= factors[j];
            }
        }
        out
    }

    /// Back to row storage.
    pub fn to_rows(&self) -> SparseMatrix {
        let triplets = (0..self.n_cols).flat_map(|j| {
            let (rows, vals) = self.col(j);
            rows.iter().zip(vals).map(move |(&i, &v)| (i, j, v))
        });
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, triplets)
            .expect("column storage has unique coordinates")
    }
}

/// A symmetric system rescaled to unit diagonal, `A = D B D`, together with
/// the scaling needed to map solutions back (`y = D x`).
#[derive(Clone, Debug)]
pub struct UnitDiagonalSystem {
    a: SparseMatrix,
    rhs: Vec<f64>,
    scale: Vec<f64>,
    original_diagonal: Vec<f64>,
}

impl UnitDiagonalSystem {
    /// Wraps a matrix that already has an exact unit diagonal.
    pub fn new(a: SparseMatrix, rhs: Vec<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NotSquare {
                n_rows: a.n_rows(),
                n_cols: a.n_cols(),
            });
        }
        if !a.is_symmetric() {
            return Err(Error::NotSymmetric);
        }
        if rhs.len() != a.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: a.n_rows(),
                got: rhs.len(),
            });
        }
        for (i, d) in a.diagonal().into_iter().enumerate() {
            if d != Some(1.0) {
                return Err(Error::BadDiagonal {
                    row: i,
                    value: d.unwrap_or(0.0),
                });
            }
        }
        let n = a.n_rows();
        Ok(UnitDiagonalSystem {
            a,
            rhs,
            scale: vec![1.0; n],
            original_diagonal: vec![1.0; n],
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Diagonal of `D`.
    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    /// Diagonal of the matrix before rescaling.
    pub fn original_diagonal(&self) -> &[f64] {
        &self.original_diagonal
    }

    pub fn dim(&self) -> usize {
        self.a.n_rows()
    }

    /// Same matrix and scaling with a different right-hand side.
    pub fn with_rhs(&self, rhs: Vec<f64>) -> Result<Self> {
        if rhs.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: rhs.len(),
            });
        }
        Ok(UnitDiagonalSystem {
            a: self.a.clone(),
            rhs,
            scale: self.scale.clone(),
            original_diagonal: self.original_diagonal.clone(),
        })
    }

    /// Maps a solution of `A x = D z` to the solution `y = D x` of `B y = z`.
    pub fn to_original(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.scale).map(|(xi, si)| xi * si).collect()
    }

    /// Inverse of [`to_original`](Self::to_original).
    pub fn from_original(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.scale).map(|(yi, si)| yi / si).collect()
    }

    /// `‖b - A x‖₂`, recomputed from scratch.
    pub fn residual_norm(&self, x: &[f64]) -> f64 {
        let r = self.a.residual(&self.rhs, x).expect("dimensions checked");
        norm2(&r)
    }

    /// `‖x - x*‖²_A`.
    pub fn a_norm_error_sq(&self, x: &[f64], x_star: &[f64]) -> f64 {
        let e: Vec<f64> = x.iter().zip(x_star).map(|(a, b)| a - b).collect();
        self.a.quad_form(&e).expect("dimensions checked")
    }
}

/// Rescales a symmetric matrix with positive diagonal to unit diagonal.
///
/// Returns the system `A x = D z` with `A = D B D`, `D = diag(B)^{-1/2}`.
/// The diagonal of `A` is set to exactly 1.0.
pub fn rescale_to_unit_diagonal(b: &SparseMatrix, z: &[f64]) -> Result<UnitDiagonalSystem> {
    if !b.is_square() {
        return Err(Error::NotSquare {
            n_rows: b.n_rows(),
            n_cols: b.n_cols(),
        });
    }
    if !b.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    let n = b.n_rows();
    if z.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: z.len(),
        });
    }
    let mut original_diagonal = Vec::with_capacity(n);
    for (i, d) in b.diagonal().into_iter().enumerate() {
        match d {
            Some(v) if v > 0.0 && v.is_finite() => original_diagonal.push(v),
            other => {
                return Err(Error::BadDiagonal {
                    row: i,
                    value: other.unwrap_or(0.0),
                })
            }
        }
    }
    let scale: Vec<f64> = original_diagonal.iter().map(|d| 1.0 / d.sqrt()).collect();
    // s_i * s_j is commutative in IEEE arithmetic, so mirrored entries stay
    // bitwise equal.
    let triplets = b.triplets().map(|(i, j, v)| {
        if i == j {
            (i, j, 1.0)
        } else {
            (i, j, v * (scale[i] * scale[j]))
        }
    });
    let a = SparseMatrix::from_triplets(n, n, triplets)?;
    let rhs = z.iter().zip(&scale).map(|(zi, si)| zi * si).collect();
    Ok(UnitDiagonalSystem {
        a,
        rhs,
        scale,
        original_diagonal,
    })
}

/// Row statistics of a square matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixStats {
    pub n: usize,
    pub nnz: usize,
    /// `(1/n) max_l Σ_r |A_lr|`.
    pub rho: f64,
    /// `(1/n) max_l Σ_r A_lr²`.
    pub rho2: f64,
    pub inf_norm: f64,
    pub row_nnz_min: usize,
    pub row_nnz_max: usize,
    pub row_nnz_mean: f64,
}

pub fn compute_stats(a: &SparseMatrix) -> Result<MatrixStats> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            n_rows: a.n_rows(),
            n_cols: a.n_cols(),
        });
    }
    let n = a.n_rows();
    let mut inf_norm = 0.0f64;
    let mut max_sq = 0.0f64;
    let mut row_nnz_min = usize::MAX;
    let mut row_nnz_max = 0;
    for i in 0..n {
        let (_, vals) = a.row(i);
        inf_norm = inf_norm.max(vals.iter().map(|v| v.abs()).sum());
        max_sq = max_sq.max(vals.iter().map(|v| v * v).sum());
        row_nnz_min = row_nnz_min.min(vals.len());
        row_nnz_max = row_nnz_max.max(vals.len());
    }
    if n == 0 {
        row_nnz_min = 0;
    }
    let nf = n as f64;
    Ok(MatrixStats {
        n,
        nnz: a.nnz(),
        rho: inf_norm / nf,
        rho2: max_sq / nf,
        inf_norm,
        row_nnz_min,
        row_nnz_max,
        row_nnz_mean: if n == 0 { 0.0 } else { a.nnz() as f64 / nf },
    })
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
