//! Small dense kernels for desk-scale reference computations: Cholesky
//! factorization and cyclic Jacobi eigenvalues.

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Square row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_sparse(a: &SparseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NotSquare {
                n_rows: a.n_rows(),
                n_cols: a.n_cols(),
            });
        }
        let mut d = DenseMatrix::zeros(a.n_rows());
        for (i, j, v) in a.triplets() {
            d[(i, j)] = v;
        }
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.n.max(1))
            .take(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.dim();
        let mut l = DenseMatrix::zeros(n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { index: j, pivot: d });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[(i, k)] * y[k];
            }
            y[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.l[(k, i)] * y[k];
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
/// sorted ascending.
///
/// Sweeps continue until the off-diagonal Frobenius mass falls below
/// `1e-15` of the total, or `max_sweeps` is reached.
pub fn jacobi_eigenvalues(a: &DenseMatrix, max_sweeps: usize) -> Vec<f64> {
    let n = a.dim();
    let mut m = a.clone();
    let total: f64 = m.data.iter().map(|v| v * v).sum();
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[(i, j)] * m[(i, j)];
                }
            }
        }
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[&[f64]]) -> DenseMatrix {
        let n = rows.len();
        let mut d = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                d[(i, j)] = rows[i][j];
            }
        }
        d
    }

    #[test]
    fn jacobi_two_by_two() {
        let ev = jacobi_eigenvalues(&dense(&[&[1.0, 0.5], &[0.5, 1.0]]), 50);
        assert!((ev[0] - 0.5).abs() < 1e-14 && (ev[1] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn jacobi_trace_and_known_spectrum() {
        // Tridiagonal (-1, 2, -1) has eigenvalues 2 - 2 cos(k pi / (n+1)).
        let n = 12;
        let mut d = DenseMatrix::zeros(n);
        for i in 0..n {
            d[(i, i)] = 2.0;
            if i + 1 < n {
                d[(i, i + 1)] = -1.0;
                d[(i + 1, i)] = -1.0;
            }
        }
        let ev = jacobi_eigenvalues(&d, 100);
        for (k, e) in ev.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((e - exact).abs() < 1e-12, "{e} vs {exact}");
        }
        assert!((ev.iter().sum::<f64>() - d.trace()).abs() < 1e-12);
    }

    #[test]
    fn cholesky_solves_and_rejects_indefinite() {
        let a = dense(&[&[4.0, 0.0], &[0.0, 9.0]]);
        assert_eq!(Cholesky::factor(&a).unwrap().solve(&[8.0, 27.0]), vec![2.0, 3.0]);
        let bad = dense(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(matches!(
            Cholesky::factor(&bad),
            Err(Error::NotPositiveDefinite { index: 1, .. })
        ));
    }
}
