//! Seeded test matrices and dense reference solvers.
//!
//! Every recipe produces a symmetric positive definite matrix with positive
//! diagonal, deterministic in `(recipe, seed)`. Positive definiteness is
//! checked by a dense Cholesky factorization when `n ≤ SPD_CHECK_CAP`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dense::{Cholesky, DenseMatrix};
use crate::direction::{unit_f64, uniform_below};
use crate::error::{Error, Result};
use crate::sparse::{rescale_to_unit_diagonal, SparseMatrix, UnitDiagonalSystem};

pub const SPD_CHECK_CAP: usize = 2048;

const RECIPE_TAG: u64 = 0x7e57_4a7e_0000_0001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecipeKind {
    Identity,
    BandedSpd,
    RandomSpd,
    LaplacianGrid,
    DiagDominant,
    /// Power-law row bandwidths: a few very long rows, many short ones.
    Skewed,
}

impl RecipeKind {
    pub const ALL: [RecipeKind; 6] = [
        RecipeKind::Identity,
        RecipeKind::BandedSpd,
        RecipeKind::RandomSpd,
        RecipeKind::LaplacianGrid,
        RecipeKind::DiagDominant,
        RecipeKind::Skewed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RecipeKind::Identity => "identity",
            RecipeKind::BandedSpd => "banded_spd",
            RecipeKind::RandomSpd => "random_spd",
            RecipeKind::LaplacianGrid => "laplacian_grid",
            RecipeKind::DiagDominant => "diag_dominant",
            RecipeKind::Skewed => "skewed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecipe {
    pub kind: RecipeKind,
    /// Matrix dimension; the grid side for `laplacian_grid`.
    pub n: usize,
    /// Half bandwidth (`banded_spd`) or largest row reach (`skewed`).
    #[serde(default)]
    pub bandwidth: usize,
    /// Off-diagonal fill probability (`random_spd`, `diag_dominant`).
    #[serde(default)]
    pub density: f64,
    #[serde(default)]
    pub seed: u64,
}

impl MatrixRecipe {
    fn plain(kind: RecipeKind, n: usize) -> Self {
        MatrixRecipe {
            kind,
            n,
            bandwidth: 0,
            density: 0.0,
            seed: 0,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::plain(RecipeKind::Identity, n)
    }

    pub fn banded_spd(n: usize, bandwidth: usize, seed: u64) -> Self {
        MatrixRecipe {
            bandwidth,
            seed,
            ..Self::plain(RecipeKind::BandedSpd, n)
        }
    }

    pub fn random_spd(n: usize, density: f64, seed: u64) -> Self {
        MatrixRecipe {
            density,
            seed,
            ..Self::plain(RecipeKind::RandomSpd, n)
        }
    }

    /// `k × k` grid, `k²` rows.
    pub fn laplacian_grid(k: usize) -> Self {
        Self::plain(RecipeKind::LaplacianGrid, k)
    }

    pub fn diag_dominant(n: usize, density: f64, seed: u64) -> Self {
        MatrixRecipe {
            density,
            seed,
            ..Self::plain(RecipeKind::DiagDominant, n)
        }
    }

    pub fn skewed(n: usize, bandwidth: usize, seed: u64) -> Self {
        MatrixRecipe {
            bandwidth,
            seed,
            ..Self::plain(RecipeKind::Skewed, n)
        }
    }

    /// Number of rows of the generated matrix.
    pub fn dim(&self) -> usize {
        match self.kind {
            RecipeKind::LaplacianGrid => self.n * self.n,
            _ => self.n,
        }
    }
}

impl fmt::Display for MatrixRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:n={}", self.kind.name(), self.n)?;
        match self.kind {
            RecipeKind::BandedSpd | RecipeKind::Skewed => write!(f, ",bandwidth={}", self.bandwidth)?,
            RecipeKind::RandomSpd | RecipeKind::DiagDominant => write!(f, ",density={}", self.density)?,
            _ => {}
        }
        match self.kind {
            RecipeKind::Identity | RecipeKind::LaplacianGrid => Ok(()),
            _ => write!(f, ",seed={}", self.seed),
        }
    }
}

/// Parses `kind:key=value,...`, e.g. `banded_spd:n=200,bandwidth=3,seed=7`
/// or `laplacian_grid:n=16`.
impl FromStr for MatrixRecipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidParameter(m);
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let kind = RecipeKind::ALL
            .into_iter()
            .find(|k| k.name() == kind)
            .ok_or_else(|| bad(format!("unknown recipe '{kind}'")))?;
        let mut r = Self::plain(kind, 0);
        match kind {
            RecipeKind::BandedSpd | RecipeKind::Skewed => r.bandwidth = 2,
            RecipeKind::RandomSpd | RecipeKind::DiagDominant => r.density = 0.05,
            _ => {}
        }
        for kv in rest.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got '{kv}'")))?;
            let num = |v: &str| v.parse::<u64>().map_err(|e| bad(format!("{k}: {e}")));
            match k {
                "n" => r.n = num(v)? as usize,
                "bandwidth" => r.bandwidth = num(v)? as usize,
                "seed" => r.seed = num(v)?,
                "density" => r.density = v.parse().map_err(|e| bad(format!("density: {e}")))?,
                _ => return Err(bad(format!("unknown recipe parameter '{k}'"))),
            }
        }
        if r.n == 0 {
            return Err(bad("recipe needs n > 0".into()));
        }
        Ok(r)
    }
}

struct Rng {
    key: u64,
    counter: u64,
}

impl Rng {
    fn new(seed: u64, kind: RecipeKind) -> Self {
        Rng {
            key: seed ^ RECIPE_TAG ^ (kind as u64).wrapping_mul(0x100_0000_01b3),
            counter: 0,
        }
    }

    fn unit(&mut self) -> f64 {
        self.counter += 1;
        unit_f64(self.key, self.counter, 0)
    }

    fn symmetric(&mut self) -> f64 {
        2.0 * self.unit() - 1.0
    }

    fn below(&mut self, bound: u64) -> u64 {
        self.counter += 1;
        uniform_below(self.key, self.counter, 1, bound)
    }
}

/// Builds a symmetric matrix from strictly-upper entries and a diagonal.
fn assemble(n: usize, upper: &[(usize, usize, f64)], diag: &[f64]) -> Result<SparseMatrix> {
    let mut t = Vec::with_capacity(2 * upper.len() + n);
    for &(i, j, v) in upper {
        t.push((i, j, v));
        t.push((j, i, v));
    }
    t.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
    SparseMatrix::from_triplets(n, n, t)
}

fn row_abs_sums(n: usize, upper: &[(usize, usize, f64)]) -> Vec<f64> {
    let mut s = vec![0.0; n];
    for &(i, j, v) in upper {
        s[i] += v.abs();
        s[j] += v.abs();
    }
    s
}

fn check_recipe(r: &MatrixRecipe) -> Result<()> {
    if r.n == 0 {
        return Err(Error::InvalidParameter("recipe needs n > 0".into()));
    }
    if matches!(r.kind, RecipeKind::RandomSpd | RecipeKind::DiagDominant) && !(0.0..=1.0).contains(&r.density) {
        return Err(Error::InvalidParameter(format!("density {} outside [0, 1]", r.density)));
    }
    Ok(())
}

/// The recipe's matrix without the positive definiteness check.
pub fn generate_unchecked(r: &MatrixRecipe) -> Result<SparseMatrix> {
    check_recipe(r)?;
    let n = r.dim();
    let mut rng = Rng::new(r.seed, r.kind);
    match r.kind {
        RecipeKind::Identity => Ok(SparseMatrix::identity(n)),
        RecipeKind::LaplacianGrid => {
            let k = r.n;
            let mut upper = Vec::new();
            for gy in 0..k {
                for gx in 0..k {
                    let i = gy * k + gx;
                    if gx + 1 < k {
                        upper.push((i, i + 1, -1.0));
                    }
                    if gy + 1 < k {
                        upper.push((i, i + k, -1.0));
                    }
                }
            }
            // 4 from the stencil plus the identity shift.
            assemble(n, &upper, &vec![5.0; n])
        }
        RecipeKind::BandedSpd => {
            let mut upper = Vec::new();
            for i in 0..n {
                for k in 1..=r.bandwidth {
                    if i + k < n {
                        upper.push((i, i + k, rng.symmetric() / k as f64));
                    }
                }
            }
            let s = row_abs_sums(n, &upper);
            let diag: Vec<f64> = s.iter().map(|v| v + 0.1 + rng.unit()).collect();
            assemble(n, &upper, &diag)
        }
        RecipeKind::Skewed => {
            let mut upper = Vec::new();
            let cap = r.bandwidth.max(1) as f64;
            for i in 0..n {
                // Pareto-like reach: most rows 1, a few up to `bandwidth`.
                let reach = (cap.powf(rng.unit().powi(4))).floor() as usize;
                for k in 1..=reach {
                    if i + k < n {
                        upper.push((i, i + k, rng.symmetric()));
                    }
                }
            }
            let s = row_abs_sums(n, &upper);
            let diag: Vec<f64> = s.iter().map(|v| v + 0.5 + rng.unit()).collect();
            assemble(n, &upper, &diag)
        }
        RecipeKind::DiagDominant => {
            let mut upper = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.unit() < r.density {
                        upper.push((i, j, rng.symmetric()));
                    }
                }
            }
            // Unit-diagonal strictly dominant core I + W, then a random
            // symmetric scaling D (I + W) D for a non-unit diagonal.
            let s = row_abs_sums(n, &upper);
            let smax = s.iter().copied().fold(0.0, f64::max);
            let w = if smax > 0.0 { 0.95 / smax } else { 0.0 };
            let d: Vec<f64> = (0..n).map(|_| 0.5 + 2.0 * rng.unit()).collect();
            let upper: Vec<_> = upper.into_iter().map(|(i, j, v)| (i, j, d[i] * (v * w) * d[j])).collect();
            let diag: Vec<f64> = d.iter().map(|x| x * x).collect();
            assemble(n, &upper, &diag)
        }
        RecipeKind::RandomSpd => {
            // B = MᵀM + I with sparse random M (unit diagonal plus fill).
            let mut t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.unit() < r.density {
                        t.push((i, j, rng.symmetric()));
                    }
                }
            }
            let m = SparseMatrix::from_triplets(n, n, t)?;
            let g = m.gram();
            let shifted = g.triplets().map(|(i, j, v)| (i, j, if i == j { v + 1.0 } else { v }));
            SparseMatrix::from_triplets(n, n, shifted)
        }
    }
}

/// Deterministic matrix for `recipe`, verified SPD for `n ≤ SPD_CHECK_CAP`.
pub fn generate(r: &MatrixRecipe) -> Result<SparseMatrix> {
    let a = generate_unchecked(r)?;
    if !a.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    if a.n_rows() <= SPD_CHECK_CAP {
        Cholesky::factor(&DenseMatrix::from_sparse(&a)?)?;
    }
    Ok(a)
}

/// Generated matrix rescaled to unit diagonal with the given original rhs.
pub fn unit_system(r: &MatrixRecipe, z: &[f64]) -> Result<UnitDiagonalSystem> {
    rescale_to_unit_diagonal(&generate(r)?, z)
}

/// Deterministic vector with entries in `[-1, 1)`.
pub fn random_vector(n: usize, seed: u64) -> Vec<f64> {
    (0..n as u64).map(|i| 2.0 * unit_f64(seed ^ RECIPE_TAG, i, 7) - 1.0).collect()
}

/// Dense `m × n` random matrix with entries in `[-1, 1)`, zeroed with
/// probability `1 - density` (the first entry of each column is always
/// kept, so no column is empty).
pub fn random_rectangular(m: usize, n: usize, density: f64, seed: u64) -> Result<SparseMatrix> {
    let mut rng = Rng::new(seed, RecipeKind::RandomSpd);
    let mut t = Vec::new();
    for j in 0..n {
        let keep_row = rng.below(m as u64) as usize;
        for i in 0..m {
            if i == keep_row || rng.unit() < density {
                t.push((i, j, rng.symmetric()));
            }
        }
    }
    SparseMatrix::from_triplets(m, n, t)
}

/// Solution of `A x = b` by dense Cholesky.
pub fn dense_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.n_rows() > SPD_CHECK_CAP {
        return Err(Error::TooLarge {
            n: a.n_rows(),
            cap: SPD_CHECK_CAP,
        });
    }
    if b.len() != a.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: a.n_rows(),
            got: b.len(),
        });
    }
    Ok(Cholesky::factor(&DenseMatrix::from_sparse(a)?)?.solve(b))
}

/// Least-squares solution through the dense normal equations.
pub fn dense_lsq_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    dense_solve(&a.gram(), &a.spmv_transpose(b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::jacobi_eigenvalues;
    use crate::sparse::{compute_stats, norm2};

    fn small_recipes() -> Vec<MatrixRecipe> {
        vec![
            MatrixRecipe::identity(7),
            MatrixRecipe::banded_spd(40, 3, 1),
            MatrixRecipe::random_spd(30, 0.1, 2),
            MatrixRecipe::laplacian_grid(5),
            MatrixRecipe::diag_dominant(35, 0.2, 3),
            MatrixRecipe::skewed(50, 12, 4),
        ]
    }

    #[test]
    fn recipes_are_spd_by_eigenvalues_and_deterministic() {
        for r in small_recipes() {
            let a = generate(&r).unwrap();
            assert!(a.is_symmetric(), "{r}");
            let ev = jacobi_eigenvalues(&DenseMatrix::from_sparse(&a).unwrap(), 100);
            assert!(ev[0] > 0.0, "{r}: {}", ev[0]);
            assert_eq!(generate(&r).unwrap(), a);
            rescale_to_unit_diagonal(&a, &vec![1.0; a.n_rows()]).unwrap();
        }
    }

    #[test]
    fn laplacian_structure() {
        let a = generate(&MatrixRecipe::laplacian_grid(4)).unwrap();
        assert_eq!(a.n_rows(), 16);
        assert!((0..16).all(|i| a.row_nnz(i) <= 5));
        assert_eq!(a.get(5, 5), Some(5.0));
        assert_eq!(a.get(5, 6), Some(-1.0));
        assert_eq!(a.get(5, 9), Some(-1.0));
        assert_eq!(a.get(3, 4), None);
    }

    #[test]
    fn diag_dominant_rho() {
        for seed in 0..5 {
            let n = 60;
            let sys = unit_system(&MatrixRecipe::diag_dominant(n, 0.3, seed), &vec![0.0; n]).unwrap();
            let s = compute_stats(sys.matrix()).unwrap();
            assert!(s.rho <= 2.0 / n as f64 + 1e-12);
        }
    }

    #[test]
    fn dense_solve_examples() {
        assert_eq!(dense_solve(&SparseMatrix::identity(3), &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let d = SparseMatrix::from_triplets(2, 2, [(0, 0, 4.0), (1, 1, 9.0)]).unwrap();
        assert_eq!(dense_solve(&d, &[8.0, 27.0]).unwrap(), vec![2.0, 3.0]);
        let a = generate(&MatrixRecipe::random_spd(50, 0.1, 9)).unwrap();
        let b = random_vector(50, 1);
        let x = dense_solve(&a, &b).unwrap();
        let r = a.residual(&b, &x).unwrap();
        assert!(norm2(&r) <= 1e-10 * norm2(&b));
    }

    #[test]
    fn recipe_strings() {
        let r: MatrixRecipe = "banded_spd:n=100,bandwidth=3,seed=7".parse().unwrap();
        assert_eq!(r, MatrixRecipe::banded_spd(100, 3, 7));
        assert_eq!(r.to_string().parse::<MatrixRecipe>().unwrap(), r);
        let g: MatrixRecipe = "laplacian_grid:n=16".parse().unwrap();
        assert_eq!(g.dim(), 256);
        assert!("nope:n=3".parse::<MatrixRecipe>().is_err());
        assert!("identity".parse::<MatrixRecipe>().is_err());
    }
}
