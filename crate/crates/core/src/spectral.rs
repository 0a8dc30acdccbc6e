//! Extreme eigenvalue and singular value estimates for the bound calculators.

use serde::{Deserialize, Serialize};

use crate::dense::{jacobi_eigenvalues, DenseMatrix};
use crate::direction::unit_f64;
use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, SparseMatrix};

pub const DEFAULT_DENSE_CAP: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMethod {
    ExactDense,
    PowerIteration,
    UserSupplied,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimates {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub kappa: f64,
    /// Largest singular value; only meaningful on the least-squares path.
    pub sigma_max: Option<f64>,
    pub method: SpectralMethod,
}

impl SpectralEstimates {
    pub fn user_supplied(lambda_min: f64, lambda_max: f64) -> Result<Self> {
        if !(lambda_min > 0.0 && lambda_max >= lambda_min && lambda_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < lambda_min <= lambda_max, got {lambda_min}, {lambda_max}"
            )));
        }
        Ok(SpectralEstimates {
            lambda_max,
            lambda_min,
            kappa: lambda_max / lambda_min,
            sigma_max: None,
            method: SpectralMethod::UserSupplied,
        })
    }
}

/// Full symmetric eigen-decomposition of a desk-scale matrix, returning the
/// sorted spectrum.
pub fn dense_eigenvalues(a: &SparseMatrix, size_cap: usize) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            n_rows: a.n_rows(),
            n_cols: a.n_cols(),
        });
    }
    if !a.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    if a.n_rows() > size_cap {
        return Err(Error::TooLarge {
            n: a.n_rows(),
            cap: size_cap,
        });
    }
    Ok(jacobi_eigenvalues(&DenseMatrix::from_sparse(a)?, 100))
}

/// Extreme eigenvalues by dense cyclic Jacobi rotations.
pub fn exact_dense_spectrum(a: &SparseMatrix, size_cap: usize) -> Result<SpectralEstimates> {
    let ev = dense_eigenvalues(a, size_cap)?;
    let (lambda_min, lambda_max) = match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(Error::InvalidParameter("empty matrix".into())),
    };
    Ok(SpectralEstimates {
        lambda_max,
        lambda_min,
        kappa: lambda_max / lambda_min,
        sigma_max: None,
        method: SpectralMethod::ExactDense,
    })
}

fn seeded_start(n: usize, seed: u64) -> Vec<f64> {
    // Strictly positive entries cannot be orthogonal to a Perron vector and
    // are almost surely not orthogonal to any eigenvector.
    (0..n as u64).map(|i| 0.5 + unit_f64(seed, i, 0x5eed)).collect()
}

fn power_iteration(
    n: usize,
    apply: impl Fn(&[f64]) -> Vec<f64>,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<f64> {
    let mut v = seeded_start(n, seed);
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut estimate = 0.0;
    for it in 0..max_iter {
        let w = apply(&v);
        let rayleigh = dot(&w, &v);
        let nw = norm2(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        // Residual of the eigen-pair bounds the distance to the nearest
        // eigenvalue; for a symmetric matrix this is the stopping test.
        let resid = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - rayleigh * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        estimate = rayleigh;
        if resid <= tol * rayleigh.abs() || (it > 0 && resid == 0.0) {
            return Ok(rayleigh);
        }
        v = w.into_iter().map(|x| x / nw).collect();
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        estimate,
    })
}

/// Power-iteration estimate of the largest eigenvalue of a symmetric
/// positive semi-definite matrix. Deterministic in `seed`.
pub fn estimate_lambda_max(a: &SparseMatrix, tol: f64, max_iter: usize, seed: u64) -> Result<f64> {
    if !a.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    power_iteration(a.n_rows(), |v| a.spmv(v).expect("square"), tol, max_iter, seed)
}

/// Largest singular value as `sqrt(λ_max(AᵀA))`, applying the Gram operator
/// as two products per step.
pub fn estimate_sigma_max(a: &SparseMatrix, tol: f64, max_iter: usize, seed: u64) -> Result<f64> {
    let lam = power_iteration(
        a.n_cols(),
        |v| {
            let av = a.spmv(v).expect("dimension");
            a.spmv_transpose(&av).expect("dimension")
        },
        tol,
        max_iter,
        seed,
    )?;
    Ok(lam.max(0.0).sqrt())
}
