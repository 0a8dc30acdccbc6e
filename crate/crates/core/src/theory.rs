//! Closed-form convergence bounds.
//!
//! Notation: `δ_max = 1 - λ_max/n`, `T₀ = ⌈log(1/2) / log δ_max⌉`,
//! `T = T₀ + τ`. Powers of `δ_max` and of the per-step contraction are
//! evaluated in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SpectralEstimates;
use crate::sparse::MatrixStats;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub n: u64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    pub rho: f64,
    pub rho2: f64,
    pub tau: u64,
    pub beta: f64,
    /// Largest singular value of the least-squares matrix. When set,
    /// `lambda_*` describe `X = AᵀA`, so `kappa` is the square of the
    /// singular-value condition number.
    #[serde(default)]
    pub sigma_max: Option<f64>,
}

impl TheoryParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(n: u64, lambda_min: f64, lambda_max: f64, rho: f64, rho2: f64, tau: u64, beta: f64) -> Result<Self> {
        let p = TheoryParams {
            n,
            lambda_min,
            lambda_max,
            kappa: lambda_max / lambda_min,
            rho,
            rho2,
            tau,
            beta,
            sigma_max: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_estimates(stats: &MatrixStats, spec: &SpectralEstimates, tau: u64, beta: f64) -> Result<Self> {
        Self::new(stats.n as u64, spec.lambda_min, spec.lambda_max, stats.rho, stats.rho2, tau, beta)
    }

    /// Parameters for the least-squares bounds from the extreme singular
    /// values of the column-normalized matrix and `ρ₂` of its Gram matrix.
    pub fn for_lsq(n: u64, sigma_min: f64, sigma_max: f64, rho2_gram: f64, tau: u64, beta: f64) -> Result<Self> {
        let mut p = Self::new(n, sigma_min * sigma_min, sigma_max * sigma_max, 0.0, rho2_gram, tau, beta)?;
        p.sigma_max = Some(sigma_max);
        Ok(p)
    }

    pub fn with_tau(mut self, tau: u64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(self.lambda_min > 0.0 && self.lambda_max >= self.lambda_min && self.lambda_max.is_finite()) {
            return bad(format!(
                "need 0 < lambda_min <= lambda_max, got {} and {}",
                self.lambda_min, self.lambda_max
            ));
        }
        if !(self.kappa >= 1.0 && self.kappa.is_finite()) {
            return bad(format!("kappa {} must be finite and at least 1", self.kappa));
        }
        if !(self.rho >= 0.0 && self.rho2 >= 0.0) {
            return bad("rho and rho2 must be non-negative".into());
        }
        if !(self.beta > 0.0 && self.beta < 2.0) {
            return bad(format!("step size {} outside (0, 2)", self.beta));
        }
        if let Some(s) = self.sigma_max {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma_max {s} must be positive"));
            }
        }
        Ok(())
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    fn tf(&self) -> f64 {
        self.tau as f64
    }
}

/// Whether a bound's hypothesis holds, with the inequality checked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Applicability {
    pub applicable: bool,
    pub condition: String,
    pub value: f64,
}

impl Applicability {
    fn positive(condition: &str, value: f64) -> Self {
        Applicability {
            applicable: value > 0.0,
            condition: condition.to_string(),
            value,
        }
    }
}

/// `(1 - β(2-β)λ_min/n)^m · e0`.
pub fn rgs_bound(p: &TheoryParams, m: u64, e0: f64) -> Result<f64> {
    p.validate()?;
    let q = p.beta * (2.0 - p.beta) * p.lambda_min / p.nf();
    Ok(pow_one_minus(q, m as f64) * e0)
}

/// Smallest `m` with `m ≥ n/(β(2-β)λ_min) · ln(1/(δε²))`.
pub fn markov_iterations(p: &TheoryParams, epsilon: f64, delta: f64) -> Result<u64> {
    p.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} must be positive")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta {delta} outside (0, 1)")));
    }
    let m = p.nf() / (p.beta * (2.0 - p.beta) * p.lambda_min) * -(delta.ln() + 2.0 * epsilon.ln());
    Ok(if m <= 0.0 { 0 } else { m.ceil() as u64 })
}

/// `(1 - q)^e` via `exp(e · ln(1 - q))`; integer powers of a non-positive
/// base fall back to `powi`.
fn pow_one_minus(q: f64, e: f64) -> f64 {
    if e == 0.0 {
        return 1.0;
    }
    if q >= 1.0 && e.fract() == 0.0 && e.abs() <= i32::MAX as f64 {
        return (1.0 - q).powi(e as i32);
    }
    (e * (-q).ln_1p()).exp()
}

/// `ν_τ = 1 - 2ρτ` for `β = 1`, with the `2ρτ < 1` flag.
pub fn nu_tau(p: &TheoryParams) -> (f64, Applicability) {
    let v = 1.0 - 2.0 * p.rho * p.tf();
    (v, Applicability::positive("1 - 2 rho tau > 0", v))
}

/// `ν_τ(β) = 2β - β² - 2ρτβ²`.
pub fn nu_tau_beta(p: &TheoryParams) -> (f64, Applicability) {
    let b = p.beta;
    let v = 2.0 * b - b * b - 2.0 * p.rho * p.tf() * b * b;
    (v, Applicability::positive("2 beta - beta^2 - 2 rho tau beta^2 > 0", v))
}

/// Maximizer `1/(1 + 2ρτ)` of `ν_τ(β)`; it is also the maximum value.
pub fn beta_tilde(p: &TheoryParams) -> f64 {
    1.0 / (1.0 + 2.0 * p.rho * p.tf())
}

/// `ω_τ(β) = 2β(1 - β - ρ₂τ²β/2)`.
pub fn omega_tau(p: &TheoryParams) -> (f64, Applicability) {
    let b = p.beta;
    let t = p.tf();
    let inner = 1.0 - b - p.rho2 * t * t * b / 2.0;
    (
        2.0 * b * inner,
        Applicability::positive("beta (1 - beta - rho2 tau^2 beta / 2) > 0", b * inner),
    )
}

/// `T₀ = ⌈log(1/2)/log(1 - λ/n)⌉`, and `1` when `λ ≥ n`.
pub fn t0(lambda: f64, n: u64) -> u64 {
    let q = lambda / n as f64;
    if q >= 1.0 {
        return 1;
    }
    let v = (0.5f64).ln() / (-q).ln_1p();
    (v.ceil() as u64).max(1)
}

/// `χ(β) = ρτ²β²λ_max(1 - λ_max/n)^{-2τ}/n`.
pub fn chi(p: &TheoryParams) -> f64 {
    let t = p.tf();
    p.rho * t * t * p.beta * p.beta * p.lambda_max * pow_one_minus(p.lambda_max / p.nf(), -2.0 * t) / p.nf()
}

/// `ψ(β) = ρ₂τ³β²λ_max(1 - λ_max/n)^{-2τ}/n`.
pub fn psi(p: &TheoryParams) -> f64 {
    psi_with(p, p.lambda_max)
}

fn psi_with(p: &TheoryParams, lambda: f64) -> f64 {
    let t = p.tf();
    p.rho2 * t * t * t * p.beta * p.beta * lambda * pow_one_minus(lambda / p.nf(), -2.0 * t) / p.nf()
}

/// One of the (a)/(b) bound pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    /// Rate constant `ν_τ(β)` or `ω_τ(β)`.
    pub rate: f64,
    /// Iteration count after which the (a) factor applies (`T₀`).
    pub m_a: u64,
    pub factor_a: f64,
    pub bound_a: f64,
    /// Chain length `r`; the (b) factor applies for `m ≥ r·T`.
    pub r: u32,
    pub m_b: u64,
    /// Additive penalty inside the chain (`χ` or `ψ`).
    pub penalty: f64,
    pub factor_b: f64,
    pub bound_b: f64,
    pub applicability: Applicability,
    /// False when `λ_max ≥ n`; the factors are then evaluated formally.
    pub chain_defined: bool,
}

fn bound_pair(
    rate: (f64, Applicability),
    kappa: f64,
    lambda: f64,
    n: u64,
    tau: u64,
    penalty: f64,
    e0: f64,
    r: u32,
) -> BoundPair {
    let (nu, applicability) = rate;
    let q = lambda / n as f64;
    let m_a = t0(lambda, n);
    let factor_a = 1.0 - nu / (2.0 * kappa);
    let chain_defined = q < 1.0;
    let factor_b = if r == 0 {
        1.0
    } else {
        let step = 1.0 - nu * pow_one_minus(q, tau as f64) / (2.0 * kappa) + penalty;
        factor_a * step.powi(r as i32 - 1)
    };
    BoundPair {
        rate: nu,
        m_a,
        factor_a,
        bound_a: factor_a * e0,
        r,
        m_b: r as u64 * (m_a + tau),
        penalty,
        factor_b,
        bound_b: factor_b * e0,
        applicability,
        chain_defined,
    }
}

/// Consistent-read bounds with `ν_τ(β)` and `χ(β)`.
pub fn theorem1_bounds(p: &TheoryParams, e0: f64, r: u32) -> Result<BoundPair> {
    p.validate()?;
    Ok(bound_pair(nu_tau_beta(p), p.kappa, p.lambda_max, p.n, p.tau, chi(p), e0, r))
}

/// Inconsistent-read bounds with `ω_τ(β)` and `ψ(β)`.
pub fn theorem3_bounds(p: &TheoryParams, e0: f64, r: u32) -> Result<BoundPair> {
    p.validate()?;
    Ok(bound_pair(omega_tau(p), p.kappa, p.lambda_max, p.n, p.tau, psi(p), e0, r))
}

/// Least-squares bounds in the X-norm: `κ²` and `σ_max²` take the roles of
/// `κ` and `λ_max`, with `ρ₂` taken from `X = AᵀA`.
pub fn lsq_bounds(p: &TheoryParams, e0: f64, r: u32) -> Result<BoundPair> {
    p.validate()?;
    let s = p
        .sigma_max
        .ok_or_else(|| Error::InvalidParameter("least-squares bounds need sigma_max".into()))?;
    let s2 = s * s;
    let (w, mut app) = omega_tau(p);
    if p.beta >= 1.0 {
        app.applicable = false;
        app.condition.push_str(" and beta < 1");
    }
    Ok(bound_pair((w, app), p.kappa, s2, p.n, p.tau, psi_with(p, s2), e0, r))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub params: TheoryParams,
    pub nu_tau: f64,
    pub omega_tau: f64,
    pub beta_tilde: f64,
    #[serde(rename = "T0")]
    pub t0: u64,
    #[serde(rename = "T")]
    pub t: u64,
    pub chi: f64,
    pub psi: f64,
    pub factor_a_consistent: f64,
    pub factor_a_inconsistent: f64,
    pub factor_b_consistent: f64,
    pub factor_b_inconsistent: f64,
    pub consistent: BoundPair,
    pub inconsistent: BoundPair,
    pub rgs_bound: f64,
    pub lsq: Option<BoundPair>,
}

/// Every bound for `p`, with chain length `r` and initial error `e0`.
pub fn bound_report(p: &TheoryParams, e0: f64, r: u32) -> Result<BoundReport> {
    let c = theorem1_bounds(p, e0, r)?;
    let i = theorem3_bounds(p, e0, r)?;
    let lsq = p.sigma_max.map(|_| lsq_bounds(p, e0, r)).transpose()?;
    let t0v = t0(p.lambda_max, p.n);
    Ok(BoundReport {
        params: *p,
        nu_tau: c.rate,
        omega_tau: i.rate,
        beta_tilde: beta_tilde(p),
        t0: t0v,
        t: t0v + p.tau,
        chi: c.penalty,
        psi: i.penalty,
        factor_a_consistent: c.factor_a,
        factor_a_inconsistent: i.factor_a,
        factor_b_consistent: c.factor_b,
        factor_b_inconsistent: i.factor_b,
        rgs_bound: rgs_bound(p, t0v, e0)?,
        consistent: c,
        inconsistent: i,
        lsq,
    })
}
