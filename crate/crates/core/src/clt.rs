//! Gaussian limit of the final size.
//!
//! With `Y = (T̄ − τ) √(N π)` (componentwise, `T̄_i = T_i / (N π_i)`), a major
//! outbreak has `Y ≈ N(0, (Uᵀ)⁻¹ Ξ U⁻¹)`, plus `Υ` inside the brackets when
//! types are allocated at random.
//!
//! `U` comes from linearising `T̄ = X̄(T̄ + ζ)` at `τ`: the Jacobian of `r` is
//! `∂r_i/∂t_k = π_k μ_{k,i} σ_i`, and conjugating `I − J` by `√Π` gives
//! `Uᵀ` with `u_ij = δ_ij − √(π_i π_j) μ_ij σ_j` in the row-from/column-to
//! orientation used for `mu`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::deterministic::DeterministicSolution;
use crate::error::{Error, Result};
use crate::kernel::Allocation;
use crate::linalg;
use crate::simulator::{FinalSizeRecord, OutbreakClass};
use crate::stats::{self, MardiaResult};

/// Smallest `|det U|` accepted as invertible.
pub const SINGULAR_DET: f64 = 1e-12;

/// Fewest major outbreaks accepted by [`gaussian_check`].
pub const MIN_MAJOR_RECORDS: usize = 500;

fn check_len(v: &[f64], m: usize, what: &str) -> Result<()> {
    if v.len() != m {
        return Err(Error::Dimension(format!("{what} has length {}, expected {m}", v.len())));
    }
    Ok(())
}

/// `Ξ = (I − Σ)Σ + Σ √Π {Σ_k (τ_k + ζ_k) π_k Λ_k} √Π Σ`.
pub fn compute_xi(
    sigma: &[f64],
    tau: &[f64],
    zeta: &[f64],
    pi: &[f64],
    lambda: &[DMatrix<f64>],
) -> Result<DMatrix<f64>> {
    let m = pi.len();
    check_len(sigma, m, "sigma")?;
    check_len(tau, m, "tau")?;
    check_len(zeta, m, "zeta")?;
    if lambda.len() != m {
        return Err(Error::Dimension(format!("expected {m} lambda matrices")));
    }
    let mut pooled = DMatrix::zeros(m, m);
    for (k, l) in lambda.iter().enumerate() {
        linalg::require_square(l, m, "lambda")?;
        pooled += l * ((tau[k] + zeta[k]) * pi[k]);
    }
    Ok(DMatrix::from_fn(m, m, |j, l| {
        let binomial = if j == l { sigma[j] * (1.0 - sigma[j]) } else { 0.0 };
        binomial + sigma[j] * pi[j].sqrt() * pooled[(j, l)] * pi[l].sqrt() * sigma[l]
    }))
}

/// `u_ij = δ_ij − √(π_i π_j) μ_ij σ_j`; fails when `|det U| ≤ 1e−12`.
pub fn compute_u(sigma: &[f64], mu: &DMatrix<f64>, pi: &[f64]) -> Result<DMatrix<f64>> {
    let m = pi.len();
    check_len(sigma, m, "sigma")?;
    linalg::require_square(mu, m, "mu")?;
    let u = DMatrix::from_fn(m, m, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - (pi[i] * pi[j]).sqrt() * mu[(i, j)] * sigma[j]
    });
    let det = u.determinant();
    if det.is_nan() || det.abs() <= SINGULAR_DET {
        return Err(Error::SingularU { det });
    }
    Ok(u)
}

/// `Ỹ = Π − π πᵀ`, the scaled covariance of multinomial type counts.
pub fn allocation_covariance(pi: &[f64]) -> DMatrix<f64> {
    let m = pi.len();
    DMatrix::from_fn(m, m, |i, j| if i == j { pi[i] } else { 0.0 } - pi[i] * pi[j])
}

/// `Υ = √Π⁻¹ (I − Σ) Ỹ (I − Σ) √Π⁻¹`.
pub fn compute_upsilon(sigma: &[f64], pi: &[f64]) -> Result<DMatrix<f64>> {
    let m = pi.len();
    check_len(sigma, m, "sigma")?;
    let y = allocation_covariance(pi);
    Ok(DMatrix::from_fn(m, m, |i, j| {
        (1.0 - sigma[i]) * (1.0 - sigma[j]) * y[(i, j)] / (pi[i] * pi[j]).sqrt()
    }))
}

#[derive(Clone, Debug)]
pub struct AsymptoticSummary {
    pub sigma_diag: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    pub u_matrix: DMatrix<f64>,
    /// Zero under deterministic allocation.
    pub upsilon: DMatrix<f64>,
    pub asym_cov: DMatrix<f64>,
    pub allocation: Allocation,
    pub cond_u: f64,
}

impl AsymptoticSummary {
    pub fn to_json(&self) -> serde_json::Value {
        let rows = linalg::to_rows;
        serde_json::json!({
            "sigma": rows(&self.sigma_diag),
            "xi": rows(&self.xi),
            "u": rows(&self.u_matrix),
            "upsilon": rows(&self.upsilon),
            "asym_cov": rows(&self.asym_cov),
            "allocation": self.allocation,
            "cond_u": self.cond_u,
        })
    }
}

/// `(Uᵀ)⁻¹ (Ξ + Υ) U⁻¹`, with `Υ = 0` for deterministic allocation.
pub fn asymptotic_covariance(
    solution: &DeterministicSolution,
    zeta: &[f64],
    pi: &[f64],
    mu: &DMatrix<f64>,
    lambda: &[DMatrix<f64>],
    allocation: Allocation,
) -> Result<AsymptoticSummary> {
    let m = pi.len();
    let xi = compute_xi(&solution.sigma, &solution.tau, zeta, pi, lambda)?;
    let u = compute_u(&solution.sigma, mu, pi)?;
    let upsilon = match allocation {
        Allocation::Deterministic => DMatrix::zeros(m, m),
        Allocation::RandomMultinomial => compute_upsilon(&solution.sigma, pi)?,
    };
    let u_inv = u
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularU { det: u.determinant() })?;
    let raw = u_inv.transpose() * (&xi + &upsilon) * &u_inv;
    let asym_cov = (&raw + raw.transpose()) * 0.5;
    Ok(AsymptoticSummary {
        sigma_diag: linalg::diag(&solution.sigma),
        cond_u: linalg::condition_number(&u),
        xi,
        u_matrix: u,
        upsilon,
        asym_cov,
        allocation,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GaussianReport {
    pub count: usize,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub sample_cov: Vec<Vec<f64>>,
    /// `√((C_ii C_jj + C_ij²) / n)` with `C` the theoretical covariance.
    pub cov_se: Vec<Vec<f64>>,
    /// `|sample − theory| / |theory|` entrywise.
    pub relative_error: Vec<Vec<f64>>,
    pub mardia: MardiaResult,
}

/// Standardised major-outbreak final sizes `(T̄ − τ) √(N π)`.
pub fn standardized_major_sizes(records: &[FinalSizeRecord], tau: &[f64], n: u64, pi: &[f64]) -> Vec<Vec<f64>> {
    let nf = n as f64;
    records
        .iter()
        .filter(|r| r.outbreak_class == OutbreakClass::Major)
        .map(|r| {
            r.t_inf
                .iter()
                .enumerate()
                .map(|(i, t)| (*t as f64 / (nf * pi[i]) - tau[i]) * (nf * pi[i]).sqrt())
                .collect()
        })
        .collect()
}

/// Compares major-outbreak fluctuations with the predicted covariance.
pub fn gaussian_check(
    records: &[FinalSizeRecord],
    tau: &[f64],
    asym_cov: &DMatrix<f64>,
    n: u64,
    pi: &[f64],
) -> Result<GaussianReport> {
    let m = pi.len();
    check_len(tau, m, "tau")?;
    linalg::require_square(asym_cov, m, "asym_cov")?;
    let ys = standardized_major_sizes(records, tau, n, pi);
    if ys.len() < MIN_MAJOR_RECORDS {
        return Err(Error::InsufficientData(format!(
            "{} major outbreaks, need at least {MIN_MAJOR_RECORDS}",
            ys.len()
        )));
    }
    let count = ys.len();
    let nf = count as f64;
    let mean = stats::mean_vector(&ys);
    let cov = stats::covariance(&ys);
    let mean_se = (0..m).map(|i| (cov[(i, i)] / nf).sqrt()).collect();
    let c = asym_cov;
    let cov_se = DMatrix::from_fn(m, m, |i, j| ((c[(i, i)] * c[(j, j)] + c[(i, j)].powi(2)) / nf).sqrt());
    let relative_error = DMatrix::from_fn(m, m, |i, j| (cov[(i, j)] - c[(i, j)]).abs() / c[(i, j)].abs());
    Ok(GaussianReport {
        count,
        mean,
        mean_se,
        sample_cov: linalg::to_rows(&cov),
        cov_se: linalg::to_rows(&cov_se),
        relative_error: linalg::to_rows(&relative_error),
        mardia: stats::mardia(&ys)?,
    })
}
