//! The deterministic limit: attack rate `τ`, survivor fraction `σ = 1 − τ`
//! and the threshold parameter `R`.
//!
//! With `mu[(k, i)]` the scaled infectivity from type `k` to type `i`,
//! `r_i(t) = 1 − exp(−Σ_k t_k π_k μ_{k,i})` is the limiting probability that a
//! type-`i` susceptible escapes none of the `t_k N π_k` type-`k` infectives,
//! and the attack rate is the largest solution of `τ = r(τ + ζ)`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

/// Width of the band around `R = 1` labelled critical.
pub const CRITICAL_BAND: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

impl Regime {
    pub fn of(r: f64) -> Self {
        if (r - 1.0).abs() <= CRITICAL_BAND {
            Regime::Critical
        } else if r < 1.0 {
            Regime::Subcritical
        } else {
            Regime::Supercritical
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-12, max_iter: 1_000_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMethod {
    PowerIteration,
    /// Dense eigenvalues of `A + εI`, used when power iteration stalls
    /// (periodic patterns).
    ShiftedEigen,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralRadius {
    pub value: f64,
    pub iterations: usize,
    /// The diagonal shift applied before the dense fallback, zero otherwise.
    pub shift: f64,
    pub method: SpectralMethod,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeterministicSolution {
    pub tau: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(rename = "R")]
    pub r: f64,
    pub iterations: usize,
    /// `‖τ − r(τ + ζ)‖_∞` at the returned `τ`.
    pub residual: f64,
    pub regime: Regime,
    pub irreducible: bool,
    /// Set when the infectivity pattern is reducible and some type has no
    /// initial infectives, so the limit need not be the largest fixed point.
    pub non_unique_risk: bool,
}

fn check_inputs(mu: &DMatrix<f64>, pi: &[f64]) -> Result<()> {
    let m = pi.len();
    linalg::require_square(mu, m, "mu")?;
    if mu.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::invalid("mu must be finite and nonnegative"));
    }
    if pi.iter().any(|p| !p.is_finite() || *p <= 0.0) {
        return Err(Error::invalid("type proportions must be strictly positive"));
    }
    Ok(())
}

fn check_vector(v: &[f64], m: usize, what: &str) -> Result<()> {
    if v.len() != m {
        return Err(Error::Dimension(format!("{what} has length {}, expected {m}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::invalid(format!("{what} must be finite and nonnegative")));
    }
    Ok(())
}

fn escape_map(t: &[f64], mu: &DMatrix<f64>, pi: &[f64], out: &mut [f64]) {
    let m = pi.len();
    for (i, o) in out.iter_mut().enumerate() {
        let s: f64 = (0..m).map(|k| t[k] * pi[k] * mu[(k, i)]).sum();
        *o = -(-s).exp_m1();
    }
}

/// `r(t)`, componentwise in `[0, 1)`.
pub fn limit_infection_probability(t: &[f64], mu: &DMatrix<f64>, pi: &[f64]) -> Result<Vec<f64>> {
    check_inputs(mu, pi)?;
    check_vector(t, pi.len(), "exposure")?;
    let mut out = vec![0.0; pi.len()];
    escape_map(t, mu, pi, &mut out);
    Ok(out)
}

/// Fixed-point iteration for the attack rate, started from `τ = 1`.
pub fn solve_tau(
    mu: &DMatrix<f64>,
    pi: &[f64],
    zeta: &[f64],
    opts: SolverOptions,
) -> Result<DeterministicSolution> {
    check_inputs(mu, pi)?;
    let m = pi.len();
    check_vector(zeta, m, "zeta")?;
    let radius = compute_r(mu, pi, SpectralOptions::default())?;
    let irreducible = check_irreducibility(mu, pi);
    let regime = Regime::of(radius.value);
    let no_seed = zeta.iter().all(|z| *z == 0.0);
    let non_unique_risk = !irreducible && zeta.contains(&0.0);

    if no_seed && regime != Regime::Supercritical {
        return Ok(DeterministicSolution {
            tau: vec![0.0; m],
            sigma: vec![1.0; m],
            r: radius.value,
            iterations: 0,
            residual: 0.0,
            regime,
            irreducible,
            non_unique_risk,
        });
    }

    let mut tau = vec![1.0; m];
    let mut next = vec![0.0; m];
    let mut arg = vec![0.0; m];
    let mut step = f64::INFINITY;
    for iteration in 1..=opts.max_iter {
        for k in 0..m {
            arg[k] = tau[k] + zeta[k];
        }
        escape_map(&arg, mu, pi, &mut next);
        step = 0.0;
        for i in 0..m {
            let d = next[i] - tau[i];
            if d > 1e-13 {
                return Err(Error::NonMonotone { iteration, component: i });
            }
            step = step.max(d.abs());
        }
        std::mem::swap(&mut tau, &mut next);
        if step <= opts.tol {
            let residual = fixed_point_residual(&tau, mu, pi, zeta);
            return Ok(DeterministicSolution {
                sigma: tau.iter().map(|t| 1.0 - t).collect(),
                tau,
                r: radius.value,
                iterations: iteration,
                residual,
                regime,
                irreducible,
                non_unique_risk,
            });
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: step, last: tau })
}

/// `‖τ − r(τ + ζ)‖_∞`.
pub fn fixed_point_residual(tau: &[f64], mu: &DMatrix<f64>, pi: &[f64], zeta: &[f64]) -> f64 {
    let arg: Vec<f64> = tau.iter().zip(zeta).map(|(t, z)| t + z).collect();
    let mut image = vec![0.0; pi.len()];
    escape_map(&arg, mu, pi, &mut image);
    tau.iter().zip(&image).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// The first `steps` iterates of `τ ← r(τ + ζ)` from `τ = 1`, including the start.
pub fn fixed_point_iterates(
    mu: &DMatrix<f64>,
    pi: &[f64],
    zeta: &[f64],
    steps: usize,
) -> Result<Vec<Vec<f64>>> {
    check_inputs(mu, pi)?;
    check_vector(zeta, pi.len(), "zeta")?;
    let m = pi.len();
    let mut out = vec![vec![1.0; m]];
    for _ in 0..steps {
        let last = out.last().expect("nonempty");
        let arg: Vec<f64> = last.iter().zip(zeta).map(|(t, z)| t + z).collect();
        let mut next = vec![0.0; m];
        escape_map(&arg, mu, pi, &mut next);
        out.push(next);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct SpectralOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions { tol: 1e-13, max_iter: 100_000 }
    }
}

/// Offspring-mean matrix `A = μΠ`, `A_ij = μ_ij π_j`.
pub fn next_generation_matrix(mu: &DMatrix<f64>, pi: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(mu.nrows(), mu.ncols(), |i, j| mu[(i, j)] * pi[j])
}

/// Spectral radius of `μΠ`.
pub fn compute_r(mu: &DMatrix<f64>, pi: &[f64], opts: SpectralOptions) -> Result<SpectralRadius> {
    check_inputs(mu, pi)?;
    let a = next_generation_matrix(mu, pi);
    let m = pi.len();
    let mut x = nalgebra::DVector::from_element(m, 1.0 / m as f64);
    let mut estimate = f64::NAN;
    for iteration in 1..=opts.max_iter {
        let y = &a * &x;
        let norm: f64 = y.iter().sum();
        if norm == 0.0 {
            // a zero image of a nonnegative iterate means A is nilpotent
            return Ok(SpectralRadius {
                value: 0.0,
                iterations: iteration,
                shift: 0.0,
                method: SpectralMethod::PowerIteration,
            });
        }
        if (norm - estimate).abs() <= opts.tol * norm.max(1.0) {
            return Ok(SpectralRadius {
                value: norm,
                iterations: iteration,
                shift: 0.0,
                method: SpectralMethod::PowerIteration,
            });
        }
        estimate = norm;
        x = y / norm;
    }
    let shift = 1e-12;
    let shifted = a + DMatrix::identity(m, m) * shift;
    let value = shifted
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        - shift;
    Ok(SpectralRadius {
        value: value.max(0.0),
        iterations: opts.max_iter,
        shift,
        method: SpectralMethod::ShiftedEigen,
    })
}

/// Strong connectivity of the infection graph (`k → i` when `μ_{k,i} > 0`).
pub fn check_irreducibility(mu: &DMatrix<f64>, _pi: &[f64]) -> bool {
    // π > 0, so the pattern of MᵀΠ is that of μ transposed, and transposition
    // preserves strong connectivity
    linalg::is_irreducible(mu)
}
