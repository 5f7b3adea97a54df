//! Populations, infectivity kernels and their scaled moment structure.
//!
//! A kernel describes, for each infector type `i`, the law of the contact
//! probability vector `V_i` at population scale `N`, together with its
//! scaled limits
//!
//! * `mu[(i, k)] = lim N E[V_{i,k}]`,
//! * `lambda[i][(j, k)] = lim N^2 cov(V_{i,j}, V_{i,k})`,
//! * the limit row `Ũ_i = lim N V_i` consumed by the branching approximation.
//!
//! Note that `Ũ` carries no `π` factor: a type-`k` parent has
//! `Poisson(π_j Ũ_{k,j})` type-`j` offspring.

mod law;
mod population;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::SimRng;

pub use law::ScalarLaw;
pub use population::{Allocation, InitialInfectives, PopulationSpec, ResolvedPopulation};

/// Sample count used when a kernel has no closed-form moments.
pub const DEFAULT_MOMENT_SAMPLES: usize = 100_000;

/// Seed for the limit-moment estimates made at kernel construction, so that a
/// kernel's declared moments are a pure function of its parameters.
const LIMIT_MOMENT_SEED: u64 = 0x6d_6f6d_656e_7473;

/// The sampling side of an infectivity kernel.
///
/// Implementations must keep every sampled `V` inside `[0,1]^m` and every
/// limit row nonnegative. Components of one row may be dependent.
pub trait InfectivityModel: fmt::Debug + Send + Sync {
    fn types(&self) -> usize;

    /// Draws `V` for one infective of type `infector` at scale `n`.
    fn sample_row(&self, infector: usize, n: f64, rng: &mut SimRng, out: &mut [f64]);

    /// Draws the scaled limit row `Ũ = lim n V`.
    fn sample_limit_row(&self, infector: usize, rng: &mut SimRng, out: &mut [f64]);

    /// Draws `ln(1 - V)` componentwise.
    fn sample_log_escape(&self, infector: usize, n: f64, rng: &mut SimRng, out: &mut [f64]) {
        self.sample_row(infector, n, rng, out);
        for x in out.iter_mut() {
            *x = (-*x).ln_1p();
        }
    }

    /// Closed-form `mu`, when known.
    fn limit_mean(&self) -> Option<DMatrix<f64>> {
        None
    }

    /// Closed-form `lambda`, when known.
    fn limit_covariances(&self) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    /// `E[exp(-Σ_j t_j Ũ_{infector,j})]` for `t >= 0`, when known in closed form.
    fn limit_laplace(&self, _infector: usize, _t: &[f64]) -> Option<f64> {
        None
    }

    /// True when `V` carries no per-infective randomness.
    fn is_degenerate(&self) -> bool {
        false
    }
}

/// Scaled first and second moments of a kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSummary {
    pub mu: DMatrix<f64>,
    pub lambda: Vec<DMatrix<f64>>,
    pub estimated_from_samples: bool,
    pub sample_count: usize,
    /// Standard errors of `mu`, present for sample-based estimates.
    pub mu_se: Option<DMatrix<f64>>,
    /// Standard errors of each `lambda` entry, present for sample-based estimates.
    pub lambda_se: Option<Vec<DMatrix<f64>>>,
}

impl MomentSummary {
    pub fn to_json(&self) -> serde_json::Value {
        let rows = |m: &DMatrix<f64>| linalg::to_rows(m);
        serde_json::json!({
            "mu": rows(&self.mu),
            "lambda": self.lambda.iter().map(rows).collect::<Vec<_>>(),
            "estimated_from_samples": self.estimated_from_samples,
            "sample_count": self.sample_count,
            "mu_se": self.mu_se.as_ref().map(rows),
            "lambda_se": self.lambda_se.as_ref().map(|l| l.iter().map(rows).collect::<Vec<_>>()),
        })
    }

    /// Sample means, covariances and their standard errors, computed per
    /// infector type from `samples[i]` (a list of rows).
    fn from_samples(samples: &[Vec<Vec<f64>>]) -> Self {
        let m = samples.len();
        let count = samples.first().map_or(0, Vec::len);
        let mut mu = DMatrix::zeros(m, m);
        let mut mu_se = DMatrix::zeros(m, m);
        let mut lambda = Vec::with_capacity(m);
        let mut lambda_se = Vec::with_capacity(m);
        let nf = count as f64;
        for (i, rows) in samples.iter().enumerate() {
            let means: Vec<f64> = (0..m)
                .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / nf)
                .collect();
            let mut cov = DMatrix::zeros(m, m);
            let mut cov_se = DMatrix::zeros(m, m);
            for j in 0..m {
                for k in j..m {
                    let prods: Vec<f64> = rows
                        .iter()
                        .map(|r| (r[j] - means[j]) * (r[k] - means[k]))
                        .collect();
                    let c = prods.iter().sum::<f64>() / (nf - 1.0);
                    let spread = prods.iter().map(|p| (p - c).powi(2)).sum::<f64>() / (nf - 1.0);
                    cov[(j, k)] = c;
                    cov[(k, j)] = c;
                    cov_se[(j, k)] = (spread / nf).sqrt();
                    cov_se[(k, j)] = cov_se[(j, k)];
                }
            }
            for j in 0..m {
                mu[(i, j)] = means[j];
                mu_se[(i, j)] = (cov[(j, j)] / nf).sqrt();
            }
            lambda.push(cov);
            lambda_se.push(cov_se);
        }
        MomentSummary {
            mu,
            lambda,
            estimated_from_samples: true,
            sample_count: count,
            mu_se: Some(mu_se),
            lambda_se: Some(lambda_se),
        }
    }
}

/// An infectivity model together with its (cached) moment summary.
#[derive(Clone)]
pub struct InfectivityKernel {
    model: Arc<dyn InfectivityModel>,
    moments: MomentSummary,
}

impl fmt::Debug for InfectivityKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InfectivityKernel")
            .field("model", &self.model)
            .field("mu", &self.moments.mu)
            .finish()
    }
}

impl InfectivityKernel {
    /// Wraps a model, taking closed-form moments where the model provides
    /// them and estimating the rest from limit-row samples.
    pub fn new(model: impl InfectivityModel + 'static) -> Result<Self> {
        Self::from_arc(Arc::new(model))
    }

    pub fn from_arc(model: Arc<dyn InfectivityModel>) -> Result<Self> {
        let m = model.types();
        if m == 0 {
            return Err(Error::invalid("kernel needs at least one type"));
        }
        let closed_mean = model.limit_mean();
        let closed_cov = model.limit_covariances();
        let moments = match (closed_mean, closed_cov) {
            (Some(mu), Some(lambda)) => MomentSummary {
                mu,
                lambda,
                estimated_from_samples: false,
                sample_count: 0,
                mu_se: None,
                lambda_se: None,
            },
            (mean, cov) => {
                let mut rng = SimRng::seed_from_u64(LIMIT_MOMENT_SEED);
                let mut est = estimate_limit_moments(model.as_ref(), DEFAULT_MOMENT_SAMPLES, &mut rng);
                if let Some(mu) = mean {
                    est.mu = mu;
                    est.mu_se = None;
                }
                if let Some(lambda) = cov {
                    est.lambda = lambda;
                    est.lambda_se = None;
                }
                est
            }
        };
        check_moments(&moments, m)?;
        Ok(InfectivityKernel { model, moments })
    }

    pub fn types(&self) -> usize {
        self.model.types()
    }

    pub fn model(&self) -> &dyn InfectivityModel {
        self.model.as_ref()
    }

    pub fn moments(&self) -> &MomentSummary {
        &self.moments
    }

    pub fn mu(&self) -> &DMatrix<f64> {
        &self.moments.mu
    }

    pub fn lambda(&self) -> &[DMatrix<f64>] {
        &self.moments.lambda
    }

    pub fn is_degenerate(&self) -> bool {
        self.model.is_degenerate()
    }

    pub(crate) fn check_type(&self, infector: usize) -> Result<()> {
        if infector >= self.types() {
            return Err(Error::TypeIndex { index: infector, types: self.types() });
        }
        Ok(())
    }

    /// One draw of `V_infector` at population scale `n` (types are 0-based).
    pub fn sample_infectivity(&self, infector: usize, n: u64, rng: &mut SimRng) -> Result<Vec<f64>> {
        self.check_type(infector)?;
        if n == 0 {
            return Err(Error::invalid("population scale must be at least 1"));
        }
        let mut out = vec![0.0; self.types()];
        self.model.sample_row(infector, n as f64, rng, &mut out);
        Ok(out)
    }

    /// One draw of the limit row `Ũ_infector`.
    pub fn sample_limit(&self, infector: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
        self.check_type(infector)?;
        let mut out = vec![0.0; self.types()];
        self.model.sample_limit_row(infector, rng, &mut out);
        Ok(out)
    }
}

fn check_moments(moments: &MomentSummary, m: usize) -> Result<()> {
    linalg::require_square(&moments.mu, m, "mu")?;
    if moments.mu.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::invalid("mu must be finite and nonnegative"));
    }
    if moments.lambda.len() != m {
        return Err(Error::Dimension(format!("expected {m} lambda matrices")));
    }
    for (i, l) in moments.lambda.iter().enumerate() {
        linalg::require_square(l, m, "lambda")?;
        if !linalg::is_symmetric_psd(l, 1e-9) {
            return Err(Error::invalid(format!("lambda[{i}] is not symmetric PSD")));
        }
    }
    Ok(())
}

/// Sample estimates of `N E[V]` and `N^2 cov(V)` at population scale `n`.
pub fn estimate_moments(
    kernel: &InfectivityKernel,
    n: u64,
    samples: usize,
    rng: &mut SimRng,
) -> Result<MomentSummary> {
    if samples < 2 {
        return Err(Error::invalid("moment estimation needs at least 2 samples"));
    }
    if n == 0 {
        return Err(Error::invalid("population scale must be at least 1"));
    }
    let m = kernel.types();
    let nf = n as f64;
    let mut buf = vec![0.0; m];
    let per_type: Vec<Vec<Vec<f64>>> = (0..m)
        .map(|i| {
            (0..samples)
                .map(|_| {
                    kernel.model.sample_row(i, nf, rng, &mut buf);
                    buf.iter().map(|v| v * nf).collect()
                })
                .collect()
        })
        .collect();
    Ok(MomentSummary::from_samples(&per_type))
}

/// Sample estimates of `E[Ũ]` and `cov(Ũ)` from limit rows.
pub fn estimate_limit_moments(
    model: &dyn InfectivityModel,
    samples: usize,
    rng: &mut SimRng,
) -> MomentSummary {
    let m = model.types();
    let mut buf = vec![0.0; m];
    let per_type: Vec<Vec<Vec<f64>>> = (0..m)
        .map(|i| {
            (0..samples)
                .map(|_| {
                    model.sample_limit_row(i, rng, &mut buf);
                    buf.clone()
                })
                .collect()
        })
        .collect();
    MomentSummary::from_samples(&per_type)
}

/// `V_{i,j} = min(1, c_ij / N)` with no randomness; `c = 0` is the zero kernel.
#[derive(Clone, Debug)]
pub struct ConstantKernel {
    scaled: DMatrix<f64>,
}

impl ConstantKernel {
    pub fn new(scaled: DMatrix<f64>) -> Result<Self> {
        if scaled.nrows() != scaled.ncols() || scaled.nrows() == 0 {
            return Err(Error::Dimension("constant kernel matrix must be square".into()));
        }
        if scaled.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("constant kernel entries must be finite and nonnegative"));
        }
        Ok(ConstantKernel { scaled })
    }

    pub fn scalar(c: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, c))
    }

    pub fn zero(types: usize) -> Self {
        ConstantKernel { scaled: DMatrix::zeros(types, types) }
    }
}

impl InfectivityModel for ConstantKernel {
    fn types(&self) -> usize {
        self.scaled.nrows()
    }

    fn sample_row(&self, infector: usize, n: f64, _rng: &mut SimRng, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (self.scaled[(infector, j)] / n).min(1.0);
        }
    }

    fn sample_limit_row(&self, infector: usize, _rng: &mut SimRng, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.scaled[(infector, j)];
        }
    }

    fn limit_mean(&self) -> Option<DMatrix<f64>> {
        Some(self.scaled.clone())
    }

    fn limit_covariances(&self) -> Option<Vec<DMatrix<f64>>> {
        let m = self.types();
        Some(vec![DMatrix::zeros(m, m); m])
    }

    fn limit_laplace(&self, infector: usize, t: &[f64]) -> Option<f64> {
        let s: f64 = t.iter().enumerate().map(|(j, tj)| tj * self.scaled[(infector, j)]).sum();
        Some((-s).exp())
    }

    fn is_degenerate(&self) -> bool {
        true
    }
}

/// One atom of a tabulated infectivity law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub weight: f64,
    /// Scaled infectivity row `u`; the kernel sets `V = min(1, u / N)`.
    pub values: Vec<f64>,
}

/// Finite-support kernel: each infector type draws its scaled row from a table.
#[derive(Clone, Debug)]
pub struct TableKernel {
    rows: Vec<Vec<TableEntry>>,
}

impl TableKernel {
    /// Weights are normalised per infector type.
    pub fn new(rows: Vec<Vec<TableEntry>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::invalid("table kernel needs at least one type"));
        }
        let mut normalised = Vec::with_capacity(m);
        for (i, entries) in rows.into_iter().enumerate() {
            let total: f64 = entries.iter().map(|e| e.weight).sum();
            if entries.is_empty() || !total.is_finite() || total <= 0.0 {
                return Err(Error::invalid(format!("table row {i} has no positive weight")));
            }
            for e in &entries {
                if e.values.len() != m {
                    return Err(Error::Dimension(format!("table row {i} entries must have length {m}")));
                }
                if e.weight < 0.0 || e.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::invalid(format!("table row {i} has negative entries")));
                }
            }
            normalised.push(
                entries
                    .into_iter()
                    .map(|e| TableEntry { weight: e.weight / total, values: e.values })
                    .collect(),
            );
        }
        Ok(TableKernel { rows: normalised })
    }

    fn draw(&self, infector: usize, rng: &mut SimRng) -> &TableEntry {
        let entries = &self.rows[infector];
        let u: f64 = rand::Rng::random(rng);
        let mut acc = 0.0;
        for e in entries {
            acc += e.weight;
            if u < acc {
                return e;
            }
        }
        entries.last().expect("nonempty table row")
    }
}

impl InfectivityModel for TableKernel {
    fn types(&self) -> usize {
        self.rows.len()
    }

    fn sample_row(&self, infector: usize, n: f64, rng: &mut SimRng, out: &mut [f64]) {
        let e = self.draw(infector, rng);
        for (o, v) in out.iter_mut().zip(&e.values) {
            *o = (v / n).min(1.0);
        }
    }

    fn sample_limit_row(&self, infector: usize, rng: &mut SimRng, out: &mut [f64]) {
        let e = self.draw(infector, rng);
        out.copy_from_slice(&e.values);
    }

    fn limit_mean(&self) -> Option<DMatrix<f64>> {
        let m = self.types();
        Some(DMatrix::from_fn(m, m, |i, j| {
            self.rows[i].iter().map(|e| e.weight * e.values[j]).sum()
        }))
    }

    fn limit_covariances(&self) -> Option<Vec<DMatrix<f64>>> {
        let m = self.types();
        let mean = self.limit_mean()?;
        Some(
            (0..m)
                .map(|i| {
                    DMatrix::from_fn(m, m, |j, k| {
                        self.rows[i]
                            .iter()
                            .map(|e| e.weight * (e.values[j] - mean[(i, j)]) * (e.values[k] - mean[(i, k)]))
                            .sum()
                    })
                })
                .collect(),
        )
    }

    fn limit_laplace(&self, infector: usize, t: &[f64]) -> Option<f64> {
        Some(
            self.rows[infector]
                .iter()
                .map(|e| {
                    let s: f64 = e.values.iter().zip(t).map(|(v, tj)| v * tj).sum();
                    e.weight * (-s).exp()
                })
                .sum(),
        )
    }

    fn is_degenerate(&self) -> bool {
        self.rows.iter().all(|r| r.iter().filter(|e| e.weight > 0.0).count() <= 1)
    }
}
