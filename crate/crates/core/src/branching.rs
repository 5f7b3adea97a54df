//! Mixed-Poisson branching approximation of the early epidemic.
//!
//! A type-`k` individual draws its limit row `Ũ_k` and then has
//! `Poisson(π_j Ũ_{k,j})` type-`j` offspring, independently over `j` given
//! `Ũ_k`. The offspring pgf is
//! `h_k(s) = E[exp(Σ_j (s_j − 1) π_j Ũ_{k,j})]`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::deterministic::{compute_r, next_generation_matrix, Regime, SpectralOptions};
use crate::error::{Error, Result};
use crate::kernel::InfectivityKernel;
use crate::SimRng;

#[derive(Clone, Debug)]
pub struct OffspringLaw {
    kernel: InfectivityKernel,
    pi: Vec<f64>,
}

impl OffspringLaw {
    pub fn new(kernel: InfectivityKernel, pi: Vec<f64>) -> Result<Self> {
        if pi.len() != kernel.types() {
            return Err(Error::Dimension(format!(
                "{} proportions for a {}-type kernel",
                pi.len(),
                kernel.types()
            )));
        }
        if pi.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::invalid("type proportions must be strictly positive"));
        }
        Ok(OffspringLaw { kernel, pi })
    }

    pub fn types(&self) -> usize {
        self.pi.len()
    }

    pub fn kernel(&self) -> &InfectivityKernel {
        &self.kernel
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Mean offspring matrix `μΠ` (row = parent type).
    pub fn offspring_mean(&self) -> DMatrix<f64> {
        next_generation_matrix(self.kernel.mu(), &self.pi)
    }

    pub fn threshold(&self) -> Result<f64> {
        Ok(compute_r(self.kernel.mu(), &self.pi, SpectralOptions::default())?.value)
    }

    /// Closed-form `h_k(s)`, when the kernel has a closed-form Laplace transform.
    pub fn closed_form_pgf(&self, parent: usize, s: &[f64]) -> Option<f64> {
        let t: Vec<f64> = s.iter().zip(&self.pi).map(|(sj, pj)| (1.0 - sj) * pj).collect();
        self.kernel.model().limit_laplace(parent, &t)
    }

    pub fn sample_offspring(&self, parent: usize, rng: &mut SimRng) -> Result<Vec<u64>> {
        let u = self.kernel.sample_limit(parent, rng)?;
        Ok(u.iter().zip(&self.pi).map(|(uj, pj)| poisson(uj * pj, rng)).collect())
    }

    /// Total progeny by type, excluding the ancestors `a`. Returns
    /// [`Progeny::Exceeded`] once more than `cap` births have occurred.
    pub fn simulate_total_progeny(&self, a: &[u64], cap: u64, rng: &mut SimRng) -> Result<Progeny> {
        if a.len() != self.types() {
            return Err(Error::Dimension("ancestor counts have the wrong length".into()));
        }
        if cap == 0 {
            return Err(Error::invalid("progeny cap must be at least 1"));
        }
        let m = self.types();
        let mut pending = a.to_vec();
        let mut births = vec![0u64; m];
        let mut total = 0u64;
        let mut u = vec![0.0; m];
        while let Some(parent) = pending.iter().position(|c| *c > 0) {
            pending[parent] -= 1;
            self.kernel.model().sample_limit_row(parent, rng, &mut u);
            for j in 0..m {
                let kids = poisson(u[j] * self.pi[j], rng);
                births[j] += kids;
                pending[j] += kids;
                total += kids;
            }
            if total > cap {
                return Ok(Progeny::Exceeded);
            }
        }
        Ok(Progeny::Finite(births))
    }
}

fn poisson(rate: f64, rng: &mut SimRng) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive finite rate").sample(rng) as u64
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Progeny {
    Finite(Vec<u64>),
    Exceeded,
}

/// `max(10 √N, 10⁴)`.
pub fn default_progeny_cap(n: u64) -> u64 {
    ((10.0 * (n as f64).sqrt()).ceil() as u64).max(10_000)
}

#[derive(Clone, Copy, Debug)]
pub struct ExtinctionOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Frozen limit-row draws per type when `h` has no closed form.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for ExtinctionOptions {
    fn default() -> Self {
        ExtinctionOptions { tol: 1e-12, max_iter: 100_000, mc_samples: 100_000, seed: 0x70_6766 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtinctionSolution {
    pub q: Vec<f64>,
    pub major_outbreak_prob: f64,
    pub iterations: usize,
    /// `‖q − h(q)‖_∞`.
    pub residual: f64,
    /// Draws per type behind a Monte Carlo `h`, zero when closed form.
    pub mc_samples: usize,
}

/// The pgf vector `h`, closed form per type where available, otherwise an
/// average over a frozen sample of limit rows.
struct Pgf<'a> {
    law: &'a OffspringLaw,
    samples: Vec<Option<Vec<Vec<f64>>>>,
}

impl<'a> Pgf<'a> {
    fn new(law: &'a OffspringLaw, opts: &ExtinctionOptions) -> Self {
        let m = law.types();
        let ones = vec![1.0; m];
        let mut rng = SimRng::seed_from_u64(opts.seed);
        let samples = (0..m)
            .map(|k| {
                if law.closed_form_pgf(k, &ones).is_some() {
                    return None;
                }
                let mut u = vec![0.0; m];
                Some(
                    (0..opts.mc_samples.max(1))
                        .map(|_| {
                            law.kernel.model().sample_limit_row(k, &mut rng, &mut u);
                            // stored already weighted by π
                            u.iter().zip(&law.pi).map(|(x, p)| x * p).collect()
                        })
                        .collect(),
                )
            })
            .collect();
        Pgf { law, samples }
    }

    fn uses_mc(&self) -> bool {
        self.samples.iter().any(Option::is_some)
    }

    fn eval(&self, s: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = match &self.samples[k] {
                None => self.law.closed_form_pgf(k, s).expect("closed form checked"),
                Some(rows) => {
                    rows.iter()
                        .map(|w| {
                            let e: f64 = w.iter().zip(s).map(|(wj, sj)| (sj - 1.0) * wj).sum();
                            e.exp()
                        })
                        .sum::<f64>()
                        / rows.len() as f64
                }
            };
        }
    }
}

/// Minimal root of `q = h(q)`, by iteration from `q = 0`.
pub fn extinction_probability(
    law: &OffspringLaw,
    a: &[u64],
    opts: ExtinctionOptions,
) -> Result<ExtinctionSolution> {
    let m = law.types();
    if a.len() != m {
        return Err(Error::Dimension("ancestor counts have the wrong length".into()));
    }
    if Regime::of(law.threshold()?) != Regime::Supercritical {
        let q = vec![1.0; m];
        return Ok(ExtinctionSolution {
            major_outbreak_prob: major_outbreak_probability(&q, a),
            q,
            iterations: 0,
            residual: 0.0,
            mc_samples: 0,
        });
    }
    let pgf = Pgf::new(law, &opts);
    let mc_samples = if pgf.uses_mc() { opts.mc_samples.max(1) } else { 0 };
    let mut q = vec![0.0; m];
    let mut next = vec![0.0; m];
    let mut step = f64::INFINITY;
    for iteration in 1..=opts.max_iter {
        pgf.eval(&q, &mut next);
        step = 0.0;
        for k in 0..m {
            let d = next[k] - q[k];
            if d < -1e-13 {
                return Err(Error::NonMonotone { iteration, component: k });
            }
            step = step.max(d.abs());
        }
        std::mem::swap(&mut q, &mut next);
        if step <= opts.tol {
            pgf.eval(&q, &mut next);
            let residual = q.iter().zip(&next).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            return Ok(ExtinctionSolution {
                major_outbreak_prob: major_outbreak_probability(&q, a),
                q,
                iterations: iteration,
                residual,
                mc_samples,
            });
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: step, last: q })
}

/// `1 − Π q_i^{a_i}`.
pub fn major_outbreak_probability(q: &[f64], a: &[u64]) -> f64 {
    1.0 - q.iter().zip(a).map(|(qi, ai)| qi.powf(*ai as f64)).product::<f64>()
}

/// `h(s)` for the law, using the same evaluation rule as the solver.
pub fn offspring_pgf(law: &OffspringLaw, s: &[f64], opts: ExtinctionOptions) -> Vec<f64> {
    let pgf = Pgf::new(law, &opts);
    let mut out = vec![0.0; law.types()];
    pgf.eval(s, &mut out);
    out
}
