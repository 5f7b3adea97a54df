use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SimRng;

/// How initial susceptibles are split between types.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// `N_i` is `N π_i` rounded by largest remainder.
    #[default]
    Deterministic,
    /// `(N_1, ..., N_m) ~ Multinomial(N, π)`.
    RandomMultinomial,
}

/// Initial infectives, either as exact counts or as intensities `ζ_k = a_k / (N π_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialInfectives {
    Counts(Vec<u64>),
    Intensity(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub pi: Vec<f64>,
    /// Total number of initial susceptibles.
    pub n: u64,
    pub initial: InitialInfectives,
    pub allocation: Allocation,
}

/// Concrete per-type counts for one realisation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedPopulation {
    pub susceptible: Vec<u64>,
    pub infective: Vec<u64>,
}

impl ResolvedPopulation {
    pub fn types(&self) -> usize {
        self.susceptible.len()
    }

    pub fn total_susceptible(&self) -> u64 {
        self.susceptible.iter().sum()
    }
}

impl PopulationSpec {
    pub fn new(pi: Vec<f64>, n: u64, initial: InitialInfectives, allocation: Allocation) -> Result<Self> {
        let spec = PopulationSpec { pi, n, initial, allocation };
        spec.validate()?;
        Ok(spec)
    }

    /// Single type, `a` initial infectives, `n` susceptibles.
    pub fn single(n: u64, a: u64) -> Self {
        PopulationSpec {
            pi: vec![1.0],
            n,
            initial: InitialInfectives::Counts(vec![a]),
            allocation: Allocation::Deterministic,
        }
    }

    pub fn types(&self) -> usize {
        self.pi.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.pi.len();
        if m == 0 {
            return Err(Error::invalid("population needs at least one type"));
        }
        if self.n == 0 {
            return Err(Error::invalid("population scale N must be positive"));
        }
        if self.pi.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::invalid("type proportions must be strictly positive"));
        }
        let total: f64 = self.pi.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("type proportions sum to {total}, not 1")));
        }
        match &self.initial {
            InitialInfectives::Counts(a) if a.len() != m => {
                Err(Error::Dimension(format!("initial counts have length {}, expected {m}", a.len())))
            }
            InitialInfectives::Intensity(z) if z.len() != m => {
                Err(Error::Dimension(format!("intensities have length {}, expected {m}", z.len())))
            }
            InitialInfectives::Intensity(z) if z.iter().any(|x| !x.is_finite() || *x < 0.0) => {
                Err(Error::invalid("intensities must be finite and nonnegative"))
            }
            _ => Ok(()),
        }
    }

    /// Initial infective counts `a`.
    pub fn initial_counts(&self) -> Vec<u64> {
        match &self.initial {
            InitialInfectives::Counts(a) => a.clone(),
            InitialInfectives::Intensity(z) => z
                .iter()
                .zip(&self.pi)
                .map(|(zk, pk)| (zk * self.n as f64 * pk).round() as u64)
                .collect(),
        }
    }

    /// `ζ_k = a_k / (N π_k)`, computed from the integer counts.
    pub fn zeta(&self) -> Vec<f64> {
        self.initial_counts()
            .iter()
            .zip(&self.pi)
            .map(|(a, p)| *a as f64 / (self.n as f64 * p))
            .collect()
    }

    /// Largest-remainder split of `N` by `π`; ties go to the lower index.
    pub fn deterministic_split(&self) -> Vec<u64> {
        let n = self.n as f64;
        let mut counts: Vec<u64> = self.pi.iter().map(|p| (n * p).floor() as u64).collect();
        let assigned: u64 = counts.iter().sum();
        let mut left = self.n.saturating_sub(assigned);
        // remainders on a 1e-9 grid so that float noise cannot reorder ties
        let mut order: Vec<(i64, usize)> = self
            .pi
            .iter()
            .enumerate()
            .map(|(i, p)| ((((n * p) - (n * p).floor()) * 1e9).round() as i64, i))
            .collect();
        order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let m = order.len();
        let mut idx = 0;
        while left > 0 {
            counts[order[idx % m].1] += 1;
            left -= 1;
            idx += 1;
        }
        counts
    }

    /// Draws concrete counts for one realisation.
    pub fn resolve(&self, rng: &mut SimRng) -> Result<ResolvedPopulation> {
        self.validate()?;
        let susceptible = match self.allocation {
            Allocation::Deterministic => self.deterministic_split(),
            Allocation::RandomMultinomial => multinomial(self.n, &self.pi, rng),
        };
        Ok(ResolvedPopulation { susceptible, infective: self.initial_counts() })
    }
}

/// Multinomial draw by sequential conditional binomials.
pub(crate) fn multinomial(n: u64, probs: &[f64], rng: &mut SimRng) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut remaining = n;
    let mut mass = 1.0;
    for (i, p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = remaining;
            break;
        }
        let cond = (p / mass).clamp(0.0, 1.0);
        let k = Binomial::new(remaining, cond).expect("probability in [0,1]").sample(rng);
        out[i] = k;
        remaining -= k;
        mass -= p;
    }
    out
}
