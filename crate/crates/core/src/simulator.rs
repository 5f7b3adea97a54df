//! Exact final-size simulation, generation by generation.
//!
//! Each generation the active infectives draw their infectivity vectors and
//! every remaining susceptible of type `k` escapes all of them independently.
//! The escape probability of one susceptible is `Π (1 − V_{l,k})` over the
//! active infectives `l`, so the new type-`k` cases are
//! `Binomial(S_k, 1 − Π (1 − V_{l,k}))`. [`Thinning::PerInfective`] instead
//! lets each infective thin the remaining susceptibles in turn; both give the
//! same law.

use rand::{Rng, SeedableRng};
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{InfectivityKernel, PopulationSpec, ResolvedPopulation};
use crate::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutbreakClass {
    Major,
    Minor,
}

impl OutbreakClass {
    pub fn as_str(self) -> &'static str {
        match self {
            OutbreakClass::Major => "major",
            OutbreakClass::Minor => "minor",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalSizeRecord {
    pub replicate: usize,
    /// Seed of this replicate's stream (0 for a stand-alone run).
    pub seed: u64,
    /// Infections among the initial susceptibles, by type.
    pub t_inf: Vec<u64>,
    /// Number of generations that produced at least one infection.
    pub generations: u64,
    pub outbreak_class: OutbreakClass,
    pub population: ResolvedPopulation,
}

impl FinalSizeRecord {
    pub fn total(&self) -> u64 {
        self.t_inf.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Thinning {
    #[default]
    Aggregated,
    PerInfective,
}

/// `ceil(N^{3/4})`.
pub fn default_threshold(n: u64) -> u64 {
    (n as f64).powf(0.75).ceil() as u64
}

pub fn classify_outbreak(record: &FinalSizeRecord, threshold: u64) -> OutbreakClass {
    if record.total() >= threshold {
        OutbreakClass::Major
    } else {
        OutbreakClass::Minor
    }
}

fn check_dims(spec: &PopulationSpec, kernel: &InfectivityKernel) -> Result<()> {
    spec.validate()?;
    if spec.types() != kernel.types() {
        return Err(Error::Dimension(format!(
            "population has {} types, kernel has {}",
            spec.types(),
            kernel.types()
        )));
    }
    Ok(())
}

/// One final-size realisation, classified with the default threshold.
pub fn run_final_size(
    spec: &PopulationSpec,
    kernel: &InfectivityKernel,
    rng: &mut SimRng,
) -> Result<FinalSizeRecord> {
    simulate(spec, kernel, rng, Thinning::Aggregated, default_threshold(spec.n))
}

pub fn run_final_size_with(
    spec: &PopulationSpec,
    kernel: &InfectivityKernel,
    rng: &mut SimRng,
    thinning: Thinning,
    threshold: u64,
) -> Result<FinalSizeRecord> {
    simulate(spec, kernel, rng, thinning, threshold)
}

fn binomial(n: u64, p: f64, rng: &mut SimRng) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("probability in (0,1)").sample(rng)
}

fn simulate(
    spec: &PopulationSpec,
    kernel: &InfectivityKernel,
    rng: &mut SimRng,
    thinning: Thinning,
    threshold: u64,
) -> Result<FinalSizeRecord> {
    check_dims(spec, kernel)?;
    let m = spec.types();
    let n = spec.n as f64;
    let population = spec.resolve(rng)?;
    let model = kernel.model();

    // a degenerate kernel has the same log-escape row for every infective
    let fixed_log_escape: Option<Vec<Vec<f64>>> = (kernel.is_degenerate()
        && thinning == Thinning::Aggregated)
        .then(|| {
            (0..m)
                .map(|i| {
                    let mut row = vec![0.0; m];
                    model.sample_log_escape(i, n, rng, &mut row);
                    row
                })
                .collect()
        });

    let mut susceptible = population.susceptible.clone();
    let mut active = population.infective.clone();
    let mut t_inf = vec![0u64; m];
    let mut generations = 0u64;
    let cap = spec.n + active.iter().sum::<u64>();
    let mut log_escape = vec![0.0; m];
    let mut row = vec![0.0; m];
    let mut fresh = vec![0u64; m];

    while active.iter().any(|a| *a > 0) && susceptible.iter().any(|s| *s > 0) {
        if generations >= cap {
            debug_assert!(false, "generation count exceeded N + Σa");
            break;
        }
        match thinning {
            Thinning::Aggregated => {
                log_escape.iter_mut().for_each(|x| *x = 0.0);
                for (i, &count) in active.iter().enumerate() {
                    if count == 0 {
                        continue;
                    }
                    if let Some(fixed) = &fixed_log_escape {
                        for k in 0..m {
                            if fixed[i][k] != 0.0 {
                                log_escape[k] += count as f64 * fixed[i][k];
                            }
                        }
                    } else {
                        for _ in 0..count {
                            model.sample_log_escape(i, n, rng, &mut row);
                            for k in 0..m {
                                log_escape[k] += row[k];
                            }
                        }
                    }
                }
                for k in 0..m {
                    fresh[k] = binomial(susceptible[k], -log_escape[k].exp_m1(), rng);
                    susceptible[k] -= fresh[k];
                }
            }
            Thinning::PerInfective => {
                fresh.iter_mut().for_each(|x| *x = 0);
                for (i, &count) in active.iter().enumerate() {
                    for _ in 0..count {
                        model.sample_row(i, n, rng, &mut row);
                        for k in 0..m {
                            let hit = binomial(susceptible[k], row[k], rng);
                            susceptible[k] -= hit;
                            fresh[k] += hit;
                        }
                    }
                }
            }
        }
        if fresh.iter().all(|f| *f == 0) {
            break;
        }
        generations += 1;
        for k in 0..m {
            t_inf[k] += fresh[k];
        }
        active.copy_from_slice(&fresh);
    }

    let mut record = FinalSizeRecord {
        replicate: 0,
        seed: 0,
        t_inf,
        generations,
        outbreak_class: OutbreakClass::Minor,
        population,
    };
    record.outbreak_class = classify_outbreak(&record, threshold);
    Ok(record)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `r` under base seed `base`.
pub fn replicate_seed(base: u64, r: usize) -> u64 {
    splitmix64(splitmix64(base) ^ (r as u64).wrapping_mul(0xd1b5_4a32_d192_ed03))
}

#[derive(Clone, Copy, Debug)]
pub struct EnsembleOptions {
    pub replicates: usize,
    pub seed: u64,
    pub workers: usize,
    /// Major/minor cut; `None` means [`default_threshold`].
    pub threshold: Option<u64>,
    pub thinning: Thinning,
}

impl EnsembleOptions {
    pub fn new(replicates: usize, seed: u64) -> Self {
        EnsembleOptions { replicates, seed, workers: 1, threshold: None, thinning: Thinning::Aggregated }
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }
}

/// Independent replicates, ordered by replicate index. The output does not
/// depend on the worker count.
pub fn run_ensemble(
    spec: &PopulationSpec,
    kernel: &InfectivityKernel,
    opts: EnsembleOptions,
) -> Result<Vec<FinalSizeRecord>> {
    if opts.replicates == 0 {
        return Err(Error::invalid("replicates must be at least 1"));
    }
    check_dims(spec, kernel)?;
    let threshold = opts.threshold.unwrap_or_else(|| default_threshold(spec.n));
    let one = |r: usize| {
        let seed = replicate_seed(opts.seed, r);
        let mut rng = SimRng::seed_from_u64(seed);
        let mut rec = simulate(spec, kernel, &mut rng, opts.thinning, threshold)?;
        rec.replicate = r;
        rec.seed = seed;
        Ok(rec)
    };
    if opts.workers <= 1 {
        return (0..opts.replicates).map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| (0..opts.replicates).into_par_iter().map(one).collect())
}

/// `X(t)` for one exposure level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountingSnapshot {
    pub t: Vec<f64>,
    pub x: Vec<u64>,
}

/// One realisation of the contact structure behind the counting process:
/// for every initial susceptible, the index of the first type-`k` infective
/// (in a fixed ordering) that contacts it.
#[derive(Clone, Debug)]
pub struct CountingRealization {
    n: u64,
    pi: Vec<f64>,
    available: Vec<u64>,
    /// `first_contact[i][j][k]`, 1-based, `u64::MAX` when never contacted
    /// within the sampled infectives.
    first_contact: Vec<Vec<Vec<u64>>>,
}

impl CountingRealization {
    /// Samples enough infectives of each type to serve every level in `levels`.
    pub fn sample(
        spec: &PopulationSpec,
        kernel: &InfectivityKernel,
        levels: &[Vec<f64>],
        rng: &mut SimRng,
    ) -> Result<Self> {
        check_dims(spec, kernel)?;
        let m = spec.types();
        let pop = spec.resolve(rng)?;
        let available: Vec<u64> = (0..m).map(|k| pop.infective[k] + pop.susceptible[k]).collect();
        let mut depth = vec![0u64; m];
        for t in levels {
            let l = exposure_counts(spec.n, &spec.pi, &available, t)?;
            for k in 0..m {
                depth[k] = depth[k].max(l[k]);
            }
        }
        let n = spec.n as f64;
        let mut infectivity: Vec<Vec<Vec<f64>>> = Vec::with_capacity(m);
        for (k, d) in depth.iter().enumerate() {
            let mut rows = Vec::with_capacity(*d as usize);
            for _ in 0..*d {
                let mut row = vec![0.0; m];
                kernel.model().sample_row(k, n, rng, &mut row);
                rows.push(row);
            }
            infectivity.push(rows);
        }
        let first_contact = (0..m)
            .map(|i| {
                (0..pop.susceptible[i])
                    .map(|_| {
                        (0..m)
                            .map(|k| {
                                infectivity[k]
                                    .iter()
                                    .position(|v| rng.random::<f64>() < v[i])
                                    .map_or(u64::MAX, |p| p as u64 + 1)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(CountingRealization { n: spec.n, pi: spec.pi.clone(), available, first_contact })
    }

    /// `χ_{i,j}(t)` for every initial susceptible, grouped by type.
    pub fn indicators(&self, t: &[f64]) -> Result<Vec<Vec<bool>>> {
        let l = exposure_counts(self.n, &self.pi, &self.available, t)?;
        Ok(self
            .first_contact
            .iter()
            .map(|group| {
                group
                    .iter()
                    .map(|firsts| firsts.iter().zip(&l).any(|(f, lk)| *f <= *lk))
                    .collect()
            })
            .collect())
    }

    pub fn snapshot(&self, t: &[f64]) -> Result<CountingSnapshot> {
        let x = self
            .indicators(t)?
            .iter()
            .map(|g| g.iter().filter(|c| **c).count() as u64)
            .collect();
        Ok(CountingSnapshot { t: t.to_vec(), x })
    }
}

/// `⌊t_k N π_k⌋` infectives per type, checked against what exists.
fn exposure_counts(n: u64, pi: &[f64], available: &[u64], t: &[f64]) -> Result<Vec<u64>> {
    if t.len() != pi.len() {
        return Err(Error::Dimension(format!("exposure has length {}, expected {}", t.len(), pi.len())));
    }
    t.iter()
        .enumerate()
        .map(|(k, tk)| {
            if !tk.is_finite() || *tk < 0.0 {
                return Err(Error::Exposure(format!("exposure {tk} for type {k} is not a nonnegative number")));
            }
            let l = (tk * n as f64 * pi[k] + 1e-9).floor() as u64;
            if l > available[k] {
                return Err(Error::Exposure(format!(
                    "exposure for type {k} needs {l} infectives but only {} exist",
                    available[k]
                )));
            }
            Ok(l)
        })
        .collect()
}

/// `X(t)` at each level, all from one realisation (so nested levels give
/// nested infection sets).
pub fn evaluate_counting_process(
    spec: &PopulationSpec,
    kernel: &InfectivityKernel,
    levels: &[Vec<f64>],
    rng: &mut SimRng,
) -> Result<Vec<CountingSnapshot>> {
    let real = CountingRealization::sample(spec, kernel, levels, rng)?;
    levels.iter().map(|t| real.snapshot(t)).collect()
}
