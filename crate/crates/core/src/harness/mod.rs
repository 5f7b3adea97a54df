//! Experiment runs and theory-versus-simulation checks.

mod config;
mod records;

use std::path::PathBuf;

use rand::SeedableRng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::branching::{self, ExtinctionOptions, ExtinctionSolution, OffspringLaw, Progeny};
use crate::clt::{self, AsymptoticSummary};
use crate::deterministic::{self, DeterministicSolution, SolverOptions, SpectralOptions};
use crate::error::{Error, Result};
use crate::linalg;
use crate::simulator::{self, EnsembleOptions, FinalSizeRecord, OutbreakClass};
use crate::stats;
use crate::SimRng;

pub use config::{
    compile_kernel, CheckKind, CompiledModel, ExperimentConfig, KernelConfig, MatrixInput, OutputConfig,
    OutputFormat, PopulationConfig,
};
pub use records::{read_records_csv, write_records, RECORDS_HEADER};

/// Largest minor-outbreak size binned individually by the progeny check.
pub const TV_MAX_BIN: usize = 10;
pub const TV_TOLERANCE: f64 = 0.02;
pub const LLN_FLOOR: f64 = 0.01;
pub const CLT_RELATIVE: f64 = 0.15;
pub const SE_MULTIPLIER: f64 = 4.0;

#[derive(Clone, Debug, Serialize)]
pub struct OutbreakStatistics {
    pub replicates: usize,
    pub major_count: usize,
    pub major_fraction: f64,
    pub major_fraction_se: f64,
    /// Major-conditional mean of `T̄_i = T_i / (N π_i)`.
    pub major_mean: Vec<f64>,
    pub major_mean_se: Vec<f64>,
    pub major_cov: Vec<Vec<f64>>,
    /// Counts of minor outbreaks by total size.
    pub minor_histogram: Vec<u64>,
}

pub fn estimate_outbreak_statistics(records: &[FinalSizeRecord], pi: &[f64]) -> Result<OutbreakStatistics> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no records".into()));
    }
    let m = pi.len();
    let replicates = records.len();
    let fractions: Vec<Vec<f64>> = records
        .iter()
        .filter(|r| r.outbreak_class == OutbreakClass::Major)
        .map(|r| {
            let n = r.population.total_susceptible() as f64;
            r.t_inf.iter().zip(pi).map(|(t, p)| *t as f64 / (n * p)).collect()
        })
        .collect();
    let major_count = fractions.len();
    let f = major_count as f64 / replicates as f64;
    let (major_mean, major_mean_se, major_cov) = if major_count == 0 {
        (vec![f64::NAN; m], vec![f64::NAN; m], vec![vec![f64::NAN; m]; m])
    } else {
        let cov = stats::covariance(&fractions);
        let se = (0..m).map(|i| (cov[(i, i)] / major_count as f64).sqrt()).collect();
        (stats::mean_vector(&fractions), se, linalg::to_rows(&cov))
    };
    let mut minor_histogram = Vec::new();
    for r in records.iter().filter(|r| r.outbreak_class == OutbreakClass::Minor) {
        let t = r.total() as usize;
        if minor_histogram.len() <= t {
            minor_histogram.resize(t + 1, 0);
        }
        minor_histogram[t] += 1;
    }
    Ok(OutbreakStatistics {
        replicates,
        major_count,
        major_fraction: f,
        major_fraction_se: (f * (1.0 - f) / replicates as f64).sqrt(),
        major_mean,
        major_mean_se,
        major_cov,
        minor_histogram,
    })
}

/// Deterministic, branching and Gaussian predictions for a compiled model.
#[derive(Clone, Debug)]
pub struct Theory {
    pub deterministic: DeterministicSolution,
    pub extinction: ExtinctionSolution,
    /// Absent when `U` is singular or the model is not supercritical.
    pub clt: Option<AsymptoticSummary>,
    pub clt_error: Option<String>,
}

pub fn solve_model(model: &CompiledModel) -> Result<DeterministicSolution> {
    let pop = &model.population;
    deterministic::solve_tau(model.kernel.mu(), &pop.pi, &pop.zeta(), SolverOptions::default())
}

pub fn extinction_for_model(model: &CompiledModel) -> Result<ExtinctionSolution> {
    let law = OffspringLaw::new(model.kernel.clone(), model.population.pi.clone())?;
    branching::extinction_probability(&law, &model.population.initial_counts(), ExtinctionOptions::default())
}

pub fn clt_for_model(model: &CompiledModel, solution: &DeterministicSolution) -> Result<AsymptoticSummary> {
    let pop = &model.population;
    clt::asymptotic_covariance(
        solution,
        &pop.zeta(),
        &pop.pi,
        model.kernel.mu(),
        model.kernel.lambda(),
        pop.allocation,
    )
}

pub fn theory(model: &CompiledModel) -> Result<Theory> {
    let deterministic = solve_model(model)?;
    let extinction = extinction_for_model(model)?;
    let (clt, clt_error) = match clt_for_model(model, &deterministic) {
        Ok(s) => (Some(s), None),
        Err(e) if e.is_numerical() => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    Ok(Theory { deterministic, extinction, clt, clt_error })
}

/// `μ`, `Λ`, `R` and irreducibility of the compiled kernel.
pub fn describe_kernel(model: &CompiledModel) -> Result<Value> {
    let pi = &model.population.pi;
    let r = deterministic::compute_r(model.kernel.mu(), pi, SpectralOptions::default())?;
    let mut out = model.kernel.moments().to_json();
    out["R"] = json!(r.value);
    out["R_method"] = json!(r.method);
    out["R_shift"] = json!(r.shift);
    out["irreducible"] = json!(deterministic::check_irreducibility(model.kernel.mu(), pi));
    out["allocation"] = json!(model.population.allocation);
    out["pi"] = json!(pi);
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub check: &'static str,
    pub passed: bool,
    pub theory: Value,
    pub empirical: Value,
    pub standard_error: Value,
    pub tolerance: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub replicates: usize,
    pub seed: u64,
    pub threshold: u64,
    pub records_path: Option<PathBuf>,
    pub theory: Value,
    pub statistics: OutbreakStatistics,
    pub checks: Vec<CheckResult>,
}

fn theory_json(t: &Theory) -> Value {
    json!({
        "deterministic": t.deterministic,
        "extinction": t.extinction,
        "clt": t.clt.as_ref().map(AsymptoticSummary::to_json),
        "clt_error": t.clt_error,
    })
}

fn check_lln(stats: &OutbreakStatistics, theory: &Theory) -> CheckResult {
    let tau = &theory.deterministic.tau;
    let base = |passed, empirical, se, tol, note: Option<String>| CheckResult {
        check: CheckKind::Lln.name(),
        passed,
        theory: json!(tau),
        empirical,
        standard_error: se,
        tolerance: tol,
        note,
    };
    if stats.major_count < 2 {
        let none_expected = theory.deterministic.regime != deterministic::Regime::Supercritical;
        return base(
            none_expected && stats.major_count == 0,
            json!(stats.major_mean),
            json!(stats.major_mean_se),
            json!(LLN_FLOOR),
            Some(format!("{} major outbreaks", stats.major_count)),
        );
    }
    let max_se = stats.major_mean_se.iter().cloned().fold(0.0, f64::max);
    let tol = LLN_FLOOR.max(SE_MULTIPLIER * max_se);
    let dev = stats.major_mean.iter().zip(tau).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    base(dev <= tol, json!(stats.major_mean), json!(stats.major_mean_se), json!(tol), None)
}

fn check_major_prob(stats: &OutbreakStatistics, theory: &Theory) -> CheckResult {
    let p = theory.extinction.major_outbreak_prob;
    let se = (p * (1.0 - p) / stats.replicates as f64).sqrt();
    let tol = SE_MULTIPLIER * se;
    let passed = (stats.major_fraction - p).abs() <= tol.max(1e-12);
    CheckResult {
        check: CheckKind::MajorProb.name(),
        passed,
        theory: json!(p),
        empirical: json!(stats.major_fraction),
        standard_error: json!(se),
        tolerance: json!(tol),
        note: None,
    }
}

fn check_clt(records: &[FinalSizeRecord], model: &CompiledModel, theory: &Theory) -> CheckResult {
    let fail = |note: String| CheckResult {
        check: CheckKind::Clt.name(),
        passed: false,
        theory: Value::Null,
        empirical: Value::Null,
        standard_error: Value::Null,
        tolerance: json!({"relative": CLT_RELATIVE, "se_multiplier": SE_MULTIPLIER}),
        note: Some(note),
    };
    let Some(summary) = &theory.clt else {
        return fail(theory.clt_error.clone().unwrap_or_else(|| "no covariance prediction".into()));
    };
    let pop = &model.population;
    let report = match clt::gaussian_check(records, &theory.deterministic.tau, &summary.asym_cov, pop.n, &pop.pi) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };
    let m = pop.types();
    let c = &summary.asym_cov;
    let mut passed = true;
    let mut tol = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            tol[i][j] = (CLT_RELATIVE * c[(i, j)].abs()).max(SE_MULTIPLIER * report.cov_se[i][j]);
            passed &= (report.sample_cov[i][j] - c[(i, j)]).abs() <= tol[i][j];
        }
    }
    CheckResult {
        check: CheckKind::Clt.name(),
        passed,
        theory: json!(linalg::to_rows(c)),
        empirical: json!({
            "covariance": report.sample_cov,
            "mean": report.mean,
            "count": report.count,
            "mardia": report.mardia,
        }),
        standard_error: json!(report.cov_se),
        tolerance: json!(tol),
        note: None,
    }
}

/// Total-size pmf on `{0..10, >10}`: epidemic (all records) against branching
/// total progeny (same number of runs).
fn check_branching_tv(records: &[FinalSizeRecord], model: &CompiledModel, seed: u64) -> Result<CheckResult> {
    let law = OffspringLaw::new(model.kernel.clone(), model.population.pi.clone())?;
    let a = model.population.initial_counts();
    // every progeny above the last bin lands in the overflow bin, so a cap at
    // the last bin gives the same binned law as an unbounded run
    let cap = TV_MAX_BIN as u64;
    let mut rng = SimRng::seed_from_u64(simulator::replicate_seed(seed ^ 0x6272_616e_6368, usize::MAX));
    let mut progeny = Vec::with_capacity(records.len());
    for _ in 0..records.len() {
        progeny.push(match law.simulate_total_progeny(&a, cap, &mut rng)? {
            Progeny::Finite(z) => z.iter().sum::<u64>(),
            Progeny::Exceeded => u64::MAX,
        });
    }
    let epi = stats::binned_pmf(records.iter().map(FinalSizeRecord::total), TV_MAX_BIN);
    let br = stats::binned_pmf(progeny, TV_MAX_BIN);
    let tv = stats::total_variation(&epi, &br);
    Ok(CheckResult {
        check: CheckKind::BranchingTv.name(),
        passed: tv <= TV_TOLERANCE,
        theory: json!(br),
        empirical: json!({"pmf": epi, "total_variation": tv}),
        standard_error: json!((1.0 / records.len() as f64).sqrt()),
        tolerance: json!(TV_TOLERANCE),
        note: None,
    })
}

pub fn ensemble_options(cfg: &ExperimentConfig) -> EnsembleOptions {
    EnsembleOptions {
        replicates: cfg.replicates,
        seed: cfg.seed,
        workers: cfg.workers,
        threshold: cfg.threshold_override,
        thinning: simulator::Thinning::Aggregated,
    }
}

/// Runs the ensemble and writes records when an output is configured.
pub fn simulate(cfg: &ExperimentConfig) -> Result<(CompiledModel, Vec<FinalSizeRecord>)> {
    cfg.validate()?;
    let model = cfg.compile()?;
    let records = simulator::run_ensemble(&model.population, &model.kernel, ensemble_options(cfg))?;
    if let Some(out) = &cfg.output {
        write_records(&out.path, out.format, &records)?;
    }
    Ok((model, records))
}

/// Simulates, computes the theory and runs every enabled check.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    let (model, records) = simulate(cfg)?;
    let theory = theory(&model)?;
    let stats = estimate_outbreak_statistics(&records, &model.population.pi)?;
    let mut checks = Vec::with_capacity(cfg.checks.len());
    for kind in &cfg.checks {
        checks.push(match kind {
            CheckKind::Lln => check_lln(&stats, &theory),
            CheckKind::MajorProb => check_major_prob(&stats, &theory),
            CheckKind::Clt => check_clt(&records, &model, &theory),
            CheckKind::BranchingTv => check_branching_tv(&records, &model, cfg.seed)?,
        });
    }
    Ok(ValidationReport {
        passed: checks.iter().all(|c| c.passed),
        replicates: cfg.replicates,
        seed: cfg.seed,
        threshold: cfg.threshold_override.unwrap_or_else(|| simulator::default_threshold(model.population.n)),
        records_path: cfg.output.as_ref().map(|o| o.path.clone()),
        theory: theory_json(&theory),
        statistics: stats,
        checks,
    })
}

/// Process exit code for an error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(kernel: &str, replicates: usize, checks: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{"population": {{"pi": [1.0], "n": 1000, "a": [1]}},
                "kernel": {kernel}, "replicates": {replicates}, "seed": 3, "checks": {checks}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn zero_kernel_major_prob_passes() {
        let cfg = config(r#"{"kind": "constant", "mu": 0.0}"#, 200, r#"["major_prob"]"#);
        let report = run_experiment(&cfg).unwrap();
        assert!(report.passed);
        assert_eq!(report.checks.len(), 1);
        assert_eq!(report.statistics.major_fraction, 0.0);
    }

    #[test]
    fn every_enabled_check_reported_once() {
        let cfg = config(r#"{"kind": "constant", "mu": 2.0}"#, 300, r#"["lln", "major_prob", "clt", "branching_tv"]"#);
        let report = run_experiment(&cfg).unwrap();
        let names: Vec<_> = report.checks.iter().map(|c| c.check).collect();
        assert_eq!(names, ["lln", "major_prob", "clt", "branching_tv"]);
        // 300 replicates cannot give 500 major outbreaks
        let clt = &report.checks[2];
        assert!(!clt.passed);
        assert!(clt.note.as_ref().unwrap().contains("insufficient"));
    }

    #[test]
    fn statistics_of_minor_only_ensemble() {
        let cfg = config(r#"{"kind": "constant", "mu": 0.5}"#, 100, "[]");
        let (model, records) = simulate(&cfg).unwrap();
        let s = estimate_outbreak_statistics(&records, &model.population.pi).unwrap();
        assert_eq!(s.major_fraction, 0.0);
        assert_eq!(s.minor_histogram.iter().sum::<u64>(), 100);
    }
}
