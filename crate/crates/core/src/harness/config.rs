//! Experiment configuration (a single JSON document).
//!
//! ```json
//! {
//!   "population": {"pi": [1.0], "n": 10000, "a": [1], "allocation": "deterministic"},
//!   "kernel": {"kind": "constant", "mu": 2.0},
//!   "replicates": 10000,
//!   "seed": 1,
//!   "output": {"path": "records.csv", "format": "csv"},
//!   "checks": ["lln", "major_prob", "clt"]
//! }
//! ```
//!
//! `a` (counts) takes precedence over `zeta` (intensities) when both are given.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{
    self, BallClancy93Spec, DynamicGraphSpec, MixedGraphSpec, StaticGraphSpec, WCoupling,
};
use crate::kernel::{
    Allocation, ConstantKernel, InfectivityKernel, InitialInfectives, PopulationSpec, ScalarLaw,
    TableEntry, TableKernel,
};
use crate::linalg;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub pi: Vec<f64>,
    pub n: u64,
    #[serde(default)]
    pub a: Option<Vec<u64>>,
    #[serde(default)]
    pub zeta: Option<Vec<f64>>,
    #[serde(default)]
    pub allocation: Option<Allocation>,
}

/// A matrix, or a bare number for a single-type model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixInput {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixInput {
    pub fn rows(&self) -> Vec<Vec<f64>> {
        match self {
            MatrixInput::Scalar(x) => vec![vec![*x]],
            MatrixInput::Rows(r) => r.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Constant {
        mu: MatrixInput,
    },
    CustomTable {
        rows: Vec<Vec<TableEntry>>,
    },
    /// `π` comes from the population section; allocation is forced random.
    MixedBernoulli {
        theta: Vec<f64>,
        w: ScalarLaw,
    },
    StaticGraph {
        alpha: MatrixInput,
        w: ScalarLaw,
        #[serde(default)]
        coupling: WCoupling,
    },
    DynamicGraph {
        rho_plus: MatrixInput,
        rho_minus: MatrixInput,
        beta: MatrixInput,
        lifetime: Vec<ScalarLaw>,
    },
    BallClancy93 {
        contact: Vec<Vec<Vec<f64>>>,
        sojourn: Vec<graphs::Sojourn>,
    },
    /// Single-type base kernels, one per type; allocation is forced random.
    BallClancy95 {
        bases: Vec<KernelConfig>,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Lln,
    MajorProb,
    Clt,
    BranchingTv,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Lln => "lln",
            CheckKind::MajorProb => "major_prob",
            CheckKind::Clt => "clt",
            CheckKind::BranchingTv => "branching_tv",
        }
    }
}

fn default_replicates() -> usize {
    1000
}

fn default_workers() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub population: PopulationConfig,
    pub kernel: KernelConfig,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threshold_override: Option<u64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub output: Option<OutputConfig>,
    #[serde(default)]
    pub checks: Vec<CheckKind>,
}

/// A config turned into a population and a kernel.
#[derive(Clone, Debug)]
pub struct CompiledModel {
    pub population: PopulationSpec,
    pub kernel: InfectivityKernel,
}

impl ExperimentConfig {
    /// Parses JSON, reporting the line and column of syntax and schema errors.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("{e} (line {}, column {})", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.checks {
            if !seen.insert(c) {
                return Err(Error::Config(format!("check {} listed twice", c.name())));
            }
        }
        Ok(())
    }

    pub fn compile(&self) -> Result<CompiledModel> {
        let p = &self.population;
        let initial = match (&p.a, &p.zeta) {
            (Some(a), _) => InitialInfectives::Counts(a.clone()),
            (None, Some(z)) => InitialInfectives::Intensity(z.clone()),
            (None, None) => return Err(Error::Config("population needs `a` or `zeta`".into())),
        };
        let (kernel, forced) = compile_kernel(&self.kernel, &p.pi)?;
        let allocation = match (forced, p.allocation) {
            (Some(f), _) => f,
            (None, Some(a)) => a,
            (None, None) => Allocation::Deterministic,
        };
        let population = PopulationSpec::new(p.pi.clone(), p.n, initial, allocation)?;
        if kernel.types() != population.types() {
            return Err(Error::Dimension(format!(
                "kernel has {} types but the population has {}",
                kernel.types(),
                population.types()
            )));
        }
        Ok(CompiledModel { population, kernel })
    }
}

/// The kernel and, for models that need it, the allocation they force.
pub fn compile_kernel(cfg: &KernelConfig, pi: &[f64]) -> Result<(InfectivityKernel, Option<Allocation>)> {
    Ok(match cfg {
        KernelConfig::Constant { mu } => {
            (InfectivityKernel::new(ConstantKernel::new(linalg::from_rows(&mu.rows())?)?)?, None)
        }
        KernelConfig::CustomTable { rows } => (InfectivityKernel::new(TableKernel::new(rows.clone())?)?, None),
        KernelConfig::MixedBernoulli { theta, w } => {
            let model = graphs::mixed_bernoulli_kernel(&MixedGraphSpec {
                theta: theta.clone(),
                pi: pi.to_vec(),
                w: w.clone(),
            })?;
            (model.kernel, Some(model.allocation))
        }
        KernelConfig::StaticGraph { alpha, w, coupling } => (
            graphs::static_bernoulli_kernel(&StaticGraphSpec {
                alpha: alpha.rows(),
                w: w.clone(),
                coupling: *coupling,
            })?,
            None,
        ),
        KernelConfig::DynamicGraph { rho_plus, rho_minus, beta, lifetime } => (
            graphs::dynamic_bernoulli_kernel(&DynamicGraphSpec {
                rho_plus: rho_plus.rows(),
                rho_minus: rho_minus.rows(),
                beta: beta.rows(),
                lifetime: lifetime.clone(),
            })?,
            None,
        ),
        KernelConfig::BallClancy93 { contact, sojourn } => (
            graphs::ball_clancy93_kernel(&BallClancy93Spec { contact: contact.clone(), sojourn: sojourn.clone() })?,
            None,
        ),
        KernelConfig::BallClancy95 { bases } => {
            let bases = bases
                .iter()
                .map(|b| compile_kernel(b, &[1.0]).map(|(k, _)| k))
                .collect::<Result<Vec<_>>>()?;
            let model = graphs::ball_clancy95_model(bases, pi.to_vec())?;
            (model.kernel, Some(model.allocation))
        }
    })
}
