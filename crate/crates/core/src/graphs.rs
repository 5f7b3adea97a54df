//! Random-graph and multi-group epidemics compiled to infectivity kernels.
//!
//! None of these builds a graph: an edge between two individuals is
//! independent of the rest of the graph, so it can be revealed at the moment
//! one of them becomes infectious.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Allocation, InfectivityKernel, InfectivityModel, ScalarLaw};
use crate::linalg;
use crate::SimRng;

fn nonnegative(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::invalid(format!("{what} must be finite and nonnegative")));
    }
    Ok(())
}

fn symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if linalg::asymmetry(m) > 1e-12 {
        return Err(Error::invalid(format!("{what} must be symmetric")));
    }
    Ok(())
}

fn check_pi(pi: &[f64]) -> Result<()> {
    if pi.is_empty() || pi.iter().any(|p| !p.is_finite() || *p <= 0.0) {
        return Err(Error::invalid("type proportions must be strictly positive"));
    }
    if (pi.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("type proportions must sum to 1"));
    }
    Ok(())
}

/// A kernel whose model only makes sense with random type allocation.
#[derive(Clone, Debug)]
pub struct RandomAllocationModel {
    pub kernel: InfectivityKernel,
    pub pi: Vec<f64>,
    /// Always [`Allocation::RandomMultinomial`].
    pub allocation: Allocation,
}

/// How a type-`i` infective's contact probabilities to different types relate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WCoupling {
    /// One `W` per infective, used for every target type.
    #[default]
    Shared,
    /// An independent `W` per target type.
    Independent,
}

/// Static multitype Bernoulli graph: an edge joins a type-`i` and a type-`j`
/// vertex with probability `α_ij / N`, and an infective contacts each
/// acquaintance with probability `W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticGraphSpec {
    pub alpha: Vec<Vec<f64>>,
    pub w: ScalarLaw,
    #[serde(default)]
    pub coupling: WCoupling,
}

#[derive(Clone, Debug)]
pub struct StaticGraphModel {
    alpha: DMatrix<f64>,
    w: ScalarLaw,
    coupling: WCoupling,
}

impl StaticGraphModel {
    fn draw(&self, infector: usize, rng: &mut SimRng, out: &mut [f64], scale: f64) {
        match self.coupling {
            WCoupling::Shared => {
                let w = self.w.sample(rng);
                for (j, o) in out.iter_mut().enumerate() {
                    *o = (self.alpha[(infector, j)] * w / scale).min(1.0);
                }
            }
            WCoupling::Independent => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = (self.alpha[(infector, j)] * self.w.sample(rng) / scale).min(1.0);
                }
            }
        }
    }
}

impl InfectivityModel for StaticGraphModel {
    fn types(&self) -> usize {
        self.alpha.nrows()
    }

    fn sample_row(&self, infector: usize, n: f64, rng: &mut SimRng, out: &mut [f64]) {
        self.draw(infector, rng, out, n);
    }

    fn sample_limit_row(&self, infector: usize, rng: &mut SimRng, out: &mut [f64]) {
        match self.coupling {
            WCoupling::Shared => {
                let w = self.w.sample(rng);
                for (j, o) in out.iter_mut().enumerate() {
                    *o = self.alpha[(infector, j)] * w;
                }
            }
            WCoupling::Independent => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = self.alpha[(infector, j)] * self.w.sample(rng);
                }
            }
        }
    }

    fn limit_mean(&self) -> Option<DMatrix<f64>> {
        Some(&self.alpha * self.w.mean())
    }

    fn limit_covariances(&self) -> Option<Vec<DMatrix<f64>>> {
        let m = self.types();
        let var = self.w.variance();
        Some(
            (0..m)
                .map(|i| {
                    DMatrix::from_fn(m, m, |j, k| {
                        let coupled = match self.coupling {
                            WCoupling::Shared => 1.0,
                            WCoupling::Independent if j == k => 1.0,
                            WCoupling::Independent => 0.0,
                        };
                        self.alpha[(i, j)] * self.alpha[(i, k)] * var * coupled
                    })
                })
                .collect(),
        )
    }

    fn limit_laplace(&self, infector: usize, t: &[f64]) -> Option<f64> {
        let row = self.alpha.row(infector);
        Some(match self.coupling {
            WCoupling::Shared => self.w.laplace(t.iter().zip(row.iter()).map(|(tj, a)| tj * a).sum()),
            WCoupling::Independent => t.iter().zip(row.iter()).map(|(tj, a)| self.w.laplace(tj * a)).product(),
        })
    }

    fn is_degenerate(&self) -> bool {
        self.w.is_degenerate()
    }
}

/// Rejects asymmetric, negative or reducible `α`.
pub fn static_bernoulli_kernel(spec: &StaticGraphSpec) -> Result<InfectivityKernel> {
    let alpha = linalg::from_rows(&spec.alpha)?;
    linalg::require_square(&alpha, alpha.nrows(), "alpha")?;
    nonnegative(&alpha, "alpha")?;
    symmetric(&alpha, "alpha")?;
    if !linalg::is_irreducible(&alpha) {
        return Err(Error::invalid("the acquaintance graph must be irreducible"));
    }
    spec.w.validate_probability()?;
    InfectivityKernel::new(StaticGraphModel { alpha, w: spec.w.clone(), coupling: spec.coupling })
}

/// Mixed Bernoulli graph: connectivity `D` takes value `θ_j` with probability
/// `π_j`; two individuals are acquainted with probability `D_k D_l / N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedGraphSpec {
    pub theta: Vec<f64>,
    pub pi: Vec<f64>,
    pub w: ScalarLaw,
}

#[derive(Clone, Debug)]
pub struct MixedBernoulliModel {
    theta: Vec<f64>,
    w: ScalarLaw,
}

impl InfectivityModel for MixedBernoulliModel {
    fn types(&self) -> usize {
        self.theta.len()
    }

    fn sample_row(&self, infector: usize, n: f64, rng: &mut SimRng, out: &mut [f64]) {
        let w = self.w.sample(rng);
        for (o, th) in out.iter_mut().zip(&self.theta) {
            *o = (self.theta[infector] * th * w / n).min(1.0);
        }
    }

    fn sample_limit_row(&self, infector: usize, rng: &mut SimRng, out: &mut [f64]) {
        let w = self.w.sample(rng);
        for (o, th) in out.iter_mut().zip(&self.theta) {
            *o = self.theta[infector] * th * w;
        }
    }

    fn limit_mean(&self) -> Option<DMatrix<f64>> {
        let m = self.types();
        let ew = self.w.mean();
        Some(DMatrix::from_fn(m, m, |i, j| self.theta[i] * self.theta[j] * ew))
    }

    fn limit_covariances(&self) -> Option<Vec<DMatrix<f64>>> {
        let m = self.types();
        let var = self.w.variance();
        let th = &self.theta;
        Some(
            (0..m)
                .map(|i| DMatrix::from_fn(m, m, |j, k| th[i] * th[i] * th[j] * th[k] * var))
                .collect(),
        )
    }

    fn limit_laplace(&self, infector: usize, t: &[f64]) -> Option<f64> {
        let s: f64 = t.iter().zip(&self.theta).map(|(tj, th)| tj * th).sum();
        Some(self.w.laplace(self.theta[infector] * s))
    }

    fn is_degenerate(&self) -> bool {
        self.w.is_degenerate()
    }
}

/// The kernel plus the random allocation this model requires.
pub fn mixed_bernoulli_kernel(spec: &MixedGraphSpec) -> Result<RandomAllocationModel> {
    if spec.theta.len() != spec.pi.len() {
        return Err(Error::Dimension("theta and pi differ in length".into()));
    }
    if spec.theta.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::invalid("theta must be finite and nonnegative"));
    }
    check_pi(&spec.pi)?;
    spec.w.validate_probability()?;
    let kernel = InfectivityKernel::new(MixedBernoulliModel { theta: spec.theta.clone(), w: spec.w.clone() })?;
    Ok(RandomAllocationModel { kernel, pi: spec.pi.clone(), allocation: Allocation::RandomMultinomial })
}

/// Dynamic Bernoulli graph in equilibrium: a type-`(i, j)` edge lasts
/// `Exp(ρ⁻_ij)` and re-forms after `N · Exp(ρ⁺_ij)`; acquainted infectives
/// contact at rate `β_ij` over an infectious lifetime `Q_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicGraphSpec {
    pub rho_plus: Vec<Vec<f64>>,
    pub rho_minus: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub lifetime: Vec<ScalarLaw>,
}

#[derive(Clone, Debug)]
pub struct DynamicGraphModel {
    rho_plus: DMatrix<f64>,
    rho_minus: DMatrix<f64>,
    beta: DMatrix<f64>,
    lifetime: Vec<ScalarLaw>,
}

impl DynamicGraphModel {
    /// `(β/c, (1 − e^{−cQ}))` with `c = ρ⁻ + β`.
    fn parts(&self, i: usize, j: usize, q: f64) -> (f64, f64, f64) {
        let c = self.rho_minus[(i, j)] + self.beta[(i, j)];
        (self.beta[(i, j)] / c, -(-c * q).exp_m1(), c)
    }

    /// Contact probability at scale `n` for lifetime `q`.
    pub fn contact_probability(&self, i: usize, j: usize, n: f64, q: f64) -> f64 {
        let (ratio, hit, c) = self.parts(i, j, q);
        let rp = self.rho_plus[(i, j)];
        let alpha = rp / (rp + n * self.rho_minus[(i, j)]);
        let initial = alpha * ratio * hit;
        let secondary = (rp / n) * ratio * (q - hit / c);
        (initial + secondary).clamp(0.0, 1.0)
    }

    /// `lim n · contact_probability(n, q)`.
    pub fn scaled_limit(&self, i: usize, j: usize, q: f64) -> f64 {
        let (ratio, hit, c) = self.parts(i, j, q);
        let rp = self.rho_plus[(i, j)];
        (rp / self.rho_minus[(i, j)]) * ratio * hit + rp * ratio * (q - hit / c)
    }
}

impl InfectivityModel for DynamicGraphModel {
    fn types(&self) -> usize {
        self.lifetime.len()
    }

    fn sample_row(&self, infector: usize, n: f64, rng: &mut SimRng, out: &mut [f64]) {
        let q = self.lifetime[infector].sample(rng);
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.contact_probability(infector, j, n, q);
        }
    }

    fn sample_limit_row(&self, infector: usize, rng: &mut SimRng, out: &mut [f64]) {
        let q = self.lifetime[infector].sample(rng);
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.scaled_limit(infector, j, q);
        }
    }

    fn limit_mean(&self) -> Option<DMatrix<f64>> {
        let m = self.types();
        Some(DMatrix::from_fn(m, m, |i, j| {
            let law = &self.lifetime[i];
            let c = self.rho_minus[(i, j)] + self.beta[(i, j)];
            let ratio = self.beta[(i, j)] / c;
            let hit = 1.0 - law.laplace(c);
            let rp = self.rho_plus[(i, j)];
            (rp / self.rho_minus[(i, j)]) * ratio * hit + rp * ratio * (law.mean() - hit / c)
        }))
    }

    fn limit_laplace(&self, infector: usize, t: &[f64]) -> Option<f64> {
        match self.lifetime[infector] {
            ScalarLaw::Constant { value } => {
                let s: f64 = t.iter().enumerate().map(|(j, tj)| tj * self.scaled_limit(infector, j, value)).sum();
                Some((-s).exp())
            }
            _ => None,
        }
    }

    fn is_degenerate(&self) -> bool {
        self.lifetime.iter().all(ScalarLaw::is_degenerate)
    }
}

pub fn dynamic_bernoulli_kernel(spec: &DynamicGraphSpec) -> Result<InfectivityKernel> {
    let rho_plus = linalg::from_rows(&spec.rho_plus)?;
    let rho_minus = linalg::from_rows(&spec.rho_minus)?;
    let beta = linalg::from_rows(&spec.beta)?;
    let m = spec.lifetime.len();
    for (mat, what) in [(&rho_plus, "rho_plus"), (&rho_minus, "rho_minus"), (&beta, "beta")] {
        linalg::require_square(mat, m, what)?;
        nonnegative(mat, what)?;
    }
    if rho_plus.iter().chain(rho_minus.iter()).any(|x| *x <= 0.0) {
        return Err(Error::invalid("edge formation and dissolution rates must be positive"));
    }
    symmetric(&rho_plus, "rho_plus")?;
    symmetric(&rho_minus, "rho_minus")?;
    for law in &spec.lifetime {
        law.validate()?;
    }
    InfectivityKernel::new(DynamicGraphModel { rho_plus, rho_minus, beta, lifetime: spec.lifetime.clone() })
}

/// Time an infective spends in each group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sojourn {
    /// A total lifetime `L` split in fixed fractions, `I_j = f_j L`.
    Split { lifetime: ScalarLaw, fractions: Vec<f64> },
    /// Independent times per group.
    Independent { laws: Vec<ScalarLaw> },
}

impl Sojourn {
    fn validate(&self, m: usize) -> Result<()> {
        match self {
            Sojourn::Split { lifetime, fractions } => {
                lifetime.validate()?;
                if fractions.len() != m || fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
                    return Err(Error::invalid(format!("sojourn fractions must be {m} nonnegative numbers")));
                }
            }
            Sojourn::Independent { laws } => {
                if laws.len() != m {
                    return Err(Error::Dimension(format!("expected {m} sojourn laws")));
                }
                for l in laws {
                    l.validate()?;
                }
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut SimRng, out: &mut [f64]) {
        match self {
            Sojourn::Split { lifetime, fractions } => {
                let l = lifetime.sample(rng);
                for (o, f) in out.iter_mut().zip(fractions) {
                    *o = f * l;
                }
            }
            Sojourn::Independent { laws } => {
                for (o, law) in out.iter_mut().zip(laws) {
                    *o = law.sample(rng);
                }
            }
        }
    }

    fn mean(&self) -> Vec<f64> {
        match self {
            Sojourn::Split { lifetime, fractions } => fractions.iter().map(|f| f * lifetime.mean()).collect(),
            Sojourn::Independent { laws } => laws.iter().map(ScalarLaw::mean).collect(),
        }
    }

    fn covariance(&self) -> DMatrix<f64> {
        match self {
            Sojourn::Split { lifetime, fractions } => {
                let m = fractions.len();
                let v = lifetime.variance();
                DMatrix::from_fn(m, m, |a, b| fractions[a] * fractions[b] * v)
            }
            Sojourn::Independent { laws } => {
                let v: Vec<f64> = laws.iter().map(ScalarLaw::variance).collect();
                linalg::diag(&v)
            }
        }
    }

    /// `E[exp(−Σ_j c_j I_j)]`.
    fn laplace(&self, c: &[f64]) -> f64 {
        match self {
            Sojourn::Split { lifetime, fractions } => {
                lifetime.laplace(fractions.iter().zip(c).map(|(f, cj)| f * cj).sum())
            }
            Sojourn::Independent { laws } => laws.iter().zip(c).map(|(l, cj)| l.laplace(*cj)).product(),
        }
    }
}

/// Multi-group model with moving infectives: an infective from group `i`,
/// currently in group `j`, contacts a given group-`k` individual at rate
/// `β^{(i)}_{kj} / N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallClancy93Spec {
    /// `contact[i][k][j] = β^{(i)}_{kj}`.
    pub contact: Vec<Vec<Vec<f64>>>,
    /// Sojourn law per group of origin.
    pub sojourn: Vec<Sojourn>,
}

#[derive(Clone, Debug)]
pub struct BallClancy93Model {
    contact: Vec<DMatrix<f64>>,
    sojourn: Vec<Sojourn>,
}

impl BallClancy93Model {
    /// `Σ_j β^{(i)}_{kj} I_j` for every target `k`.
    fn pressure(&self, infector: usize, rng: &mut SimRng, out: &mut [f64]) {
        let m = self.contact.len();
        let mut times = vec![0.0; m];
        self.sojourn[infector].sample(rng, &mut times);
        let b = &self.contact[infector];
        for (k, o) in out.iter_mut().enumerate() {
            *o = (0..m).map(|j| b[(k, j)] * times[j]).sum();
        }
    }
}

impl InfectivityModel for BallClancy93Model {
    fn types(&self) -> usize {
        self.contact.len()
    }

    fn sample_row(&self, infector: usize, n: f64, rng: &mut SimRng, out: &mut [f64]) {
        self.pressure(infector, rng, out);
        for o in out.iter_mut() {
            *o = -(-*o / n).exp_m1();
        }
    }

    fn sample_log_escape(&self, infector: usize, n: f64, rng: &mut SimRng, out: &mut [f64]) {
        self.pressure(infector, rng, out);
        for o in out.iter_mut() {
            *o = -*o / n;
        }
    }

    fn sample_limit_row(&self, infector: usize, rng: &mut SimRng, out: &mut [f64]) {
        self.pressure(infector, rng, out);
    }

    fn limit_mean(&self) -> Option<DMatrix<f64>> {
        let m = self.types();
        let rows: Vec<nalgebra::DVector<f64>> = (0..m)
            .map(|i| &self.contact[i] * nalgebra::DVector::from_vec(self.sojourn[i].mean()))
            .collect();
        Some(DMatrix::from_fn(m, m, |i, k| rows[i][k]))
    }

    fn limit_covariances(&self) -> Option<Vec<DMatrix<f64>>> {
        Some(
            (0..self.types())
                .map(|i| {
                    let b = &self.contact[i];
                    b * self.sojourn[i].covariance() * b.transpose()
                })
                .collect(),
        )
    }

    fn limit_laplace(&self, infector: usize, t: &[f64]) -> Option<f64> {
        // Σ_k t_k Σ_j β_kj I_j = Σ_j (Σ_k t_k β_kj) I_j
        let b = &self.contact[infector];
        let m = self.types();
        let c: Vec<f64> = (0..m).map(|j| (0..m).map(|k| t[k] * b[(k, j)]).sum()).collect();
        Some(self.sojourn[infector].laplace(&c))
    }

    fn is_degenerate(&self) -> bool {
        self.sojourn.iter().all(|s| match s {
            Sojourn::Split { lifetime, .. } => lifetime.is_degenerate(),
            Sojourn::Independent { laws } => laws.iter().all(ScalarLaw::is_degenerate),
        })
    }
}

pub fn ball_clancy93_kernel(spec: &BallClancy93Spec) -> Result<InfectivityKernel> {
    let m = spec.contact.len();
    if m == 0 || spec.sojourn.len() != m {
        return Err(Error::Dimension("need one contact matrix and one sojourn law per group".into()));
    }
    let contact = spec
        .contact
        .iter()
        .map(|rows| {
            let b = linalg::from_rows(rows)?;
            linalg::require_square(&b, m, "contact")?;
            nonnegative(&b, "contact")?;
            Ok(b)
        })
        .collect::<Result<Vec<_>>>()?;
    for s in &spec.sojourn {
        s.validate(m)?;
    }
    InfectivityKernel::new(BallClancy93Model { contact, sojourn: spec.sojourn.clone() })
}

/// Homogeneous mixing where each individual carries a type drawn from `π`
/// and infectives of type `i` follow a single-type base kernel.
#[derive(Clone, Debug)]
pub struct RandomTypeModel {
    bases: Vec<InfectivityKernel>,
}

impl InfectivityModel for RandomTypeModel {
    fn types(&self) -> usize {
        self.bases.len()
    }

    fn sample_row(&self, infector: usize, n: f64, rng: &mut SimRng, out: &mut [f64]) {
        let mut v = [0.0];
        self.bases[infector].model().sample_row(0, n, rng, &mut v);
        out.fill(v[0]);
    }

    fn sample_log_escape(&self, infector: usize, n: f64, rng: &mut SimRng, out: &mut [f64]) {
        let mut v = [0.0];
        self.bases[infector].model().sample_log_escape(0, n, rng, &mut v);
        out.fill(v[0]);
    }

    fn sample_limit_row(&self, infector: usize, rng: &mut SimRng, out: &mut [f64]) {
        let mut v = [0.0];
        self.bases[infector].model().sample_limit_row(0, rng, &mut v);
        out.fill(v[0]);
    }

    fn limit_mean(&self) -> Option<DMatrix<f64>> {
        let m = self.types();
        Some(DMatrix::from_fn(m, m, |i, _| self.bases[i].mu()[(0, 0)]))
    }

    fn limit_covariances(&self) -> Option<Vec<DMatrix<f64>>> {
        let m = self.types();
        Some(self.bases.iter().map(|b| DMatrix::from_element(m, m, b.lambda()[0][(0, 0)])).collect())
    }

    fn limit_laplace(&self, infector: usize, t: &[f64]) -> Option<f64> {
        self.bases[infector].model().limit_laplace(0, &[t.iter().sum()])
    }

    fn is_degenerate(&self) -> bool {
        self.bases.iter().all(InfectivityKernel::is_degenerate)
    }
}

/// Wraps single-type kernels into an `m`-type model with random type allocation.
pub fn ball_clancy95_model(bases: Vec<InfectivityKernel>, pi: Vec<f64>) -> Result<RandomAllocationModel> {
    if bases.len() != pi.len() {
        return Err(Error::Dimension("one base kernel per type is required".into()));
    }
    if bases.iter().any(|b| b.types() != 1) {
        return Err(Error::Dimension("base kernels must be single-type".into()));
    }
    check_pi(&pi)?;
    let kernel = InfectivityKernel::new(RandomTypeModel { bases })?;
    Ok(RandomAllocationModel { kernel, pi, allocation: Allocation::RandomMultinomial })
}
