//! Multitype randomized Reed–Frost epidemics.
//!
//! Each infective of type `i` carries a random contact-probability vector
//! `V_i ∈ [0,1]^m`; while infectious it contacts every type-`k` susceptible
//! independently with probability `V_{i,k}`. This crate provides
//!
//! * [`kernel`] – populations, infectivity kernels and their scaled moments,
//! * [`simulator`] – exact generation-by-generation final-size simulation,
//! * [`deterministic`] – the attack-rate fixed point and threshold parameter,
//! * [`branching`] – the mixed-Poisson branching approximation,
//! * [`clt`] – the Gaussian limit of the final size,
//! * [`graphs`] – random-graph and multi-group models compiled to kernels,
//! * [`harness`] – experiment configs and theory-vs-simulation validation.
//!
//! Throughout, `mu[(i, j)]` is the scaled mean infectivity *from* type `i`
//! *to* type `j`, and `lambda[i][(j, k)]` is the scaled covariance of
//! `V_{i,j}` and `V_{i,k}`.

pub mod branching;
pub mod clt;
pub mod deterministic;
pub mod error;
pub mod graphs;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
pub use kernel::{
    Allocation, InfectivityKernel, InfectivityModel, InitialInfectives, MomentSummary,
    PopulationSpec, ResolvedPopulation, ScalarLaw,
};
pub use simulator::{FinalSizeRecord, OutbreakClass};

/// Random stream used by every sampler in the crate.
pub type SimRng = rand_chacha::ChaCha8Rng;
