//! Experiment design and estimation for comparing two Markov chains that share
//! a state space.
//!
//! The experimenter controls, at every step, which of the two transition
//! kernels drives the system. Because both kernels act on the same state, one
//! chain's samples shape the states the other chain is observed in (temporal
//! interference). This crate provides:
//!
//! - [`chain`]: the two-chain environment and its closed-form ground truth
//!   (stationary distributions, Poisson solutions, per-state variances).
//! - [`estimators`]: online sufficient statistics, the nonparametric plug-in
//!   MLE and the sample average estimator (SAE).
//! - [`policies`]: sampling policies and policy-limit bookkeeping over the
//!   feasible polytope of visit fractions.
//! - [`design`]: the convex program for the variance-optimal Markov design and
//!   the optimal regenerative design.
//! - [`online`]: the two adaptive designs (per-state adaptive Markov sampling,
//!   and regenerative-cycle adaptive sampling).
//! - [`simulator`]: seeded trajectories, parallel Monte Carlo replications and
//!   validation reports.
//! - [`io`]: JSON schema for chain specifications.

pub mod chain;
pub mod design;
pub mod estimators;
pub mod io;
mod linalg;
pub mod online;
pub mod policies;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use chain::{analyze, Chain, ChainAnalysis, ChainSpec, RewardDist};
pub use design::{DesignSolution, RegenerativeDesign};
pub use estimators::{MleEstimate, StepRecord, SufficientStats};
pub use policies::{KappaVector, PolicyConfig, PolicyDecision};
pub use simulator::{Design, McSummary, RunConfig, RunResult, Simulation};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Spec(#[from] chain::ValidationErrors),
    #[error(transparent)]
    Chain(#[from] chain::ChainError),
    #[error(transparent)]
    Estimator(#[from] estimators::EstimatorError),
    #[error(transparent)]
    Policy(#[from] policies::PolicyError),
    #[error(transparent)]
    Design(#[from] design::DesignError),
    #[error(transparent)]
    Simulation(#[from] simulator::SimulationError),
    #[error(transparent)]
    SpecIo(#[from] io::SpecIoError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
