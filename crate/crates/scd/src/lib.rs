//! Stochastically coordinated dispatching (SCD) for heterogeneous
//! multi-dispatcher clusters.
//!
//! The crate is organized around the round-based cluster model: `n` FIFO
//! servers with expected per-round processing rates `μ_s`, and `m`
//! dispatchers that each receive a Poisson stream of jobs and must route
//! every job immediately and independently of the other dispatchers.
//!
//! - [`core`] — cluster description, domain types, and the seeded random
//!   streams that keep arrival/capacity processes identical across policies.
//! - [`balance`] — the water-filling computation of the ideal workload (IWL)
//!   and the ideally balanced assignment (IBA).
//! - [`scd_opt`] — solvers for the simplex-constrained quadratic program
//!   whose solution is the per-round dispatch probability vector.
//! - [`policies`] — SCD itself plus the baseline dispatching policies
//!   (JSQ, SED, JSQ(2), JIQ, LSQ, WR, TWF and their heterogeneity-aware
//!   variants).
//! - [`sim`] — the three-phase round engine and metric collection.
//! - [`experiment`] — sweep / tail / timing experiment drivers and CSV
//!   emission, used by the `scd` binary.

pub mod balance;
pub mod core;
pub mod experiment;
pub mod policies;
pub mod scd_opt;
pub mod sim;

pub use crate::core::{ClusterSpec, ProbabilityVector, RandomStreams, RoundTraffic};
pub use balance::{compute_iba, compute_ideal_workload, IdealAssignment, LoadSnapshot};
pub use policies::{build_policy, Policy, PolicyContext, PolicyDecision, POLICY_NAMES};
pub use scd_opt::{QpInstance, QpSolution};
pub use sim::{run_simulation, summarize, SimulationConfig, SimulationReport};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cluster has no servers")]
    EmptyServerSet,
    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("solver contract violated: {0}")]
    Contract(String),
    #[error("internal numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
