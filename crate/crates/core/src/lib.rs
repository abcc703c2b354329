//! Jointly differentially private solvers for packing linear programs.
//!
//! Two solvers share a Lagrangian core:
//!
//! * [`solver_dmw`]: noisy dual multiplicative weights over `T` rounds. Every
//!   round prices resources, lets every agent best-respond, perturbs the
//!   resulting subgradient with Laplace noise and updates the prices
//!   multiplicatively. Agents observe the time-averaged allocation.
//! * [`solver_domw`]: a single random-order pass. Each arriving agent
//!   best-responds to the posted prices, pays them, and its noisy demand
//!   drives the next price update. Linear time and truthful.
//!
//! Only price vectors depend on the noise; every agent's allocation is a
//! function of the published prices and its own data.
//!
//! [`reference`] holds exact oracles for small instances, [`hardness_bridge`]
//! turns a counting-query workload into a packing instance and back, and
//! [`harness`] runs sweeps and writes CSV reports.

pub mod dual_core;
pub mod error;
pub mod hardness_bridge;
pub mod harness;
pub mod model;
pub mod numeric;
pub mod privacy;
pub mod reference;
pub mod report;
pub mod solver_dmw;
pub mod solver_domw;

pub use dual_core::{BestResponse, DualPriceVector};
pub use error::{Error, Result};
pub use model::{AgentData, Allocation, AllocationMetrics, PackingInstance};
pub use privacy::{NoiseStream, PrivacySpec};
pub use report::SolverReport;
