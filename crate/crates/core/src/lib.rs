//! Transient simulation of natural-gas pipeline networks driven entirely by
//! flux boundary conditions, with a scenario engine for stochastic demand,
//! supply insults and prescribed controls, and ensemble statistics for
//! survival-time analysis.
//!
//! The crate is organized around five layers:
//!
//! * [`network`] / [`gas`] — topology, units and the equation of state;
//! * [`grid`] / [`state`] / [`solver`] / [`steady`] / [`sim`] — the explicit
//!   conservative staggered-grid integrator and its initialization;
//! * [`scenario`] / [`power`] — boundary-condition composition (nominal
//!   profiles, noise, insults, controls, power-to-gas ingestion);
//! * [`metrics`] / [`ensemble`] — linepack, pressure crossings, survival
//!   times, Monte-Carlo quantile bands and monotonicity verification;
//! * [`report`] / [`verify`] — file export and the built-in verification
//!   battery.

pub mod boundary;
pub mod ensemble;
pub mod error;
pub mod gas;
pub mod grid;
pub mod metrics;
pub mod network;
pub mod power;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod solver;
pub mod state;
pub mod steady;
pub mod units;
pub mod verify;

#[cfg(test)]
pub(crate) mod testutil;

pub use boundary::{BoundarySet, Interp, Profile};
pub use ensemble::{run_ensemble, EnsembleStats};
pub use error::{Error, Result};
pub use gas::{cnga_z, density_from_pressure, pressure_from_density, sound_speed};
pub use gas::{EosKernel, EosMode, GasProperties};
pub use grid::{discretize, PipeGrid};
pub use metrics::{detect_crossings, linepack, survival_time, Trajectory};
pub use network::{load_network, Network, Node, NodeKind, Pipe};
pub use scenario::{compose, load_scenario, Scenario};
pub use sim::{simulate, SolverConfig};
pub use state::{PipeField, SystemState};
