//! Simulator for a single-cell fog-assisted IoT network.
//!
//! `K` wireless devices offload their compute tasks to a fog node co-located
//! with the base station. The library models uplink rate, service latency and
//! device energy (with practical circuit-power models), derives the
//! latency-energy Pareto boundary per device via weighted Tchebyshev
//! scalarization, and allocates transmit powers and fog CPU shares across
//! devices with a cooperative Nash-bargaining game solved by block coordinate
//! descent.
//!
//! The crate is organised as:
//!
//! * [`scenario`] — configuration files, seeded scenario sampling, CSV output
//! * [`radio`] — path loss and uplink data rate
//! * [`power`] — circuit-power models and CPU-cycle energy
//! * [`metrics`] — per-device latency/energy evaluation
//! * [`convex`] — small dense convex solver and the quadratic-transform loop
//! * [`device_opt`] — per-device ideal points and Tchebyshev solutions
//! * [`game`] — Nash-bargaining equilibrium and the equal-share baseline
//! * [`oracle`] — brute-force grid searches used for verification
//! * [`sweeps`] — experiment drivers behind the CLI subcommands
//!
//! Monte-Carlo runs, η sweeps and grid scans are data-parallel; they run on
//! rayon when the default `parallel` feature is enabled and fall back to
//! plain iterators without it.

pub mod convex;
pub mod device_opt;
pub mod game;
pub mod metrics;
pub mod oracle;
pub mod parallel;
pub mod power;
pub mod radio;
pub mod scenario;
pub mod sweeps;

pub use device_opt::Eta;
pub use scenario::{Device, NetworkConfig, PowerModelKind, ScenarioSpec};

/// Top-level error type joining the per-module error enums.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
    #[error(transparent)]
    Radio(#[from] radio::RadioError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Convex(#[from] convex::ConvexError),
    #[error(transparent)]
    Game(#[from] game::GameError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
}
