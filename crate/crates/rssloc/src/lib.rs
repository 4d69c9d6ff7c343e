//! Cooperative localization from received signal strength (RSS) with an
//! unknown path loss exponent, via belief propagation on a factor graph.
//!
//! Positions of blindfolded nodes (agents) and the shared path loss exponent
//! are treated as random variables. The engine iterates message updates and
//! belief updates: agent position beliefs are particle sets, the path loss
//! exponent belief lives on a fixed grid, and position messages are mixtures
//! of normalized likelihood components. Two belief-update samplers are
//! provided: a baseline importance sampler (quadratic in the particle count)
//! and an auxiliary importance sampler (linear in the particle count).
//!
//! Module map:
//! - [`channel`]: network geometry, log-distance RSS model, likelihoods,
//!   measurement synthesis, analytic likelihood normalizer, file formats.
//! - [`belief`]: particle beliefs, grid beliefs, message types, resampling,
//!   categorical sampling, message-density evaluation, snapshot dumps.
//! - [`sampler`]: sampling from a normalized likelihood via polar variable
//!   transformation, with the importance-corrected and heuristic variants.
//! - [`engine`]: the message-passing engine (BP/SPAWN message rules, IS/AIS
//!   belief updates, sequential and synchronous schedules).
//! - [`estimate`]: point estimates (KDE mode, grid argmax) and error metrics.
//! - [`harness`]: bundled layouts, random networks, Monte Carlo experiments,
//!   parameter sweeps, and the belief-update micro-benchmark.
//! - [`cli`]: the command layer used by the `rssloc` binary.

pub mod belief;
pub mod channel;
pub mod cli;
pub mod engine;
pub mod estimate;
pub mod harness;
pub mod numeric;
pub mod rng;
pub mod sampler;

mod error;

pub use error::Error;

/// Convenience result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Tool version string embedded in output file headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
