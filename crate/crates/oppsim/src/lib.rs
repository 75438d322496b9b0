//! Monte Carlo simulator and analytics toolkit for dense wireless ad hoc
//! networks. Implements an opportunistic multi-hop routing protocol and a
//! non-opportunistic baseline over a TDMA cell schedule, calibrates transmit
//! power so that the received signal and interference powers sit at a unit
//! operating point, and compares the measured power--delay--throughput
//! trade-off against closed-form scaling laws with fitted constants.

pub mod analytics;
pub mod channel;
pub mod config;
pub mod error;
pub mod experiment;
pub mod rng;
pub mod routing;
pub mod tdma;
pub mod topology;

pub use error::SimError;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, SimError>;
