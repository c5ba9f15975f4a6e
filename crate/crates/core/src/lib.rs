//! Agent-space distances, exact oracles on finite decision processes,
//! novelty-driven exploration and an evolution-strategies optimizer.
//!
//! Everything random takes an explicit seed; see [`rng::derive_seed`].

pub mod agents;
pub mod config;
pub mod distances;
pub mod error;
pub mod exploration;
pub mod io;
pub mod maze;
pub mod metrics;
pub mod optimizer;
pub mod oracle;
pub mod process;
pub mod rng;
pub mod verify;

pub use agents::{OutputFunction, Policy, StochasticAgent};
pub use distances::{ActionMetric, DistanceConfig, LocalDistanceEstimate, WeightedStateSet};
pub use error::{Error, Result};
pub use process::{DecisionProcess, PrimePath, RewardSpec, State, TruncatedPath};
