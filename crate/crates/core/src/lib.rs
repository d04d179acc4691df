//! Surge dynamics in a two-zone ride-sharing market with riders who may walk
//! out of the surge zone.
//!
//! - [`dynamics`]: the deterministic fluid model, convergence windows and
//!   surge classification.
//! - [`stochastic`]: the same recursion under Poisson arrivals.
//! - [`market`]: the agent-based market with logit drivers and priced riders.
//! - [`analysis`]: fitting, heatmaps, sweeps and bound audits.
//! - [`harness`]: scenario files, runs and serialized artifacts.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod market;
pub mod sampling;
pub mod stochastic;

pub use error::{ParamError, SimError};
