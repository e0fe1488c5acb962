//! Sensor placement and update-rate planning for underwater acoustic sensor
//! networks.
//!
//! The crate models the acoustic channel, the probability that woken sensors
//! detect an event, the age-of-information violation of an M/M/1 update
//! queue, and the Bayesian-optimization loop that tunes sensor count,
//! spacing and update rate against those models. `simkit` holds the
//! simulators used to check the analytic pieces.

pub mod acquisition;
pub mod aoi;
pub mod channel;
pub mod error;
pub mod optimizer;
pub mod sensing;
pub mod simkit;
pub mod surrogate;

pub use error::{Error, Result};
