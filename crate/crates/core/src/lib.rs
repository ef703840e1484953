//! Utilization-rate minimization for a single-server queue whose service
//! probability depends on an activity level that rises while working and
//! falls while resting.
//!
//! Modules, bottom-up:
//! - [`model`]: the problem instance and exact one-step kernels.
//! - [`chain`]: stationary analysis of the server-only chain.
//! - [`lp`] and [`frontier`]: the occupation-measure LP and the minimal
//!   utilization as a function of the required service rate.
//! - [`policy`] and [`synthesis`]: policies for the full system and the
//!   construction of stabilizing near-optimal ones.
//! - [`sim`]: Monte-Carlo simulation and a truncated-queue exact oracle.
//! - [`verify`]: the reproduction suite for the reference instance.

pub mod chain;
pub mod config;
pub mod export;
pub mod frontier;
pub mod lp;
pub mod model;
pub mod policy;
pub mod sim;
pub mod simplex;
pub mod synthesis;
pub mod verify;

pub use chain::{PolicyY, Rates};
pub use config::ConfigError;
pub use model::{Action, Availability, ServerSpec, ServerState, SystemState};
