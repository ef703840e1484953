//! Simulation of the full queue-plus-server system and an exact stationary
//! oracle for the queue capped at a finite length.

mod hitting;
mod montecarlo;
mod oracle;

use thiserror::Error;

use crate::chain::ChainError;
use crate::model::ModelError;

pub use hitting::{hitting_time_stats, return_time_lower_bound, return_times, HittingStats};
pub use montecarlo::{replication_rng, simulate, Estimate, ReplicationStats, SimConfig, SimResult, TraceRow};
pub use oracle::{
    empty_queue_mass, truncated_stationary, truncated_stationary_adaptive, y_marginal_distance,
    y_marginal_distance_from, TruncatedPmf, TAIL_WARN,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("arrival rate {0} must lie in (0, 1)")]
    ArrivalRate(f64),
    #[error("queue cap {0} is below the minimum of 2")]
    QueueCap(usize),
    #[error("policy must rest on an empty queue and work while busy")]
    InadmissiblePolicy,
    #[error("truncated level system is singular")]
    Singular,
    #[error("tail mass {tail:e} at queue cap {q_max} stays above tolerance")]
    TailTooHeavy { q_max: usize, tail: f64 },
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
