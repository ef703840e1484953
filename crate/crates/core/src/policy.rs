//! Policies on the full system and the maps between them and reduced-chain
//! policies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{rates, PolicyY};
use crate::model::{Availability, ServerSpec, ServerState, SystemState};
use crate::sim::TruncatedPmf;

/// Stationary randomized policy on full system states.
///
/// Implementations must return 0 when the queue is empty and 1 when the
/// server is busy.
pub trait XPolicy: Sync {
    fn work_prob(&self, x: &SystemState) -> f64;
}

/// A reduced policy applied while the queue is nonempty; rests otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyX {
    base: PolicyY,
}

impl PolicyX {
    pub fn base(&self) -> &PolicyY {
        &self.base
    }
}

impl XPolicy for PolicyX {
    fn work_prob(&self, x: &SystemState) -> f64 {
        if x.q() == 0 {
            0.0
        } else {
            self.base.work_prob(x.y())
        }
    }
}

pub fn lift_policy(phi: &PolicyY) -> PolicyX {
    PolicyX { base: phi.clone() }
}

/// Work probabilities at available states that depend on the queue length.
/// Row `q - 1` applies at queue length `q`; the last row applies beyond.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueTablePolicy {
    rows: Vec<PolicyY>,
}

impl QueueTablePolicy {
    pub fn new(rows: Vec<PolicyY>) -> Self {
        assert!(!rows.is_empty(), "queue table needs at least one row");
        Self { rows }
    }
}

impl XPolicy for QueueTablePolicy {
    fn work_prob(&self, x: &SystemState) -> f64 {
        if x.q() == 0 {
            return 0.0;
        }
        let row = (x.q() as usize - 1).min(self.rows.len() - 1);
        self.rows[row].work_prob(x.y())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("projection undefined at states without stationary mass: {0:?}")]
    Undefined(Vec<String>),
}

/// Queue-averaged reduced policy: at each available state, the stationary
/// work probability averaged over queue lengths.
pub fn project_policy(
    spec: &ServerSpec,
    theta: &impl XPolicy,
    pi: &TruncatedPmf,
) -> Result<PolicyY, PolicyError> {
    let n_s = spec.n_s();
    let mut work = vec![0.0; n_s];
    let mut mass = vec![0.0; n_s];
    for (x, p) in pi.iter() {
        if x.w() == Availability::Available {
            work[x.s() - 1] += theta.work_prob(&x) * p;
            mass[x.s() - 1] += p;
        }
    }
    let missing: Vec<String> = (1..=n_s)
        .filter(|&s| mass[s - 1] <= 0.0)
        .map(|s| ServerState::available(s).to_string())
        .collect();
    if !missing.is_empty() {
        return Err(PolicyError::Undefined(missing));
    }
    let probs = work.iter().zip(&mass).map(|(w, m)| (w / m).clamp(0.0, 1.0)).collect();
    Ok(PolicyY::new(probs).expect("averages of probabilities"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    StableIrreducibleAperiodic,
    NotGuaranteed,
}

/// Sufficient stability test: the base policy works with positive
/// probability at `(1, Available)` and its service rate exceeds `lambda`.
pub fn classify_stability(spec: &ServerSpec, lambda: f64, theta: &PolicyX) -> Stability {
    let phi = theta.base();
    if !phi.is_positive() {
        return Stability::NotGuaranteed;
    }
    match rates(spec, phi) {
        Ok(r) if r.service > lambda => Stability::StableIrreducibleAperiodic,
        _ => Stability::NotGuaranteed,
    }
}
