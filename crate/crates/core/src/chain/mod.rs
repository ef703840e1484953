//! Exact analysis of the reduced server chain under a stationary policy.

mod classes;
mod dagger;
mod mixing;
mod potential;
mod stationary;

pub use classes::{communicating_classes, ClassPartition, CommunicatingClass};
pub use dagger::{decompose_dagger_policy, DaggerDecomposition, Scale};
pub use mixing::{mixing_constants, AnchorChoice, MixingConstants};
pub use potential::{potential_function, PotentialFunction};
pub use stationary::{stationary_pmf, StationaryPmf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ybar_matrix, Availability, ModelError, ServerSpec, ServerState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("stationary PMF is not unique: {} recurrent classes {:?}", .recurrent.len(), .recurrent)]
    NonUnique { recurrent: Vec<Vec<usize>> },
    #[error("numerical failure: {0}")]
    Numerical(&'static str),
    #[error("threshold {tau} outside 1..={max}")]
    ThresholdOutOfRange { tau: usize, max: usize },
    #[error("work probability {value} at s={s} outside [0, 1]")]
    WorkProb { s: usize, value: f64 },
    #[error("policy covers {got} activity states, spec has {expected}")]
    PolicySize { got: usize, expected: usize },
    #[error("policy randomizes at more than one available state: {0:?}")]
    NotDagger(Vec<usize>),
    #[error("arrival probability {0} outside (0, 1)")]
    ArrivalRate(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Stationary randomized policy on reduced states. Only the work
/// probabilities at available states are stored; busy states always work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PolicyY {
    work_prob: Vec<f64>,
}

impl TryFrom<Vec<f64>> for PolicyY {
    type Error = ChainError;
    fn try_from(v: Vec<f64>) -> Result<Self, ChainError> {
        PolicyY::new(v)
    }
}

impl From<PolicyY> for Vec<f64> {
    fn from(p: PolicyY) -> Self {
        p.work_prob
    }
}

impl PolicyY {
    /// `work_prob[i]` is the probability of working at `(i + 1, Available)`.
    pub fn new(work_prob: Vec<f64>) -> Result<Self, ChainError> {
        for (i, &p) in work_prob.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(ChainError::WorkProb { s: i + 1, value: p });
            }
        }
        Ok(Self { work_prob })
    }

    /// Works when available iff `s < tau`.
    pub fn threshold(n_s: usize, tau: usize) -> Result<Self, ChainError> {
        if tau == 0 || tau > n_s + 1 {
            return Err(ChainError::ThresholdOutOfRange { tau, max: n_s + 1 });
        }
        Ok(Self {
            work_prob: (1..=n_s).map(|s| if s >= tau { 0.0 } else { 1.0 }).collect(),
        })
    }

    pub fn always_work(n_s: usize) -> Self {
        Self {
            work_prob: vec![1.0; n_s],
        }
    }

    pub fn n_s(&self) -> usize {
        self.work_prob.len()
    }

    pub fn work_probs(&self) -> &[f64] {
        &self.work_prob
    }

    /// Work probability at `(s, Available)`.
    pub fn at_available(&self, s: usize) -> f64 {
        self.work_prob[s - 1]
    }

    pub fn work_prob(&self, y: ServerState) -> f64 {
        match y.w {
            Availability::Busy => 1.0,
            Availability::Available => self.work_prob[y.s - 1],
        }
    }

    /// Positive probability of working at `(1, Available)`.
    pub fn is_positive(&self) -> bool {
        self.work_prob[0] > 0.0
    }

    pub fn is_eps_positive(&self, eps: f64) -> bool {
        self.work_prob[0] >= eps
    }

    /// Available states with a work probability strictly inside (0, 1).
    pub fn randomizing_states(&self) -> Vec<usize> {
        (1..=self.n_s())
            .filter(|&s| {
                let p = self.at_available(s);
                p > 0.0 && p < 1.0
            })
            .collect()
    }

    fn check_size(&self, spec: &ServerSpec) -> Result<(), ChainError> {
        if self.n_s() != spec.n_s() {
            return Err(ChainError::PolicySize {
                got: self.n_s(),
                expected: spec.n_s(),
            });
        }
        Ok(())
    }
}

pub fn threshold_policy(n_s: usize, tau: usize) -> Result<PolicyY, ChainError> {
    PolicyY::threshold(n_s, tau)
}

/// Service and utilization rates of one policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub service: f64,
    pub utilization: f64,
}

impl Rates {
    pub const ZERO: Rates = Rates {
        service: 0.0,
        utilization: 0.0,
    };
}

pub fn reduced_pmf(spec: &ServerSpec, phi: &PolicyY) -> Result<StationaryPmf, ChainError> {
    phi.check_size(spec)?;
    stationary_pmf(&ybar_matrix(spec, phi))
}

pub fn rates_from_pmf(spec: &ServerSpec, phi: &PolicyY, pi: &StationaryPmf) -> Rates {
    let mut rates = Rates::ZERO;
    for y in spec.states() {
        let mass = pi.prob(spec.index(y)) * phi.work_prob(y);
        rates.service += spec.mu(y.s) * mass;
        rates.utilization += mass;
    }
    rates
}

pub fn rates(spec: &ServerSpec, phi: &PolicyY) -> Result<Rates, ChainError> {
    let pi = reduced_pmf(spec, phi)?;
    Ok(rates_from_pmf(spec, phi, &pi))
}

pub fn service_rate(spec: &ServerSpec, phi: &PolicyY) -> Result<f64, ChainError> {
    rates(spec, phi).map(|r| r.service)
}

pub fn utilization_rate_y(spec: &ServerSpec, phi: &PolicyY) -> Result<f64, ChainError> {
    rates(spec, phi).map(|r| r.utilization)
}

/// Rates of every threshold policy; entry `tau - 1` holds threshold `tau`.
pub fn threshold_rates(spec: &ServerSpec) -> Vec<Rates> {
    (1..=spec.n_s() + 1)
        .map(|tau| {
            let phi = PolicyY::threshold(spec.n_s(), tau).expect("tau in range");
            rates(spec, &phi).expect("threshold chains have one recurrent class")
        })
        .collect()
}

/// Largest threshold service rate and the smallest threshold attaining it.
pub fn max_service_rate(spec: &ServerSpec) -> (f64, usize) {
    best_threshold(&threshold_rates(spec))
}

pub(crate) fn best_threshold(table: &[Rates]) -> (f64, usize) {
    let mut best = (0.0, 1);
    for (i, r) in table.iter().enumerate().skip(1) {
        if r.service > best.0 {
            best = (r.service, i + 1);
        }
    }
    best
}
