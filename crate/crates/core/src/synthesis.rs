//! Construction of a stabilizing lifted policy whose utilization is within a
//! prescribed gap of the least achievable one.
//!
//! The procedure fixes a service-rate target above the arrival rate, picks an
//! LP floor `eps` for which the constrained LP is close to the hull and
//! monotone below the target, then moves the service rate down toward the
//! arrival rate until the lifted LP policy is certified. Certification is
//! empirical by default (truncated-queue oracle); the closed-form mixing
//! bound can be requested instead.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{mixing_constants, AnchorChoice, ChainError, PolicyY};
use crate::frontier::{frontier, Frontier, FrontierError};
use crate::lp::{policy_from_occupation, solve_lp, LpError};
use crate::model::ServerSpec;
use crate::policy::{classify_stability, lift_policy, PolicyX, Stability};
use crate::sim::{truncated_stationary_adaptive, SimError};

/// Floor values tried for the LP, largest first.
pub const EPS_GRID: [f64; 8] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("gap {0} must be positive")]
    Delta(f64),
    #[error(transparent)]
    Frontier(#[from] FrontierError),
    #[error("no service-rate target within the frontier tolerance")]
    NoTarget,
    #[error("no LP floor on the grid meets the tolerance at service rate {nu_bar}")]
    NoFloor { nu_bar: f64 },
    #[error("gap unachievable analytically: smallest certified gap is {smallest:e}")]
    AnalyticGap { smallest: f64 },
    #[error("no certified policy after {tries} service-rate halvings")]
    NotCertified { tries: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    /// Certify the service rate with the closed-form bound instead of the
    /// oracle.
    pub analytic: bool,
    pub q_max: usize,
    pub tail_tol: f64,
    /// Halvings of the service-rate excess before giving up.
    pub max_halvings: usize,
    /// Interior points of the monotonicity check.
    pub monotone_points: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            analytic: false,
            q_max: 512,
            tail_tol: 1e-10,
            max_halvings: 40,
            monotone_points: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub lambda: f64,
    pub delta: f64,
    pub eps: f64,
    /// Intermediate target from the frontier step.
    pub nu_bar_target: f64,
    /// Service rate of the returned policy's base.
    pub nu_bar: f64,
    pub policy: PolicyX,
    /// LP value at `(eps, nu_bar)`.
    pub predicted_utilization: f64,
    /// Utilization of the lifted policy under the truncated oracle.
    pub oracle_utilization: f64,
    pub infimum_utilization: f64,
    pub q_max: usize,
    pub tail_mass: f64,
    pub stability: Stability,
}

impl SynthesisResult {
    pub fn work_probs(&self) -> &[f64] {
        self.policy.base().work_probs()
    }

    /// Oracle utilization minus the least achievable one.
    pub fn achieved_gap(&self) -> f64 {
        self.oracle_utilization - self.infimum_utilization
    }
}

/// Largest `lambda + (top - lambda) 2^-j`, `j >= 1`, whose frontier value
/// is within `tol` of the value at `lambda`.
fn pick_target(f: &Frontier, lambda: f64, base: f64, tol: f64) -> Option<f64> {
    let top = f.max_rate();
    (1..=60)
        .map(|j| lambda + (top - lambda) * 0.5f64.powi(j))
        .take_while(|&nu| nu > lambda)
        .find(|&nu| f.eval(nu).is_some_and(|v| v <= base + tol))
}

fn lp_value(spec: &ServerSpec, nu: f64, eps: f64) -> Result<f64, LpError> {
    Ok(solve_lp(spec, nu, eps)?.value)
}

fn monotone_below(spec: &ServerSpec, lambda: f64, target: f64, eps: f64, points: usize) -> Result<bool, LpError> {
    let mut prev = f64::NEG_INFINITY;
    for i in 1..=points + 1 {
        let nu = lambda + (target - lambda) * i as f64 / (points + 1) as f64;
        let v = lp_value(spec, nu, eps)?;
        if !v.is_finite() || v < prev - 1e-9 {
            return Ok(false);
        }
        prev = v;
    }
    Ok(true)
}

struct Candidate {
    nu: f64,
    value: f64,
    phi: PolicyY,
}

fn candidate(spec: &ServerSpec, nu: f64, eps: f64) -> Result<Option<Candidate>, LpError> {
    let r = solve_lp(spec, nu, eps)?;
    Ok(r.feasible.then(|| Candidate {
        nu,
        value: r.value,
        phi: policy_from_occupation(&r.measure),
    }))
}

pub fn synthesize(
    spec: &ServerSpec,
    lambda: f64,
    delta: f64,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult, SynthesisError> {
    if !(delta > 0.0) {
        return Err(SynthesisError::Delta(delta));
    }
    let f = frontier(spec);
    let inf = crate::frontier::infimum_from_frontier(&f, lambda)?;
    let third = delta / 3.0;

    let target = pick_target(&f, lambda, inf, third).ok_or(SynthesisError::NoTarget)?;
    let hull_at_target = f.eval(target).expect("target below the maximal rate");
    log::info!("service-rate target {target:.6} (frontier {hull_at_target:.6})");

    let mut eps_idx = EPS_GRID
        .iter()
        .position(|&e| lp_value(spec, target, e).is_ok_and(|v| v <= hull_at_target + third))
        .ok_or(SynthesisError::NoFloor { nu_bar: target })?;
    while !monotone_below(spec, lambda, target, EPS_GRID[eps_idx], opts.monotone_points)? {
        eps_idx += 1;
        if eps_idx == EPS_GRID.len() {
            return Err(SynthesisError::NoFloor { nu_bar: target });
        }
    }
    let eps = EPS_GRID[eps_idx];
    log::info!("LP floor {eps:e}");

    let rate_at = |k: i32| lambda + (target - lambda) * 0.5f64.powi(k);
    let chosen = if opts.analytic {
        let mc = mixing_constants(spec, lambda, eps, &AnchorChoice::WorstCase)?;
        let mut smallest = f64::INFINITY;
        let mut found = None;
        if !mc.degenerate {
            for k in 1..=1074 {
                let nu = rate_at(k);
                if nu <= lambda {
                    break;
                }
                let b = mc.distance_bound(nu, lambda);
                smallest = smallest.min(b);
                if b <= third {
                    found = Some(nu);
                    break;
                }
            }
        }
        let nu = found.ok_or(SynthesisError::AnalyticGap { smallest })?;
        candidate(spec, nu, eps)?.ok_or(SynthesisError::NoFloor { nu_bar: nu })?
    } else {
        let bound = inf + delta;
        let mut accepted = None;
        for k in 1..=opts.max_halvings as i32 {
            let nu = rate_at(k);
            if nu <= lambda {
                break;
            }
            let Some(c) = candidate(spec, nu, eps)? else { continue };
            let theta = lift_policy(&c.phi);
            if classify_stability(spec, lambda, &theta) != Stability::StableIrreducibleAperiodic {
                continue;
            }
            let pi = truncated_stationary_adaptive(spec, lambda, &theta, opts.q_max, opts.tail_tol)?;
            let u = pi.utilization(&theta);
            log::debug!("nu_bar {nu:.6}: oracle utilization {u:.6} vs {bound:.6}");
            if u <= bound {
                accepted = Some(c);
                break;
            }
        }
        accepted.ok_or(SynthesisError::NotCertified { tries: opts.max_halvings })?
    };

    let theta = lift_policy(&chosen.phi);
    let stability = classify_stability(spec, lambda, &theta);
    let pi = truncated_stationary_adaptive(spec, lambda, &theta, opts.q_max, opts.tail_tol)?;
    Ok(SynthesisResult {
        lambda,
        delta,
        eps,
        nu_bar_target: target,
        nu_bar: chosen.nu,
        predicted_utilization: chosen.value,
        oracle_utilization: pi.utilization(&theta),
        infimum_utilization: inf,
        q_max: pi.q_max(),
        tail_mass: pi.tail_mass(),
        stability,
        policy: theta,
    })
}
