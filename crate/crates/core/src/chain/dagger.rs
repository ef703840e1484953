use serde::Serialize;

use super::{reduced_pmf, ChainError, PolicyY, Rates};
use crate::model::{ServerSpec, ServerState};

/// Overall scale applied to the threshold mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Scale {
    Fixed(f64),
    /// Any scale in [0, 1] is attainable, depending on the initial state.
    Free,
}

/// Rates of a policy written as `scale * ((1 - alpha) r(tau1) + alpha r(tau2))`
/// where `r(tau)` are the threshold rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DaggerDecomposition {
    pub tau1: usize,
    pub tau2: usize,
    pub alpha: f64,
    pub scale: Scale,
}

impl DaggerDecomposition {
    fn pure(tau: usize) -> Self {
        Self {
            tau1: tau,
            tau2: tau,
            alpha: 0.0,
            scale: Scale::Fixed(1.0),
        }
    }

    /// Mixture rates from a threshold table (`table[tau - 1]`). For a free
    /// scale this is the endpoint at scale 1.
    pub fn rates(&self, table: &[Rates]) -> Rates {
        let (r1, r2) = (table[self.tau1 - 1], table[self.tau2 - 1]);
        let b = match self.scale {
            Scale::Fixed(b) => b,
            Scale::Free => 1.0,
        };
        Rates {
            service: b * ((1.0 - self.alpha) * r1.service + self.alpha * r2.service),
            utilization: b * ((1.0 - self.alpha) * r1.utilization + self.alpha * r2.utilization),
        }
    }

    /// The same mixture applied to the threshold stationary PMFs. Only
    /// meaningful at scale 1, where the mixed policy has a unique PMF.
    pub fn mixture_pmf(&self, spec: &ServerSpec) -> Result<Vec<f64>, ChainError> {
        let n_s = spec.n_s();
        let p1 = reduced_pmf(spec, &PolicyY::threshold(n_s, self.tau1)?)?;
        let p2 = reduced_pmf(spec, &PolicyY::threshold(n_s, self.tau2)?)?;
        Ok(p1
            .probs()
            .iter()
            .zip(p2.probs())
            .map(|(a, b)| (1.0 - self.alpha) * a + self.alpha * b)
            .collect())
    }
}

/// Highest level with work probability exactly one at the available flag,
/// or 0 if there is none.
fn top_working_level(phi: &PolicyY) -> usize {
    (1..=phi.n_s()).rev().find(|&s| phi.at_available(s) == 1.0).unwrap_or(0)
}

fn available_mass(spec: &ServerSpec, tau: usize, s: usize) -> Result<f64, ChainError> {
    let pi = reduced_pmf(spec, &PolicyY::threshold(spec.n_s(), tau)?)?;
    Ok(pi.prob(spec.index(ServerState::available(s))))
}

/// Mixture weight of the upper threshold so that the mixed chain randomizes
/// with probability `gamma` at `(s, Available)`.
fn mixture_weight(gamma: f64, lower_mass: f64, upper_mass: f64) -> f64 {
    gamma * lower_mass / (gamma * lower_mass + (1.0 - gamma) * upper_mass)
}

/// Case where `(1, Available)` always works.
fn decompose_working_bottom(spec: &ServerSpec, phi: &PolicyY) -> Result<DaggerDecomposition, ChainError> {
    let top = top_working_level(phi);
    match phi.randomizing_states().first() {
        Some(&s) if s > top => {
            let (tau1, tau2) = (top + 1, s + 1);
            let gamma = phi.at_available(s);
            let alpha = mixture_weight(gamma, available_mass(spec, tau1, s)?, available_mass(spec, tau2, s)?);
            Ok(DaggerDecomposition {
                tau1,
                tau2,
                alpha,
                scale: Scale::Fixed(1.0),
            })
        }
        // Levels below `top` are transient, so the randomization is invisible.
        _ => Ok(DaggerDecomposition::pure(top + 1)),
    }
}

/// Writes the rates of a policy that randomizes at no more than one available
/// level as a scaled mixture of two threshold policies.
pub fn decompose_dagger_policy(spec: &ServerSpec, phi: &PolicyY) -> Result<DaggerDecomposition, ChainError> {
    if phi.n_s() != spec.n_s() {
        return Err(ChainError::PolicySize {
            got: phi.n_s(),
            expected: spec.n_s(),
        });
    }
    let randomizing = phi.randomizing_states();
    if randomizing.len() > 1 {
        return Err(ChainError::NotDagger(randomizing));
    }
    let bottom = phi.at_available(1);
    let top = top_working_level(phi);
    if bottom == 1.0 {
        decompose_working_bottom(spec, phi)
    } else if bottom > 0.0 {
        if top > 0 {
            return Ok(DaggerDecomposition::pure(top + 1));
        }
        // Mix "always rest" (all mass on (1, A)) with threshold 2.
        let alpha = mixture_weight(bottom, 1.0, available_mass(spec, 2, 1)?);
        Ok(DaggerDecomposition {
            tau1: 1,
            tau2: 2,
            alpha,
            scale: Scale::Fixed(1.0),
        })
    } else if top == 0 {
        Ok(DaggerDecomposition::pure(1))
    } else {
        let mut lifted = phi.work_probs().to_vec();
        lifted[0] = 1.0;
        let d = decompose_working_bottom(spec, &PolicyY::new(lifted)?)?;
        Ok(DaggerDecomposition {
            scale: Scale::Free,
            ..d
        })
    }
}
