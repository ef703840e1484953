use serde::Serialize;

use super::{potential_function, ChainError, PolicyY};
use crate::model::{ybar_matrix, ServerSpec, ServerState};

/// How the activity level `s*` entering `beta` is chosen.
#[derive(Debug, Clone)]
pub enum AnchorChoice {
    Given(usize),
    /// Argmax over available states of the service-reward potential of the
    /// given policy; ties go to the smaller level.
    PotentialArgmax(PolicyY),
    /// The level with the largest down probability, giving the smallest
    /// `beta` over all anchors.
    WorstCase,
}

/// Closed-form mixing and empty-queue constants for policies whose work
/// probability at `(1, Available)` is at least `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingConstants {
    pub beta_tilde: f64,
    pub alpha_tilde: f64,
    pub k_eps: f64,
    pub sigma_eps: f64,
    /// `1 - sigma_eps`, computed without cancellation.
    pub one_minus_sigma: f64,
    pub eta_eps: f64,
    pub beta: f64,
    pub s_star: usize,
    /// Set when `eps = 0` or a product underflows; the bounds are void then.
    pub degenerate: bool,
}

impl MixingConstants {
    /// Bound on the L1 distance between the reduced stationary PMF and the
    /// nonempty-queue marginal of the lifted chain at service rate `nu_bar`.
    pub fn distance_bound(&self, nu_bar: f64, lambda: f64) -> f64 {
        let gap = nu_bar - lambda;
        (self.beta + self.eta_eps) / self.beta * gap.sqrt() + 3.0 / self.beta * gap
    }

    /// Bound on the stationary empty-queue mass at service rate `nu_bar`.
    pub fn empty_queue_bound(&self, nu_bar: f64, lambda: f64) -> f64 {
        (nu_bar - lambda) / self.beta
    }

    /// `2 K sigma^r`, the contraction bound after `r >= 2 n_s` steps.
    pub fn contraction_bound(&self, r: usize) -> f64 {
        let log_sigma = (-self.one_minus_sigma).ln_1p();
        2.0 * self.k_eps * (r as f64 * log_sigma).exp()
    }
}

fn resolve_anchor(spec: &ServerSpec, anchor: &AnchorChoice) -> Result<usize, ChainError> {
    match anchor {
        AnchorChoice::Given(s) => {
            spec.check_activity(*s)?;
            Ok(*s)
        }
        AnchorChoice::WorstCase => {
            let mut best = 1;
            for s in 2..=spec.n_s() {
                if spec.rho_down(s) > spec.rho_down(best) {
                    best = s;
                }
            }
            Ok(best)
        }
        AnchorChoice::PotentialArgmax(phi) => {
            let p = ybar_matrix(spec, phi);
            let pf = potential_function(&p, |from, _| {
                let y = spec.state_at(from);
                spec.mu(y.s) * phi.work_prob(y)
            })?;
            let mut best = 1;
            for s in 2..=spec.n_s() {
                if pf.h[spec.index(ServerState::available(s))]
                    > pf.h[spec.index(ServerState::available(best))]
                {
                    best = s;
                }
            }
            Ok(best)
        }
    }
}

pub fn mixing_constants(
    spec: &ServerSpec,
    lambda: f64,
    eps: f64,
    anchor: &AnchorChoice,
) -> Result<MixingConstants, ChainError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(ChainError::ArrivalRate(lambda));
    }
    let n_s = spec.n_s();
    let two_n = (2 * n_s) as i32;
    let s_star = resolve_anchor(spec, anchor)?;

    let min_busy = (1..=n_s).map(|s| 1.0 - spec.mu(s)).fold(f64::INFINITY, f64::min);
    let ladder: f64 = (1..n_s).map(|i| spec.rho_down(i + 1) * spec.rho_up(i)).product();
    let min_stay = (1..=n_s)
        .map(|i| (1.0 - spec.rho_up(i)) * (1.0 - spec.rho_down(i)))
        .fold(f64::INFINITY, f64::min);
    let beta_tilde = eps
        * lambda
        * (1.0 - lambda).powi(two_n)
        * min_busy.powi(two_n)
        * spec.min_mu()
        * ladder
        * min_stay.powi(two_n);

    let climb: f64 = (1..n_s)
        .map(|s| (1.0 - spec.mu(s)) * spec.rho_down(s + 1) * spec.rho_up(s))
        .product();
    let alpha_tilde = eps * (1.0 - spec.mu(n_s)).powi(two_n) * climb;

    let log_sigma = (-alpha_tilde).ln_1p() / f64::from(two_n);
    let sigma_eps = log_sigma.exp();
    let one_minus_sigma = -log_sigma.exp_m1();
    let k_eps = 1.0 / (1.0 - alpha_tilde);
    let eta_eps = 2.0 * f64::from(two_n)
        + 2.0 * k_eps * (f64::from(two_n + 1) * log_sigma).exp() / one_minus_sigma;
    let beta = lambda * (1.0 - spec.rho_down(s_star)) * beta_tilde;
    let degenerate = !(beta_tilde > 0.0 && alpha_tilde > 0.0 && one_minus_sigma > 0.0);
    Ok(MixingConstants {
        beta_tilde,
        alpha_tilde,
        k_eps,
        sigma_eps,
        one_minus_sigma,
        eta_eps,
        beta,
        s_star,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, RowDVector};
    use proptest::prelude::*;

    #[test]
    fn zero_eps_is_degenerate() {
        let c = mixing_constants(&ServerSpec::reference(), 0.15, 0.0, &AnchorChoice::WorstCase).unwrap();
        assert_eq!(c.beta_tilde, 0.0);
        assert_eq!(c.alpha_tilde, 0.0);
        assert!(c.degenerate);
    }

    #[test]
    fn example_values_by_direct_product() {
        let spec = ServerSpec::reference();
        let c = mixing_constants(&spec, 0.15, 0.1, &AnchorChoice::Given(3)).unwrap();
        // Products written out term by term.
        let ladder = (0.05 * 0.2) * (0.1 * 0.15) * (0.15 * 0.1) * (0.2 * 0.05);
        let beta_tilde = 0.1 * 0.15 * 0.85f64.powi(10) * 0.5f64.powi(10) * 0.01 * ladder * 0.8f64.powi(10);
        let climb = (0.99 * 0.05 * 0.2) * (0.5 * 0.1 * 0.15) * (0.7 * 0.15 * 0.1) * (0.5 * 0.2 * 0.05);
        let alpha_tilde = 0.1 * 0.95f64.powi(10) * climb;
        assert_relative_eq!(c.beta_tilde, beta_tilde, max_relative = 1e-12);
        assert_relative_eq!(c.alpha_tilde, alpha_tilde, max_relative = 1e-12);
        assert_relative_eq!(c.beta, 0.15 * 0.9 * beta_tilde, max_relative = 1e-12);
        assert_relative_eq!(c.k_eps, 1.0 / (1.0 - alpha_tilde), max_relative = 1e-15);
        assert!(c.sigma_eps < 1.0);
        assert!(c.eta_eps >= 20.0);
        assert!(!c.degenerate);
        assert!(c.beta > 0.0 && c.beta_tilde > 0.0 && c.alpha_tilde > 0.0);
    }

    #[test]
    fn anchors() {
        let spec = ServerSpec::reference();
        let worst = mixing_constants(&spec, 0.15, 0.1, &AnchorChoice::WorstCase).unwrap();
        assert_eq!(worst.s_star, 5);
        for s in 1..=5 {
            let c = mixing_constants(&spec, 0.15, 0.1, &AnchorChoice::Given(s)).unwrap();
            assert!(worst.beta <= c.beta);
        }
        let phi = PolicyY::threshold(5, 5).unwrap();
        let c = mixing_constants(&spec, 0.15, 0.1, &AnchorChoice::PotentialArgmax(phi)).unwrap();
        assert!((1..=5).contains(&c.s_star));
        assert!(mixing_constants(&spec, 0.15, 0.1, &AnchorChoice::Given(6)).is_err());
    }

    fn l1(v: &RowDVector<f64>) -> f64 {
        v.iter().map(|x| x.abs()).sum()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn contraction_bound_holds(
            eps in 0.05f64..=1.0,
            tail in proptest::collection::vec(0.0f64..=1.0, 4),
            p_raw in proptest::collection::vec(0.0f64..1.0, 10),
            q_raw in proptest::collection::vec(0.0f64..1.0, 10),
            extra in 0usize..40,
        ) {
            let spec = ServerSpec::reference();
            let mut w = vec![eps];
            w.extend(tail);
            let phi = PolicyY::new(w).unwrap();
            let c = mixing_constants(&spec, 0.15, eps, &AnchorChoice::WorstCase).unwrap();
            let m: DMatrix<f64> = ybar_matrix(&spec, &phi);
            let norm = |v: Vec<f64>| {
                let s: f64 = v.iter().sum::<f64>() + 1e-12;
                RowDVector::from_iterator(10, v.into_iter().map(|x| (x + 1e-12) / s))
            };
            let mut d = norm(p_raw) - norm(q_raw);
            let r = 10 + extra;
            for _ in 0..r {
                d = &d * &m;
            }
            prop_assert!(l1(&d) <= c.contraction_bound(r) + 1e-12);
        }
    }
}
