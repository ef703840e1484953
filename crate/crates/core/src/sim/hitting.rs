use rand::Rng;
use serde::{Deserialize, Serialize};

use super::montecarlo::{replication_rng, step};
use super::{SimConfig, SimError};
use crate::model::{ServerSpec, SystemState};
use crate::policy::XPolicy;

/// Summary of observed return times to a target state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingStats {
    /// Completed returns across all replications.
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: u64,
    pub max: u64,
    pub median: u64,
    /// Set when fewer than two returns were seen in some replication; the
    /// estimate then ignores the unfinished excursion and is biased low.
    pub censored: bool,
}

/// Lengths of completed excursions between successive visits to `target`,
/// collected along one trajectory of `steps` transitions.
pub fn return_times<S: PartialEq + Copy, R: Rng>(
    start: S,
    target: S,
    steps: u64,
    rng: &mut R,
    mut next: impl FnMut(&S, &mut R) -> S,
) -> Vec<u64> {
    let mut out = Vec::new();
    let mut last = (start == target).then_some(0u64);
    let mut x = start;
    for k in 1..=steps {
        x = next(&x, rng);
        if x == target {
            if let Some(t) = last {
                out.push(k - t);
            }
            last = Some(k);
        }
    }
    out
}

fn summarize(mut times: Vec<u64>, censored: bool) -> HittingStats {
    times.sort_unstable();
    let n = times.len();
    if n == 0 {
        return HittingStats {
            count: 0,
            mean: f64::NAN,
            std_dev: f64::NAN,
            min: 0,
            max: 0,
            median: 0,
            censored: true,
        };
    }
    let mean = times.iter().map(|&t| t as f64).sum::<f64>() / n as f64;
    let var = if n > 1 {
        times.iter().map(|&t| (t as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    HittingStats {
        count: n,
        mean,
        std_dev: var.sqrt(),
        min: times[0],
        max: times[n - 1],
        median: times[n / 2],
        censored,
    }
}

/// Empirical return times to `target` under `theta`. Burn-in is not
/// applied: excursions are regenerative, so the start only affects the
/// first partial one, which is dropped.
pub fn hitting_time_stats(
    spec: &ServerSpec,
    lambda: f64,
    theta: &impl XPolicy,
    target: SystemState,
    cfg: &SimConfig,
) -> Result<HittingStats, SimError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(SimError::ArrivalRate(lambda));
    }
    if cfg.replications == 0 || cfg.horizon == 0 {
        return Err(SimError::Config("need a positive horizon and replication count".into()));
    }
    spec.check_activity(target.s())?;
    let mut all = Vec::new();
    let mut censored = false;
    for r in 0..cfg.replications {
        let mut rng = replication_rng(cfg.seed, r);
        let times = return_times(cfg.initial_state, target, cfg.horizon, &mut rng, |x, rng| {
            step(spec, lambda, theta, x, rng).next
        });
        censored |= times.len() < 2;
        all.extend(times);
    }
    Ok(summarize(all, censored))
}

/// Lower bound on the mean return time to an empty queue at the anchor
/// activity state, for a server whose reduced service rate is `nu` and
/// which leaves the anchor state downward with probability `rho_down`.
pub fn return_time_lower_bound(rho_down: f64, nu: f64, lambda: f64) -> f64 {
    (1.0 - rho_down) * (1.0 + nu - lambda) / (nu / lambda - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::chain::PolicyY;
    use crate::model::ServerState;
    use crate::policy::lift_policy;
    use crate::sim::truncated_stationary_adaptive;

    #[test]
    fn single_state_chain_returns_every_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = return_times(0u8, 0u8, 50, &mut rng, |_, _| 0);
        assert_eq!(t, vec![1; 50]);
        let s = summarize(t, false);
        assert_eq!((s.mean, s.min, s.max), (1.0, 1, 1));
    }

    #[test]
    fn cycle_of_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = return_times(1u8, 0u8, 10, &mut rng, |x, _| (x + 1) % 3);
        // Visits at steps 2, 5, 8.
        assert_eq!(t, vec![3, 3]);
    }

    #[test]
    fn kac_relation_against_oracle() {
        let spec = ServerSpec::reference();
        let lambda = 0.15;
        let theta = lift_policy(&PolicyY::threshold(5, 5).unwrap());
        let pi = truncated_stationary_adaptive(&spec, lambda, &theta, 512, 1e-10).unwrap();
        let target = SystemState::new(ServerState::available(4), 0).unwrap();
        let expected = 1.0 / pi.prob(&target);
        let mut cfg = SimConfig::new(400_000, 4, 99);
        cfg.initial_state = target;
        let st = hitting_time_stats(&spec, lambda, &theta, target, &cfg).unwrap();
        assert!(!st.censored);
        assert!((st.mean / expected - 1.0).abs() < 0.05, "mean {} vs {}", st.mean, expected);
    }

    #[test]
    fn lower_bound_holds() {
        let spec = ServerSpec::reference();
        let lambda = 0.15;
        let phi = PolicyY::threshold(5, 5).unwrap();
        let theta = lift_policy(&phi);
        for s_star in 1..=5 {
            let target = SystemState::new(ServerState::available(s_star), 0).unwrap();
            let mut cfg = SimConfig::new(200_000, 2, 5);
            cfg.initial_state = target;
            let st = hitting_time_stats(&spec, lambda, &theta, target, &cfg).unwrap();
            let bound = return_time_lower_bound(spec.rho_down(s_star), 0.3, lambda);
            assert!(st.mean >= bound, "s*={s_star}: {} < {}", st.mean, bound);
        }
    }

    #[test]
    fn unreachable_target_is_censored() {
        let spec = ServerSpec::reference();
        let theta = lift_policy(&PolicyY::threshold(5, 5).unwrap());
        let target = SystemState::new(ServerState::available(5), 0).unwrap();
        let st = hitting_time_stats(&spec, 0.15, &theta, target, &SimConfig::new(10, 1, 1)).unwrap();
        assert!(st.censored);
    }
}
