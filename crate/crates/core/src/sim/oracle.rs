use nalgebra::{DMatrix, DVector};

use super::SimError;
use crate::chain::{stationary_pmf, PolicyY, StationaryPmf};
use crate::model::{x_kernel, Action, Availability, ServerSpec, ServerState, SystemState};
use crate::policy::{lift_policy, XPolicy};

/// Tail mass above which a truncation is flagged as too coarse.
pub const TAIL_WARN: f64 = 1e-6;

/// Stationary PMF of the full system with the queue capped at `q_max`.
/// Arrivals that would exceed the cap are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedPmf {
    n_s: usize,
    q_max: usize,
    /// Level 0 holds `(s, A, 0)` for each s; higher levels use the reduced
    /// state order.
    levels: Vec<Vec<f64>>,
    tail_mass: f64,
}

impl TruncatedPmf {
    pub fn q_max(&self) -> usize {
        self.q_max
    }

    /// Mass at the cap, the truncation-quality estimate.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn tail_warning(&self) -> bool {
        self.tail_mass > TAIL_WARN
    }

    fn state_at(&self, q: usize, i: usize) -> SystemState {
        // Level 0 only holds available states, so `i < n_s` there too.
        let y = if i < self.n_s {
            ServerState::available(i + 1)
        } else {
            ServerState::busy(i - self.n_s + 1)
        };
        SystemState::new(y, q as u64).expect("valid by construction")
    }

    pub fn prob(&self, x: &SystemState) -> f64 {
        let q = x.q() as usize;
        if q > self.q_max || x.s() == 0 || x.s() > self.n_s {
            return 0.0;
        }
        let i = match x.w() {
            Availability::Available => x.s() - 1,
            Availability::Busy => self.n_s + x.s() - 1,
        };
        self.levels[q][i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (SystemState, f64)> + '_ {
        self.levels
            .iter()
            .enumerate()
            .flat_map(move |(q, lv)| lv.iter().enumerate().map(move |(i, &p)| (self.state_at(q, i), p)))
    }

    pub fn total(&self) -> f64 {
        self.levels.iter().flatten().sum()
    }

    pub fn utilization(&self, theta: &impl XPolicy) -> f64 {
        self.iter().map(|(x, p)| p * theta.work_prob(&x)).sum()
    }

    pub fn service_rate(&self, spec: &ServerSpec, theta: &impl XPolicy) -> f64 {
        self.iter().map(|(x, p)| p * theta.work_prob(&x) * spec.mu(x.s())).sum()
    }

    pub fn queue_mean(&self) -> f64 {
        self.levels
            .iter()
            .enumerate()
            .map(|(q, lv)| q as f64 * lv.iter().sum::<f64>())
            .sum()
    }

    /// Mass of the empty-queue states.
    pub fn empty_queue_mass(&self) -> f64 {
        self.levels[0].iter().sum()
    }

    /// Mass of each reduced state with a nonempty queue, in reduced order.
    pub fn nonempty_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; 2 * self.n_s];
        for lv in &self.levels[1..] {
            for (i, p) in lv.iter().enumerate() {
                m[i] += p;
            }
        }
        m
    }

    /// Max-norm balance residual under the blocked kernel.
    pub fn balance_residual(&self, spec: &ServerSpec, lambda: f64, theta: &impl XPolicy) -> f64 {
        let mut flow: Vec<Vec<f64>> = self.levels.iter().map(|lv| vec![0.0; lv.len()]).collect();
        for (x, p) in self.iter() {
            for (next, m) in blocked_kernel(spec, lambda, self.q_max, theta, &x).iter() {
                let q = next.q() as usize;
                let i = match next.w() {
                    Availability::Available => next.s() - 1,
                    Availability::Busy => self.n_s + next.s() - 1,
                };
                flow[q][i] += p * m;
            }
        }
        flow.iter()
            .flatten()
            .zip(self.levels.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn blocked_kernel(
    spec: &ServerSpec,
    lambda: f64,
    q_max: usize,
    theta: &impl XPolicy,
    x: &SystemState,
) -> crate::model::Pmf<SystemState> {
    let arrival = if x.q() as usize >= q_max { 0.0 } else { lambda };
    let work = theta.work_prob(x);
    let mut out = crate::model::Pmf::new();
    for (a, weight) in [(Action::Work, work), (Action::Rest, 1.0 - work)] {
        if weight > 0.0 {
            for (next, m) in x_kernel(spec, arrival, x, a).iter() {
                out.add(next, weight * m);
            }
        }
    }
    out
}

fn check_policy(spec: &ServerSpec, theta: &impl XPolicy) -> Result<(), SimError> {
    for s in 1..=spec.n_s() {
        let empty = SystemState::new(ServerState::available(s), 0).expect("valid");
        let busy = SystemState::new(ServerState::busy(s), 1).expect("valid");
        if theta.work_prob(&empty) != 0.0 || theta.work_prob(&busy) != 1.0 {
            return Err(SimError::InadmissiblePolicy);
        }
    }
    Ok(())
}

/// Exact stationary PMF of the capped chain by eliminating levels from the
/// top down and then sweeping back up from level 0. Warns when the tail
/// mass exceeds [`TAIL_WARN`].
pub fn truncated_stationary(
    spec: &ServerSpec,
    lambda: f64,
    theta: &impl XPolicy,
    q_max: usize,
) -> Result<TruncatedPmf, SimError> {
    let pmf = solve_capped(spec, lambda, theta, q_max)?;
    if pmf.tail_warning() {
        log::warn!("truncated PMF keeps {:e} mass at q_max = {q_max}; increase q_max", pmf.tail_mass);
    }
    Ok(pmf)
}

fn solve_capped(
    spec: &ServerSpec,
    lambda: f64,
    theta: &impl XPolicy,
    q_max: usize,
) -> Result<TruncatedPmf, SimError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(SimError::ArrivalRate(lambda));
    }
    if q_max < 2 {
        return Err(SimError::QueueCap(q_max));
    }
    check_policy(spec, theta)?;
    let n_s = spec.n_s();
    let dim = |q: usize| if q == 0 { n_s } else { 2 * n_s };
    let local = |x: &SystemState| match x.w() {
        Availability::Available => x.s() - 1,
        Availability::Busy => n_s + x.s() - 1,
    };

    // Blocks of the level-q rows: (same level, up one, down one).
    let blocks = |q: usize| {
        let mut same = DMatrix::zeros(dim(q), dim(q));
        let mut up = DMatrix::<f64>::zeros(dim(q), dim(q + 1));
        let mut down = if q > 0 { DMatrix::zeros(dim(q), dim(q - 1)) } else { DMatrix::zeros(0, 0) };
        for i in 0..dim(q) {
            let y = if i < n_s { ServerState::available(i + 1) } else { ServerState::busy(i - n_s + 1) };
            let x = SystemState::new(y, q as u64).expect("valid");
            for (next, m) in blocked_kernel(spec, lambda, q_max, theta, &x).iter() {
                let j = local(&next);
                match next.q() as usize {
                    nq if nq == q => same[(i, j)] += m,
                    nq if nq == q + 1 => up[(i, j)] += m,
                    _ => down[(i, j)] += m,
                }
            }
        }
        (same, up, down)
    };

    // rates[q] maps level q-1 mass to level q mass.
    let mut rates: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); q_max + 1];
    let (mut u, _, mut down_above) = blocks(q_max);
    for q in (0..q_max).rev() {
        let (same, up, down) = blocks(q);
        let inv = (DMatrix::identity(dim(q + 1), dim(q + 1)) - &u)
            .try_inverse()
            .ok_or(SimError::Singular)?;
        let r = &up * inv;
        u = same + &r * &down_above;
        rates[q + 1] = r;
        down_above = down;
    }
    let base: StationaryPmf = stationary_pmf(&u)?;
    let mut levels = Vec::with_capacity(q_max + 1);
    let mut cur = DVector::from_column_slice(base.probs());
    levels.push(cur.iter().copied().collect::<Vec<f64>>());
    for r in rates.iter().skip(1) {
        cur = r.tr_mul(&cur);
        levels.push(cur.iter().map(|v| v.max(0.0)).collect());
    }
    let total: f64 = levels.iter().flatten().sum();
    for v in levels.iter_mut().flatten() {
        *v /= total;
    }
    let tail_mass = levels[q_max].iter().sum();
    Ok(TruncatedPmf {
        n_s,
        q_max,
        levels,
        tail_mass,
    })
}

/// Doubles `q_max` from `start` until the tail mass drops below `tol`.
pub fn truncated_stationary_adaptive(
    spec: &ServerSpec,
    lambda: f64,
    theta: &impl XPolicy,
    start: usize,
    tol: f64,
) -> Result<TruncatedPmf, SimError> {
    const LIMIT: usize = 1 << 20;
    let mut q_max = start.max(2);
    loop {
        let pmf = solve_capped(spec, lambda, theta, q_max)?;
        log::debug!("queue cap {q_max}: tail mass {:e}", pmf.tail_mass());
        if pmf.tail_mass() < tol {
            return Ok(pmf);
        }
        if q_max >= LIMIT {
            return Err(SimError::TailTooHeavy {
                q_max,
                tail: pmf.tail_mass(),
            });
        }
        q_max *= 2;
    }
}

/// Sum of the empty-queue masses `pi(s, A, 0)`.
pub fn empty_queue_mass(pi: &TruncatedPmf) -> f64 {
    pi.empty_queue_mass()
}

/// L1 distance between the reduced stationary PMF under `phi` and the
/// nonempty-queue marginal of the lifted chain.
pub fn y_marginal_distance_from(reduced: &StationaryPmf, pi: &TruncatedPmf) -> f64 {
    reduced
        .probs()
        .iter()
        .zip(pi.nonempty_marginal())
        .map(|(a, b)| (a - b).abs())
        .sum()
}

pub fn y_marginal_distance(spec: &ServerSpec, lambda: f64, phi: &PolicyY, q_max: usize) -> Result<f64, SimError> {
    let reduced = crate::chain::reduced_pmf(spec, phi)?;
    let pi = truncated_stationary(spec, lambda, &lift_policy(phi), q_max)?;
    Ok(y_marginal_distance_from(&reduced, &pi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    use crate::chain::{rates, PolicyY};
    use crate::policy::{project_policy, QueueTablePolicy};

    fn spec() -> ServerSpec {
        ServerSpec::reference()
    }

    /// Dense solve of the whole capped chain, independent of the level
    /// elimination.
    fn dense_oracle(spec: &ServerSpec, lambda: f64, theta: &impl XPolicy, q_max: usize) -> Vec<f64> {
        let mut states = Vec::new();
        for q in 0..=q_max as u64 {
            for y in spec.states() {
                if let Ok(x) = SystemState::new(y, q) {
                    states.push(x);
                }
            }
        }
        let idx = |x: &SystemState| states.iter().position(|z| z == x).unwrap();
        let n = states.len();
        let mut p = DMatrix::zeros(n, n);
        for (i, x) in states.iter().enumerate() {
            for (next, m) in blocked_kernel(spec, lambda, q_max, theta, x).iter() {
                p[(i, idx(&next))] += m;
            }
        }
        let pi = stationary_pmf(&p).unwrap();
        states.iter().map(|x| pi.prob(idx(x))).collect()
    }

    #[test]
    fn level_elimination_matches_dense_solve() {
        let theta = lift_policy(&PolicyY::new(vec![0.6, 1.0, 0.0, 0.3, 0.0]).unwrap());
        let pmf = truncated_stationary(&spec(), 0.12, &theta, 12).unwrap();
        let dense = dense_oracle(&spec(), 0.12, &theta, 12);
        let flat: Vec<f64> = pmf.iter().map(|(_, p)| p).collect();
        assert_eq!(flat.len(), dense.len());
        for (a, b) in flat.iter().zip(&dense) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert!(pmf.balance_residual(&spec(), 0.12, &theta) <= 1e-9);
        assert_abs_diff_eq!(pmf.total(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn queue_dependent_policy() {
        let t = QueueTablePolicy::new(vec![
            PolicyY::new(vec![1.0, 1.0, 0.0, 0.0, 0.0]).unwrap(),
            PolicyY::threshold(5, 5).unwrap(),
        ]);
        let pmf = truncated_stationary(&spec(), 0.15, &t, 10).unwrap();
        let dense = dense_oracle(&spec(), 0.15, &t, 10);
        for ((_, a), b) in pmf.iter().zip(&dense) {
            assert_abs_diff_eq!(a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn lifted_threshold_rates_and_projection() {
        let phi = PolicyY::threshold(5, 5).unwrap();
        let theta = lift_policy(&phi);
        let pmf = truncated_stationary_adaptive(&spec(), 0.15, &theta, 512, 1e-10).unwrap();
        assert!(pmf.tail_mass() < 1e-10);
        assert!(!pmf.tail_warning());
        assert!(pmf.balance_residual(&spec(), 0.15, &theta) <= 1e-9);
        // Throughput equals the arrival rate.
        assert_abs_diff_eq!(pmf.service_rate(&spec(), &theta), 0.15, epsilon = 1e-9);
        let projected = project_policy(&spec(), &theta, &pmf).unwrap();
        let r = rates(&spec(), &projected).unwrap();
        assert_abs_diff_eq!(r.service, 0.15, epsilon = 1e-9);
        assert_abs_diff_eq!(r.utilization, pmf.utilization(&theta), epsilon = 1e-9);
        assert!(projected.is_positive());
        let m = empty_queue_mass(&pmf);
        assert!(m > 0.0 && m < 1.0);
    }

    #[test]
    fn doubling_cap_is_stable() {
        let theta = lift_policy(&PolicyY::threshold(5, 5).unwrap());
        let a = truncated_stationary_adaptive(&spec(), 0.15, &theta, 64, 1e-10).unwrap();
        let b = truncated_stationary(&spec(), 0.15, &theta, 2 * a.q_max()).unwrap();
        assert!((a.utilization(&theta) - b.utilization(&theta)).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_inputs() {
        let theta = lift_policy(&PolicyY::threshold(5, 5).unwrap());
        assert!(matches!(truncated_stationary(&spec(), 0.15, &theta, 1), Err(SimError::QueueCap(1))));
        assert!(matches!(truncated_stationary(&spec(), 1.2, &theta, 8), Err(SimError::ArrivalRate(_))));
        struct Eager;
        impl XPolicy for Eager {
            fn work_prob(&self, _: &SystemState) -> f64 {
                1.0
            }
        }
        assert!(matches!(truncated_stationary(&spec(), 0.1, &Eager, 8), Err(SimError::InadmissiblePolicy)));
    }

    #[test]
    fn coarse_cap_flags_tail() {
        let theta = lift_policy(&PolicyY::threshold(5, 5).unwrap());
        let pmf = truncated_stationary(&spec(), 0.28, &theta, 4).unwrap();
        assert!(pmf.tail_warning());
    }

    #[test]
    fn marginal_distance_bounds() {
        let phi = PolicyY::threshold(5, 5).unwrap();
        let d = y_marginal_distance(&spec(), 0.15, &phi, 400).unwrap();
        assert!((0.0..=2.0).contains(&d));
    }
}
