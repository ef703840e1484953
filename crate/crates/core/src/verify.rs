//! Reproduction suite for the reference instance. Each check returns a
//! measured value next to its verdict so reports can be compared across
//! runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{
    decompose_dagger_policy, max_service_rate, mixing_constants, potential_function, rates, reduced_pmf,
    threshold_rates, AnchorChoice, PolicyY, Scale,
};
use crate::frontier::frontier;
use crate::lp::{policy_from_occupation, solve_lp};
use crate::model::{ybar_matrix, ServerSpec};
use crate::policy::{classify_stability, lift_policy, Stability};
use crate::sim::{simulate, truncated_stationary_adaptive, y_marginal_distance_from, SimConfig};
use crate::synthesis::{synthesize, SynthesisOptions};

/// Reference service rates of the threshold policies 1..=6.
pub const REFERENCE_SERVICE: [f64; 6] = [0.0000, 0.0347, 0.1993, 0.1947, 0.3000, 0.0500];
/// Reference utilizations of the threshold policies 1..=6.
pub const REFERENCE_UTILIZATION: [f64; 6] = [0.0000, 0.2383, 0.4309, 0.6316, 0.8571, 1.0000];
/// Reference frontier corners.
pub const REFERENCE_BREAKPOINTS: [(f64, f64); 3] = [(0.0, 0.0), (0.1993, 0.4309), (0.3000, 0.8571)];
/// Tolerance for values printed to four decimals.
pub const PRINT_TOL: f64 = 5e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub id: String,
    pub name: String,
    pub pass: bool,
    /// Headline measured quantity (an error or a rate, depending on the check).
    pub measured: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, id: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub horizon: u64,
    pub replications: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            horizon: 1_000_000,
            replications: 10,
            seed: 2024,
        }
    }
}

type CheckResult = Result<(bool, f64, String), String>;

fn outcome(id: &str, name: &str, r: CheckResult) -> CheckOutcome {
    let (pass, measured, detail) = r.unwrap_or_else(|e| (false, f64::NAN, format!("error: {e}")));
    CheckOutcome {
        id: id.into(),
        name: name.into(),
        pass,
        measured,
        detail,
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

pub fn threshold_table(spec: &ServerSpec) -> CheckResult {
    let table = threshold_rates(spec);
    if table.len() != REFERENCE_SERVICE.len() {
        return Ok((false, f64::NAN, format!("{} thresholds, expected 6", table.len())));
    }
    let worst = table
        .iter()
        .zip(REFERENCE_SERVICE.iter().zip(REFERENCE_UTILIZATION))
        .map(|(r, (s, u))| (r.service - s).abs().max((r.utilization - u).abs()))
        .fold(0.0, f64::max);
    Ok((worst <= PRINT_TOL, worst, format!("max deviation {worst:.2e}")))
}

pub fn maximal_rate(spec: &ServerSpec) -> CheckResult {
    let (nu, tau) = max_service_rate(spec);
    let pass = (nu - 0.3).abs() <= PRINT_TOL && tau == 5;
    Ok((pass, nu, format!("nu* = {nu:.6} at threshold {tau}")))
}

pub fn frontier_shape(spec: &ServerSpec) -> CheckResult {
    let f = frontier(spec);
    let bp = f.breakpoints();
    let dev = if bp.len() == REFERENCE_BREAKPOINTS.len() {
        bp.iter()
            .zip(REFERENCE_BREAKPOINTS)
            .map(|(a, b)| (a.0 - b.0).abs().max((a.1 - b.1).abs()))
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let samples = f.sample(101);
    let convex = samples.windows(3).all(|w| w[2].1 - 2.0 * w[1].1 + w[0].1 >= -1e-12);
    let monotone = samples.windows(2).all(|w| w[1].1 >= w[0].1);
    let pass = dev <= PRINT_TOL && convex && monotone;
    Ok((
        pass,
        dev,
        format!("{} breakpoints, max deviation {dev:.2e}, convex {convex}, nondecreasing {monotone}", bp.len()),
    ))
}

/// 21 evenly spaced service rates over `[0.01, 0.99]` of the maximal rate.
pub fn rate_grid(spec: &ServerSpec) -> Vec<f64> {
    let top = max_service_rate(spec).0;
    (0..21).map(|i| top * (0.01 + 0.98 * i as f64 / 20.0)).collect()
}

pub fn lp_hull_agreement(spec: &ServerSpec) -> CheckResult {
    let f = frontier(spec);
    let mut worst: f64 = 0.0;
    for nu in rate_grid(spec) {
        let lp = solve_lp(spec, nu, 0.0).map_err(err)?;
        let hull = f.eval(nu).ok_or("grid point outside the frontier")?;
        worst = worst.max((lp.value - hull).abs());
    }
    Ok((worst <= 1e-6, worst, format!("max |LP - hull| = {worst:.2e} over 21 points")))
}

pub fn floor_continuity(spec: &ServerSpec) -> CheckResult {
    let nu = 0.25;
    let base = solve_lp(spec, nu, 0.0).map_err(err)?.value;
    let values: Vec<f64> = (1..=6)
        .map(|k| solve_lp(spec, nu, 10f64.powi(-k)).map(|r| r.value))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let decreasing = values.windows(2).all(|w| w[1] <= w[0] + 1e-12) && values.iter().all(|&v| v >= base - 1e-12);
    let gap = values[5] - base;
    let grid: Vec<f64> = rate_grid(spec)
        .into_iter()
        .map(|x| solve_lp(spec, x, 1e-4).map(|r| r.value))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let nondecreasing = grid.iter().all(|v| v.is_finite()) && grid.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let pass = decreasing && gap <= 1e-4 && nondecreasing;
    Ok((
        pass,
        gap,
        format!("floor sweep nonincreasing {decreasing}, final gap {gap:.2e}, rate sweep nondecreasing {nondecreasing}"),
    ))
}

pub fn extraction_round_trip(spec: &ServerSpec) -> CheckResult {
    let (nu, eps) = (0.25, 1e-3);
    let lp = solve_lp(spec, nu, eps).map_err(err)?;
    if !lp.feasible {
        return Ok((false, f64::NAN, "LP infeasible".into()));
    }
    let phi = policy_from_occupation(&lp.measure);
    let r = rates(spec, &phi).map_err(err)?;
    let (ds, du) = ((r.service - nu).abs(), (r.utilization - lp.value).abs());
    let floor_ok = phi.at_available(1) >= eps - 1e-12;
    let pass = floor_ok && ds <= 1e-8 && du <= 1e-8;
    Ok((
        pass,
        ds.max(du),
        format!("work prob at (1,A) {:.6}, rate error {ds:.2e}, utilization error {du:.2e}", phi.at_available(1)),
    ))
}

/// Random policies that always work at `(1, A)`, randomize at no more than
/// one available level and are 0/1 elsewhere.
pub fn random_dagger_policies(n_s: usize, count: usize, seed: u64) -> Vec<PolicyY> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut probs: Vec<f64> = (0..n_s)
                .map(|s| if s == 0 || rng.random_bool(0.5) { 1.0 } else { 0.0 })
                .collect();
            if n_s > 1 && rng.random_bool(0.8) {
                let r = rng.random_range(1..n_s);
                probs[r] = rng.random_range(0.01..0.99);
            }
            PolicyY::new(probs).expect("valid probabilities")
        })
        .collect()
}

pub fn decomposition_suite(spec: &ServerSpec) -> CheckResult {
    let table = threshold_rates(spec);
    let mut worst: f64 = 0.0;
    for phi in random_dagger_policies(spec.n_s(), 100, 7) {
        let d = decompose_dagger_policy(spec, &phi).map_err(err)?;
        if d.scale != Scale::Fixed(1.0) {
            return Ok((false, f64::NAN, format!("unexpected free scale for {:?}", phi.work_probs())));
        }
        let direct = rates(spec, &phi).map_err(err)?;
        let mixed = d.rates(&table);
        worst = worst
            .max((direct.service - mixed.service).abs())
            .max((direct.utilization - mixed.utilization).abs());
        let pi = reduced_pmf(spec, &phi).map_err(err)?;
        for (a, b) in pi.probs().iter().zip(d.mixture_pmf(spec).map_err(err)?) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((worst <= 1e-9, worst, format!("max deviation {worst:.2e} over 100 policies")))
}

pub fn potential_identity(spec: &ServerSpec) -> CheckResult {
    let mut residual: f64 = 0.0;
    let mut rate_err: f64 = 0.0;
    for tau in 2..=spec.n_s() + 1 {
        let phi = PolicyY::threshold(spec.n_s(), tau).map_err(err)?;
        let p = ybar_matrix(spec, &phi);
        let reward = |from: usize, _: usize| {
            let y = spec.state_at(from);
            spec.mu(y.s) * phi.work_prob(y)
        };
        let pf = potential_function(&p, reward).map_err(err)?;
        residual = residual.max(pf.identity_residual(&p, reward));
        rate_err = rate_err.max((pf.r_avg - rates(spec, &phi).map_err(err)?.service).abs());
    }
    let pass = residual <= 1e-9 && rate_err <= 1e-10;
    Ok((pass, residual, format!("residual {residual:.2e}, average-reward error {rate_err:.2e}")))
}

pub fn synthesis_end_to_end(spec: &ServerSpec) -> CheckResult {
    let (lambda, delta) = (0.15, 0.05);
    let r = synthesize(spec, lambda, delta, &SynthesisOptions::default()).map_err(err)?;
    let hull = frontier(spec).eval(lambda).ok_or("arrival rate outside the frontier")?;
    let stable = r.stability == Stability::StableIrreducibleAperiodic;
    let within = r.oracle_utilization <= hull + delta;
    let pass = stable && within && r.tail_mass < 1e-10;
    Ok((
        pass,
        r.oracle_utilization,
        format!(
            "eps {:e}, nu_bar {:.6}, oracle utilization {:.6} <= {:.6}, tail {:.1e}, stable {stable}",
            r.eps,
            r.nu_bar,
            r.oracle_utilization,
            hull + delta,
            r.tail_mass
        ),
    ))
}

pub fn convergence_trend(spec: &ServerSpec) -> CheckResult {
    let (lambda, eps) = (0.15, 1e-3);
    let mc = mixing_constants(spec, lambda, eps, &AnchorChoice::WorstCase).map_err(err)?;
    let mut distances = Vec::new();
    let mut bounds_hold = true;
    for nu in [0.25, 0.20, 0.17, 0.16, 0.155] {
        let lp = solve_lp(spec, nu, eps).map_err(err)?;
        let phi = policy_from_occupation(&lp.measure);
        let theta = lift_policy(&phi);
        let pi = truncated_stationary_adaptive(spec, lambda, &theta, 512, 1e-10).map_err(err)?;
        let d = y_marginal_distance_from(&reduced_pmf(spec, &phi).map_err(err)?, &pi);
        bounds_hold &= d <= mc.distance_bound(nu, lambda);
        bounds_hold &= pi.empty_queue_mass() <= mc.empty_queue_bound(nu, lambda);
        distances.push(d);
    }
    let decreasing = distances.windows(2).all(|w| w[1] < w[0]);
    let last = *distances.last().expect("five points");
    let pass = decreasing && last < 0.05 && bounds_hold;
    let list: Vec<String> = distances.iter().map(|d| format!("{d:.4}")).collect();
    Ok((
        pass,
        last,
        format!(
            "distances [{}], decreasing {decreasing}, bounds hold {bounds_hold} (beta {:.2e})",
            list.join(", "),
            mc.beta
        ),
    ))
}

pub fn simulation_agreement(spec: &ServerSpec, opts: &VerifyOptions) -> CheckResult {
    let lambda = 0.15;
    let tau = max_service_rate(spec).1;
    let theta = lift_policy(&PolicyY::threshold(spec.n_s(), tau).map_err(err)?);
    if classify_stability(spec, lambda, &theta) != Stability::StableIrreducibleAperiodic {
        return Ok((false, f64::NAN, "reference policy is not stabilizing".into()));
    }
    let pi = truncated_stationary_adaptive(spec, lambda, &theta, 512, 1e-10).map_err(err)?;
    let oracle = pi.utilization(&theta);
    let cfg = SimConfig::new(opts.horizon, opts.replications, opts.seed);
    let r = simulate(spec, lambda, &theta, &cfg).map_err(err)?;
    let se_u = r.utilization.std_error.ok_or("need at least two replications")?;
    let se_s = r.service_rate.std_error.ok_or("need at least two replications")?;
    let zu = (r.utilization.mean - oracle).abs() / se_u;
    let zs = (r.service_rate.mean - lambda).abs() / se_s;
    let pass = zu <= 4.0 && zs <= 4.0;
    Ok((
        pass,
        zu.max(zs),
        format!(
            "utilization {:.5} vs oracle {oracle:.5} ({zu:.2} se), service {:.5} vs {lambda} ({zs:.2} se)",
            r.utilization.mean, r.service_rate.mean
        ),
    ))
}

/// Runs every check in order.
pub fn run_all(spec: &ServerSpec, opts: &VerifyOptions) -> VerifyReport {
    let checks = vec![
        outcome("AC1", "threshold rate table", threshold_table(spec)),
        outcome("AC2", "maximal service rate", maximal_rate(spec)),
        outcome("AC3", "frontier breakpoints and shape", frontier_shape(spec)),
        outcome("AC4", "LP matches hull", lp_hull_agreement(spec)),
        outcome("AC5", "LP floor continuity and rate monotonicity", floor_continuity(spec)),
        outcome("AC6", "policy extraction round trip", extraction_round_trip(spec)),
        outcome("AC7", "two-threshold decomposition", decomposition_suite(spec)),
        outcome("AC8", "potential function identity", potential_identity(spec)),
        outcome("AC9", "synthesis end to end", synthesis_end_to_end(spec)),
        outcome("AC10", "marginal convergence trend", convergence_trend(spec)),
        outcome("AC11", "simulation matches oracle", simulation_agreement(spec, opts)),
    ];
    VerifyReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturbed_spec_fails_table() {
        let spec = ServerSpec::new(
            vec![0.01, 0.5, 0.2, 0.5, 0.05],
            vec![0.2, 0.15, 0.1, 0.05, 0.0],
            vec![0.0, 0.05, 0.1, 0.15, 0.2],
        )
        .unwrap();
        assert!(!threshold_table(&spec).unwrap().0);
        assert!(threshold_table(&ServerSpec::reference()).unwrap().0);
    }

    #[test]
    fn random_policies_have_the_required_shape() {
        let ps = random_dagger_policies(5, 50, 1);
        assert_eq!(ps.len(), 50);
        for p in &ps {
            assert_eq!(p.at_available(1), 1.0);
            assert!(p.randomizing_states().len() <= 1);
        }
        assert_eq!(ps, random_dagger_policies(5, 50, 1));
    }

    #[test]
    fn grid_spans_interior() {
        let g = rate_grid(&ServerSpec::reference());
        assert_eq!(g.len(), 21);
        assert!((g[0] - 0.003).abs() < 1e-12 && (g[20] - 0.297).abs() < 1e-12);
    }

    #[test]
    fn failures_are_reported_not_raised() {
        let c = outcome("X", "x", Err("boom".into()));
        assert!(!c.pass && c.measured.is_nan() && c.detail.contains("boom"));
    }
}
