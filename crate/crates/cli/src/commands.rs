use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use restsched::chain::{max_service_rate, threshold_rates};
use restsched::export::{curve_rows, rate_rows, sim_rows, write_csv, write_json};
use restsched::frontier::{frontier as build_frontier, infimum_from_frontier, FrontierError};
use restsched::lp::{policy_from_occupation, solve_lp};
use restsched::policy::{classify_stability, lift_policy, Stability};
use restsched::sim::{simulate as run_sim, truncated_stationary_adaptive, SimConfig};
use restsched::synthesis::{synthesize, SynthesisError, SynthesisOptions, SynthesisResult};
use restsched::verify::{run_all, VerifyOptions};
use restsched::{PolicyY, ServerSpec};

use crate::args::{PolicyArgs, SimulateArgs, VerifyArgs};
use crate::Failure;

const TAIL_TOL: f64 = 1e-10;

pub fn load_spec(path: Option<&Path>) -> Result<ServerSpec, Failure> {
    match path {
        Some(p) => ServerSpec::from_path(p).map_err(|e| Failure::Usage(e.into())),
        None => Ok(ServerSpec::reference()),
    }
}

fn out_file(out: Option<&Path>, name: &str) -> Result<Option<PathBuf>, Failure> {
    let Some(dir) = out else { return Ok(None) };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(Some(dir.join(name)))
}

fn check_arrival(lambda: f64) -> Result<(), Failure> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Failure::Usage(anyhow!("--lambda must lie in (0, 1), got {lambda}")))
    }
}

pub fn rates(spec: &ServerSpec, out: Option<&Path>) -> Result<(), Failure> {
    let table = threshold_rates(spec);
    println!("{:>4} {:>8} {:>11}", "tau", "service", "utilization");
    for row in rate_rows(&table) {
        println!("{:>4} {:>8.4} {:>11.4}", row.tau, row.service, row.utilization);
    }
    let (nu, tau) = max_service_rate(spec);
    println!("max service rate {nu:.4} at tau {tau}");
    if let Some(path) = out_file(out, "rates.csv")? {
        write_csv(&path, &rate_rows(&table)).map_err(anyhow::Error::from)?;
    }
    Ok(())
}

pub fn frontier(spec: &ServerSpec, out: Option<&Path>) -> Result<(), Failure> {
    let f = build_frontier(spec);
    println!("{:>8} {:>11}", "nu_bar", "utilization");
    for &(x, y) in f.breakpoints() {
        println!("{x:>8.4} {y:>11.4}");
    }
    if let Some(path) = out_file(out, "frontier_breakpoints.csv")? {
        write_csv(&path, &curve_rows(f.breakpoints())).map_err(anyhow::Error::from)?;
        let curve = path.with_file_name("frontier_curve.csv");
        write_csv(&curve, &curve_rows(&f.sample(101))).map_err(anyhow::Error::from)?;
    }
    Ok(())
}

fn synthesis_failure(e: SynthesisError) -> Failure {
    match e {
        SynthesisError::Delta(_) | SynthesisError::Frontier(FrontierError::ArrivalRate(_)) => Failure::Usage(e.into()),
        SynthesisError::Frontier(FrontierError::NotStabilizable { .. })
        | SynthesisError::NoTarget
        | SynthesisError::NoFloor { .. }
        | SynthesisError::AnalyticGap { .. }
        | SynthesisError::NotCertified { .. } => Failure::Infeasible(e.into()),
        other => Failure::Other(other.into()),
    }
}

/// Policy at a fixed LP floor and service rate.
fn fixed_policy(spec: &ServerSpec, a: &PolicyArgs, eps: f64, nu_bar: f64) -> Result<SynthesisResult, Failure> {
    let f = build_frontier(spec);
    let inf = infimum_from_frontier(&f, a.lambda).map_err(|e| match e {
        FrontierError::ArrivalRate(_) => Failure::Usage(e.into()),
        _ => Failure::Infeasible(e.into()),
    })?;
    let lp = solve_lp(spec, nu_bar, eps).map_err(|e| Failure::Usage(e.into()))?;
    if !lp.feasible {
        return Err(Failure::Infeasible(anyhow!("LP infeasible at eps {eps}, nu_bar {nu_bar}")));
    }
    let theta = lift_policy(&policy_from_occupation(&lp.measure));
    let stability = classify_stability(spec, a.lambda, &theta);
    if stability != Stability::StableIrreducibleAperiodic {
        return Err(Failure::Infeasible(anyhow!(
            "policy at nu_bar {nu_bar} is not guaranteed to stabilize arrival rate {}",
            a.lambda
        )));
    }
    let pi = truncated_stationary_adaptive(spec, a.lambda, &theta, a.qmax, TAIL_TOL).map_err(anyhow::Error::from)?;
    Ok(SynthesisResult {
        lambda: a.lambda,
        delta: a.delta,
        eps,
        nu_bar_target: nu_bar,
        nu_bar,
        predicted_utilization: lp.value,
        oracle_utilization: pi.utilization(&theta),
        infimum_utilization: inf,
        q_max: pi.q_max(),
        tail_mass: pi.tail_mass(),
        stability,
        policy: theta,
    })
}

pub fn policy(spec: &ServerSpec, a: &PolicyArgs, out: Option<&Path>) -> Result<(), Failure> {
    check_arrival(a.lambda)?;
    let r = match (a.eps, a.nu_bar) {
        (Some(eps), Some(nu_bar)) => fixed_policy(spec, a, eps, nu_bar)?,
        _ => {
            let opts = SynthesisOptions {
                q_max: a.qmax,
                ..SynthesisOptions::default()
            };
            synthesize(spec, a.lambda, a.delta, &opts).map_err(synthesis_failure)?
        }
    };
    println!("arrival rate          {:.4}", r.lambda);
    println!("gap                   {:.4}", r.delta);
    println!("LP floor              {:e}", r.eps);
    println!("service rate          {:.4}", r.nu_bar);
    println!("predicted utilization {:.4}", r.predicted_utilization);
    println!("oracle utilization    {:.4}", r.oracle_utilization);
    println!("least utilization     {:.4}", r.infimum_utilization);
    println!("queue cap             {} (tail {:.1e})", r.q_max, r.tail_mass);
    let probs: Vec<String> = r.work_probs().iter().map(|p| format!("{p:.4}")).collect();
    println!("work probabilities    [{}]", probs.join(", "));
    if let Some(path) = out_file(out, "policy.json")? {
        write_json(&path, &r).map_err(anyhow::Error::from)?;
    }
    Ok(())
}

pub fn simulate(spec: &ServerSpec, a: &SimulateArgs, out: Option<&Path>) -> Result<(), Failure> {
    check_arrival(a.lambda)?;
    if a.trace && out.is_none() {
        return Err(Failure::Usage(anyhow!("--trace needs --out")));
    }
    let phi = match a.nu_bar {
        Some(nu_bar) => {
            let lp = solve_lp(spec, nu_bar, a.eps).map_err(|e| Failure::Usage(e.into()))?;
            if !lp.feasible {
                return Err(Failure::Infeasible(anyhow!("LP infeasible at eps {}, nu_bar {nu_bar}", a.eps)));
            }
            policy_from_occupation(&lp.measure)
        }
        None => {
            let tau = a.tau.unwrap_or_else(|| max_service_rate(spec).1);
            PolicyY::threshold(spec.n_s(), tau).map_err(|e| Failure::Usage(e.into()))?
        }
    };
    let theta = lift_policy(&phi);
    if classify_stability(spec, a.lambda, &theta) != Stability::StableIrreducibleAperiodic {
        return Err(Failure::Infeasible(anyhow!(
            "policy is not guaranteed to stabilize arrival rate {}",
            a.lambda
        )));
    }
    let pi = truncated_stationary_adaptive(spec, a.lambda, &theta, a.qmax, TAIL_TOL).map_err(anyhow::Error::from)?;
    let oracle = pi.utilization(&theta);
    let mut cfg = SimConfig::new(a.horizon, a.reps, a.seed);
    cfg.trace = a.trace;
    let mut r = run_sim(spec, a.lambda, &theta, &cfg).map_err(|e| Failure::Usage(e.into()))?;
    let rows = sim_rows(&r, oracle);
    println!(
        "{:>11} {:>11} {:>8} {:>8} {:>10} {:>8}",
        "replication", "utilization", "service", "empty", "queue_mean", "delta"
    );
    for row in &rows {
        println!(
            "{:>11} {:>11.4} {:>8.4} {:>8.4} {:>10.4} {:>8.4}",
            row.replication, row.utilization, row.service_rate, row.empty_queue_fraction, row.queue_mean, row.oracle_delta
        );
    }
    println!("oracle utilization {oracle:.4} (queue cap {}, tail {:.1e})", pi.q_max(), pi.tail_mass());
    if let Some(path) = out_file(out, "sim.csv")? {
        write_csv(&path, &rows).map_err(anyhow::Error::from)?;
        if let Some(trace) = r.trace.take() {
            write_csv(&path.with_file_name("trace.csv"), &trace).map_err(anyhow::Error::from)?;
        }
        write_json(&path.with_file_name("sim_summary.json"), &r).map_err(anyhow::Error::from)?;
    }
    Ok(())
}

pub fn verify(spec: &ServerSpec, a: &VerifyArgs, out: Option<&Path>) -> Result<(), Failure> {
    let opts = VerifyOptions {
        horizon: a.horizon,
        replications: a.reps,
        seed: a.seed,
    };
    let report = run_all(spec, &opts);
    for c in &report.checks {
        println!("{} {:<5} {:<45} {}", if c.pass { "PASS" } else { "FAIL" }, c.id, c.name, c.detail);
    }
    if let Some(path) = out_file(out, "verify.json")? {
        write_json(&path, &report).map_err(anyhow::Error::from)?;
    }
    if report.all_pass() {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}
