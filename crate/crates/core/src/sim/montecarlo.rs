use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::model::{Availability, ServerSpec, ServerState, SystemState};
use crate::policy::XPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: u64,
    pub burn_in: u64,
    pub replications: usize,
    pub seed: u64,
    pub initial_state: SystemState,
    /// Record a per-step trace of replication 0.
    pub trace: bool,
}

impl SimConfig {
    /// Starts empty at `(1, A, 0)` with a 10% burn-in and no trace.
    pub fn new(horizon: u64, replications: usize, seed: u64) -> Self {
        Self {
            horizon,
            burn_in: horizon / 10,
            replications,
            seed,
            initial_state: SystemState::new(ServerState::available(1), 0).expect("valid"),
            trace: false,
        }
    }

    fn validate(&self, spec: &ServerSpec) -> Result<(), SimError> {
        if self.horizon <= self.burn_in {
            return Err(SimError::Config(format!(
                "horizon {} must exceed burn-in {}",
                self.horizon, self.burn_in
            )));
        }
        if self.replications == 0 {
            return Err(SimError::Config("need at least one replication".into()));
        }
        spec.check_activity(self.initial_state.s())?;
        Ok(())
    }
}

/// Generator for one replication: the seed picks the key, the replication
/// index picks the stream.
pub fn replication_rng(seed: u64, replication: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub s: usize,
    pub w: Availability,
    pub q: u64,
    pub work: bool,
    pub arrival: bool,
    pub completion: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Step {
    pub next: SystemState,
    pub work: bool,
    pub arrival: bool,
    pub completion: bool,
}

/// One synchronous step. Four uniforms are drawn in a fixed order (action,
/// completion, arrival, activity move) whether or not each is used.
pub(crate) fn step(spec: &ServerSpec, lambda: f64, theta: &impl XPolicy, x: &SystemState, rng: &mut impl Rng) -> Step {
    let u_action: f64 = rng.random();
    let u_done: f64 = rng.random();
    let u_arrival: f64 = rng.random();
    let u_move: f64 = rng.random();
    let s = x.s();
    let work = u_action < theta.work_prob(x);
    let completion = work && u_done < spec.mu(s);
    let arrival = u_arrival < lambda;
    let (w, mut q) = if work {
        if completion {
            (Availability::Available, x.q() - 1)
        } else {
            (Availability::Busy, x.q())
        }
    } else {
        (Availability::Available, x.q())
    };
    if arrival {
        q += 1;
    }
    let s_next = if work {
        if u_move < spec.rho_up(s) {
            s + 1
        } else {
            s
        }
    } else if u_move < spec.rho_down(s) {
        s - 1
    } else {
        s
    };
    let next = SystemState::new(ServerState::new(s_next, w), q).expect("busy implies a queued task");
    Step {
        next,
        work,
        arrival,
        completion,
    }
}

/// Time averages of one replication after burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationStats {
    pub replication: usize,
    pub utilization: f64,
    pub service_rate: f64,
    pub empty_queue_fraction: f64,
    pub queue_mean: f64,
    pub queue_max: u64,
    /// Fraction of steps in each reduced state with a nonempty queue.
    pub y_marginal: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Standard error of the mean over replications; absent for one run.
    pub std_error: Option<f64>,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std_error = (xs.len() > 1).then(|| {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        Self { mean, std_error }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub replications: Vec<ReplicationStats>,
    pub utilization: Estimate,
    pub service_rate: Estimate,
    pub empty_queue_fraction: Estimate,
    pub queue_mean: Estimate,
    pub queue_max: u64,
    pub y_marginal: Vec<f64>,
    pub trace: Option<Vec<TraceRow>>,
}

fn run_one(
    spec: &ServerSpec,
    lambda: f64,
    theta: &impl XPolicy,
    cfg: &SimConfig,
    replication: usize,
) -> (ReplicationStats, Option<Vec<TraceRow>>) {
    let mut rng = replication_rng(cfg.seed, replication);
    let mut x = cfg.initial_state;
    let keep_trace = cfg.trace && replication == 0;
    let mut trace = keep_trace.then(Vec::new);
    let (mut works, mut done, mut empty, mut q_sum, mut q_max) = (0u64, 0u64, 0u64, 0u128, 0u64);
    let mut y_counts = vec![0u64; spec.state_count()];
    for k in 0..cfg.horizon {
        let st = step(spec, lambda, theta, &x, &mut rng);
        if let Some(t) = trace.as_mut() {
            t.push(TraceRow {
                step: k,
                s: x.s(),
                w: x.w(),
                q: x.q(),
                work: st.work,
                arrival: st.arrival,
                completion: st.completion,
            });
        }
        if k >= cfg.burn_in {
            works += u64::from(st.work);
            done += u64::from(st.completion);
            q_sum += u128::from(x.q());
            q_max = q_max.max(x.q());
            if x.q() == 0 {
                empty += 1;
            } else {
                y_counts[spec.index(x.y())] += 1;
            }
        }
        x = st.next;
    }
    let n = (cfg.horizon - cfg.burn_in) as f64;
    let stats = ReplicationStats {
        replication,
        utilization: works as f64 / n,
        service_rate: done as f64 / n,
        empty_queue_fraction: empty as f64 / n,
        queue_mean: q_sum as f64 / n,
        queue_max: q_max,
        y_marginal: y_counts.iter().map(|&c| c as f64 / n).collect(),
    };
    (stats, trace)
}

/// Independent replications of the full system, run in parallel and
/// combined in replication order.
pub fn simulate(
    spec: &ServerSpec,
    lambda: f64,
    theta: &impl XPolicy,
    cfg: &SimConfig,
) -> Result<SimResult, SimError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(SimError::ArrivalRate(lambda));
    }
    cfg.validate(spec)?;
    let mut runs: Vec<(ReplicationStats, Option<Vec<TraceRow>>)> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_one(spec, lambda, theta, cfg, r))
        .collect();
    let trace = runs.first_mut().and_then(|r| r.1.take());
    let reps: Vec<ReplicationStats> = runs.into_iter().map(|r| r.0).collect();
    let pick = |f: fn(&ReplicationStats) -> f64| Estimate::from_samples(&reps.iter().map(f).collect::<Vec<_>>());
    let mut y_marginal = vec![0.0; spec.state_count()];
    for r in &reps {
        for (acc, v) in y_marginal.iter_mut().zip(&r.y_marginal) {
            *acc += v / reps.len() as f64;
        }
    }
    Ok(SimResult {
        utilization: pick(|r| r.utilization),
        service_rate: pick(|r| r.service_rate),
        empty_queue_fraction: pick(|r| r.empty_queue_fraction),
        queue_mean: pick(|r| r.queue_mean),
        queue_max: reps.iter().map(|r| r.queue_max).max().unwrap_or(0),
        y_marginal,
        replications: reps,
        trace,
    })
}
