//! Occupation-measure LP: the least utilization over stationary state-action
//! frequencies of the reduced chain that deliver a given service rate, with
//! an optional floor on the work fraction at `(1, Available)`.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::chain::{PolicyY, Rates, StationaryPmf};
use crate::model::{ybar_kernel, Action, Availability, ServerSpec, ServerState};
use crate::simplex::{LinearProgram, LpOutcome, Relation, SimplexError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("target service rate {0} must be finite and nonnegative")]
    ServiceRate(f64),
    #[error("eps = {0} outside [0, 1]")]
    Eps(f64),
    #[error("LP solver failed: {0}")]
    Solver(#[from] SimplexError),
    #[error("LP reported unbounded although utilization is bounded below by 0")]
    Unbounded,
}

/// State-action frequencies over the `3 n_s` admissible pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationMeasure {
    n_s: usize,
    /// Layout: `(s,A,W)` for all s, then `(s,A,R)`, then `(s,B,W)`.
    values: Vec<f64>,
}

fn slot(n_s: usize, y: ServerState, a: Action) -> Option<usize> {
    match (y.w, a) {
        (Availability::Available, Action::Work) => Some(y.s - 1),
        (Availability::Available, Action::Rest) => Some(n_s + y.s - 1),
        (Availability::Busy, Action::Work) => Some(2 * n_s + y.s - 1),
        (Availability::Busy, Action::Rest) => None,
    }
}

fn pairs(n_s: usize) -> impl Iterator<Item = (ServerState, Action)> {
    let aw = (1..=n_s).map(|s| (ServerState::available(s), Action::Work));
    let ar = (1..=n_s).map(|s| (ServerState::available(s), Action::Rest));
    let bw = (1..=n_s).map(|s| (ServerState::busy(s), Action::Work));
    aw.chain(ar).chain(bw)
}

fn key(y: ServerState, a: Action) -> String {
    format!("s{}.{}.{}", y.s, y.w.code(), a.code())
}

fn parse_key(k: &str) -> Option<(ServerState, Action)> {
    let mut parts = k.split('.');
    let s: usize = parts.next()?.strip_prefix('s')?.parse().ok()?;
    let w = match parts.next()? {
        "A" => Availability::Available,
        "B" => Availability::Busy,
        _ => return None,
    };
    let a = match parts.next()? {
        "W" => Action::Work,
        "R" => Action::Rest,
        _ => return None,
    };
    if parts.next().is_some() || s == 0 {
        return None;
    }
    Some((ServerState::new(s, w), a))
}

impl OccupationMeasure {
    fn from_values(n_s: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), 3 * n_s);
        Self { n_s, values }
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    /// Frequency of `(y, a)`; `None` for the inadmissible `(Busy, Rest)`.
    pub fn get(&self, y: ServerState, a: Action) -> Option<f64> {
        slot(self.n_s, y, a).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (ServerState, Action, f64)> + '_ {
        pairs(self.n_s).zip(&self.values).map(|((y, a), &v)| (y, a, v))
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Total work frequency, the utilization of the measure.
    pub fn utilization(&self) -> f64 {
        self.iter().filter(|e| e.1 == Action::Work).map(|e| e.2).sum()
    }

    pub fn rates(&self, spec: &ServerSpec) -> Rates {
        let service = self
            .iter()
            .filter(|e| e.1 == Action::Work)
            .map(|(y, _, v)| spec.mu(y.s) * v)
            .sum();
        Rates {
            service,
            utilization: self.utilization(),
        }
    }

    /// Max over states of `|inflow - outflow|` under the reduced kernel.
    pub fn balance_residual(&self, spec: &ServerSpec) -> f64 {
        let mut net = vec![0.0; spec.state_count()];
        for (y, a, v) in self.iter() {
            net[spec.index(y)] -= v;
            for (next, p) in ybar_kernel(spec, y, a).expect("admissible pair").iter() {
                net[spec.index(next)] += v * p;
            }
        }
        net.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl Serialize for OccupationMeasure {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let mut map = ser.serialize_map(Some(self.values.len()))?;
        for (y, a, v) in self.iter() {
            map.serialize_entry(&key(y, a), &v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for OccupationMeasure {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, f64>::deserialize(de)?;
        if raw.is_empty() || raw.len() % 3 != 0 {
            return Err(D::Error::custom("measure needs 3 entries per activity state"));
        }
        let n_s = raw.len() / 3;
        let mut values = vec![f64::NAN; 3 * n_s];
        for (k, v) in &raw {
            let (y, a) = parse_key(k).ok_or_else(|| D::Error::custom(format!("bad measure key `{k}`")))?;
            let i = (y.s <= n_s)
                .then(|| slot(n_s, y, a))
                .flatten()
                .ok_or_else(|| D::Error::custom(format!("measure key `{k}` out of range")))?;
            values[i] = *v;
        }
        Ok(Self::from_values(n_s, values))
    }
}

impl fmt::Display for OccupationMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (y, a, v) in self.iter() {
            writeln!(f, "{:<8} {v:.4}", key(y, a))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpResult {
    /// Optimal utilization; `+inf` when infeasible.
    pub value: f64,
    /// Optimal measure; all zeros when infeasible.
    pub measure: OccupationMeasure,
    pub feasible: bool,
}

impl LpResult {
    pub fn feasible_value(&self) -> Option<f64> {
        self.feasible.then_some(self.value)
    }
}

/// Minimum utilization at service rate `nu_bar` over measures whose work
/// fraction at `(1, Available)` is at least `eps`.
pub fn solve_lp(spec: &ServerSpec, nu_bar: f64, eps: f64) -> Result<LpResult, LpError> {
    if !(nu_bar.is_finite() && nu_bar >= 0.0) {
        return Err(LpError::ServiceRate(nu_bar));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(LpError::Eps(eps));
    }
    let n_s = spec.n_s();
    let n = 3 * n_s;
    let all: Vec<(ServerState, Action)> = pairs(n_s).collect();
    let objective: Vec<f64> = all.iter().map(|&(_, a)| if a == Action::Work { 1.0 } else { 0.0 }).collect();
    let mut lp = LinearProgram::new(objective);

    let mut floor = vec![0.0; n];
    floor[0] = 1.0 - eps;
    floor[n_s] = -eps;
    lp.add(floor, Relation::Ge, 0.0)?;

    let service: Vec<f64> = all
        .iter()
        .map(|&(y, a)| if a == Action::Work { spec.mu(y.s) } else { 0.0 })
        .collect();
    lp.add(service, Relation::Eq, nu_bar)?;
    lp.add(vec![1.0; n], Relation::Eq, 1.0)?;

    let mut balance = vec![vec![0.0; n]; spec.state_count()];
    for (j, &(y, a)) in all.iter().enumerate() {
        balance[spec.index(y)][j] -= 1.0;
        for (next, p) in ybar_kernel(spec, y, a).expect("admissible pair").iter() {
            balance[spec.index(next)][j] += p;
        }
    }
    // The balance rows sum to zero, so the last one is implied by the rest.
    balance.pop();
    for row in balance {
        lp.add(row, Relation::Eq, 0.0)?;
    }

    match lp.solve()? {
        LpOutcome::Optimal { x, .. } => {
            let measure = OccupationMeasure::from_values(n_s, x);
            Ok(LpResult {
                value: measure.utilization(),
                measure,
                feasible: true,
            })
        }
        LpOutcome::Infeasible { phase_one } => {
            log::debug!("LP infeasible at nu_bar={nu_bar}, eps={eps} (phase one {phase_one:e})");
            Ok(LpResult {
                value: f64::INFINITY,
                measure: OccupationMeasure::from_values(n_s, vec![0.0; n]),
                feasible: false,
            })
        }
        LpOutcome::Unbounded => Err(LpError::Unbounded),
    }
}

/// Work probability `l(y,W) / (l(y,W) + l(y,R))` where resting carries
/// mass, and 1 elsewhere.
pub fn policy_from_occupation(l: &OccupationMeasure) -> PolicyY {
    let probs = (1..=l.n_s())
        .map(|s| {
            let y = ServerState::available(s);
            let w = l.get(y, Action::Work).unwrap_or(0.0);
            let r = l.get(y, Action::Rest).unwrap_or(0.0);
            if r > 0.0 {
                (w / (w + r)).clamp(0.0, 1.0)
            } else {
                1.0
            }
        })
        .collect();
    PolicyY::new(probs).expect("ratios lie in [0, 1]")
}

/// Measure induced by running `phi` from its stationary PMF.
pub fn occupation_from_policy(spec: &ServerSpec, phi: &PolicyY, pi: &StationaryPmf) -> OccupationMeasure {
    let values = pairs(spec.n_s())
        .map(|(y, a)| {
            let mass = pi.prob(spec.index(y));
            let work = phi.work_prob(y);
            match a {
                Action::Work => mass * work,
                Action::Rest => mass * (1.0 - work),
            }
        })
        .collect();
    OccupationMeasure::from_values(spec.n_s(), values)
}
