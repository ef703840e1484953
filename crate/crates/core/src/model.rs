//! Problem instance and the exact one-step kernels of the full system `X`
//! (server state plus queue length) and of the reduced server-only chain.
//!
//! Activity states are 1-based throughout the public API: `s` ranges over
//! `1..=n_s`. The reduced state space is enumerated as `(1,A)..(n_s,A)`
//! followed by `(1,B)..(n_s,B)`; [`ServerSpec::index`] and
//! [`ServerSpec::state_at`] implement that order and every matrix or vector
//! over reduced states in this crate uses it.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::PolicyY;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("a server needs at least one activity state")]
    NoStates,
    #[error("`{field}` has {got} entries, expected {expected}")]
    Length {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("`{field}` entry for s={s} is {value}, must lie in {range}")]
    OutOfRange {
        field: &'static str,
        s: usize,
        value: f64,
        range: &'static str,
    },
    #[error("activity state {s} outside 1..={n_s}")]
    ActivityOutOfRange { s: usize, n_s: usize },
    #[error("a busy server with an empty queue is not a system state")]
    BusyWithEmptyQueue,
    #[error("action {action} is not admissible at {state}")]
    Inadmissible { action: Action, state: String },
    #[error("arrival probability {0} outside (0, 1)")]
    ArrivalRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Availability {
    Available,
    Busy,
}

impl Availability {
    pub fn code(self) -> char {
        match self {
            Availability::Available => 'A',
            Availability::Busy => 'B',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Work,
    Rest,
}

impl Action {
    pub fn code(self) -> char {
        match self {
            Action::Work => 'W',
            Action::Rest => 'R',
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Work => f.write_str("Work"),
            Action::Rest => f.write_str("Rest"),
        }
    }
}

/// Server state `(s, w)`: activity level and availability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ServerState {
    pub s: usize,
    pub w: Availability,
}

impl ServerState {
    pub const fn new(s: usize, w: Availability) -> Self {
        Self { s, w }
    }

    pub const fn available(s: usize) -> Self {
        Self::new(s, Availability::Available)
    }

    pub const fn busy(s: usize) -> Self {
        Self::new(s, Availability::Busy)
    }
}

impl fmt::Display for ServerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.s, self.w.code())
    }
}

/// Full system state `(s, w, q)`. The pair `(Busy, q = 0)` cannot be built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawSystemState", into = "RawSystemState")]
pub struct SystemState {
    y: ServerState,
    q: u64,
}

#[derive(Serialize, Deserialize)]
struct RawSystemState {
    s: usize,
    w: Availability,
    q: u64,
}

impl TryFrom<RawSystemState> for SystemState {
    type Error = ModelError;
    fn try_from(raw: RawSystemState) -> Result<Self, ModelError> {
        SystemState::new(ServerState::new(raw.s, raw.w), raw.q)
    }
}

impl From<SystemState> for RawSystemState {
    fn from(x: SystemState) -> Self {
        RawSystemState {
            s: x.y.s,
            w: x.y.w,
            q: x.q,
        }
    }
}

impl SystemState {
    pub fn new(y: ServerState, q: u64) -> Result<Self, ModelError> {
        if y.w == Availability::Busy && q == 0 {
            return Err(ModelError::BusyWithEmptyQueue);
        }
        Ok(Self { y, q })
    }

    pub fn y(&self) -> ServerState {
        self.y
    }

    pub fn s(&self) -> usize {
        self.y.s
    }

    pub fn w(&self) -> Availability {
        self.y.w
    }

    pub fn q(&self) -> u64 {
        self.q
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.y.s, self.y.w.code(), self.q)
    }
}

/// Sparse probability mass function with a handful of support points.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf<T> {
    entries: Vec<(T, f64)>,
}

impl<T: Copy + PartialEq> Pmf<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    /// Adds `p` to the mass of `t`. Zero masses are dropped.
    pub fn add(&mut self, t: T, p: f64) {
        if p == 0.0 {
            return;
        }
        match self.entries.iter_mut().find(|(u, _)| *u == t) {
            Some((_, m)) => *m += p,
            None => self.entries.push((t, p)),
        }
    }

    pub fn mass(&self, t: T) -> f64 {
        self.entries
            .iter()
            .find(|(u, _)| *u == t)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|&(_, p)| p).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (T, f64)> + '_ {
        self.entries.iter().copied()
    }
}

impl<T: Copy + PartialEq> Default for Pmf<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// The immutable problem instance: service rates `mu(s)` and the activity
/// up/down probabilities, with the boundary conventions
/// `rho_down(1) = rho_up(n_s) = 0` stored explicitly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServerSpec {
    mu: Vec<f64>,
    rho_up: Vec<f64>,
    rho_down: Vec<f64>,
}

fn open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

impl ServerSpec {
    /// Builds a validated spec from full-length vectors (index `i` holds the
    /// value for activity state `i + 1`).
    pub fn new(mu: Vec<f64>, rho_up: Vec<f64>, rho_down: Vec<f64>) -> Result<Self, ModelError> {
        let n_s = mu.len();
        if n_s == 0 {
            return Err(ModelError::NoStates);
        }
        for (field, v) in [("rho_up", &rho_up), ("rho_down", &rho_down)] {
            if v.len() != n_s {
                return Err(ModelError::Length {
                    field,
                    got: v.len(),
                    expected: n_s,
                });
            }
        }
        for (i, &m) in mu.iter().enumerate() {
            if !open_unit(m) {
                return Err(ModelError::OutOfRange {
                    field: "mu",
                    s: i + 1,
                    value: m,
                    range: "(0, 1)",
                });
            }
        }
        for s in 1..=n_s {
            let up = rho_up[s - 1];
            let (ok, range) = if s < n_s {
                (open_unit(up), "(0, 1)")
            } else {
                (up == 0.0, "{0} at s = n_s")
            };
            if !ok {
                return Err(ModelError::OutOfRange {
                    field: "rho_up",
                    s,
                    value: up,
                    range,
                });
            }
            let down = rho_down[s - 1];
            let (ok, range) = if s > 1 {
                (open_unit(down), "(0, 1)")
            } else {
                (down == 0.0, "{0} at s = 1")
            };
            if !ok {
                return Err(ModelError::OutOfRange {
                    field: "rho_down",
                    s,
                    value: down,
                    range,
                });
            }
        }
        Ok(Self {
            mu,
            rho_up,
            rho_down,
        })
    }

    /// The five-state reference server shipped as `configs/reference.toml`.
    pub fn reference() -> Self {
        Self::new(
            vec![0.01, 0.5, 0.3, 0.5, 0.05],
            vec![0.2, 0.15, 0.1, 0.05, 0.0],
            vec![0.0, 0.05, 0.1, 0.15, 0.2],
        )
        .expect("reference spec is valid")
    }

    pub fn n_s(&self) -> usize {
        self.mu.len()
    }

    /// Number of reduced states, `2 n_s`.
    pub fn state_count(&self) -> usize {
        2 * self.n_s()
    }

    pub fn mu(&self, s: usize) -> f64 {
        self.mu[s - 1]
    }

    pub fn rho_up(&self, s: usize) -> f64 {
        self.rho_up[s - 1]
    }

    pub fn rho_down(&self, s: usize) -> f64 {
        self.rho_down[s - 1]
    }

    pub fn mu_all(&self) -> &[f64] {
        &self.mu
    }

    pub fn rho_up_all(&self) -> &[f64] {
        &self.rho_up
    }

    pub fn rho_down_all(&self) -> &[f64] {
        &self.rho_down
    }

    pub fn min_mu(&self) -> f64 {
        self.mu.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn index(&self, y: ServerState) -> usize {
        debug_assert!(y.s >= 1 && y.s <= self.n_s());
        match y.w {
            Availability::Available => y.s - 1,
            Availability::Busy => self.n_s() + y.s - 1,
        }
    }

    pub fn state_at(&self, i: usize) -> ServerState {
        let n_s = self.n_s();
        if i < n_s {
            ServerState::available(i + 1)
        } else {
            ServerState::busy(i - n_s + 1)
        }
    }

    pub fn states(&self) -> impl Iterator<Item = ServerState> + '_ {
        (0..self.state_count()).map(|i| self.state_at(i))
    }

    pub fn check_activity(&self, s: usize) -> Result<(), ModelError> {
        if s == 0 || s > self.n_s() {
            return Err(ModelError::ActivityOutOfRange { s, n_s: self.n_s() });
        }
        Ok(())
    }
}

pub fn admissible_actions_x(x: &SystemState) -> &'static [Action] {
    if x.q() == 0 {
        &[Action::Rest]
    } else if x.w() == Availability::Busy {
        &[Action::Work]
    } else {
        &[Action::Work, Action::Rest]
    }
}

pub fn admissible_actions_y(w: Availability) -> &'static [Action] {
    match w {
        Availability::Busy => &[Action::Work],
        Availability::Available => &[Action::Work, Action::Rest],
    }
}

/// Next-activity distribution: work may raise `s` by one, rest may lower it.
pub fn activity_transition(spec: &ServerSpec, s: usize, a: Action) -> Pmf<usize> {
    let mut pmf = Pmf::new();
    match a {
        Action::Work => {
            let up = spec.rho_up(s);
            if s < spec.n_s() {
                pmf.add(s + 1, up);
            }
            pmf.add(s, 1.0 - up);
        }
        Action::Rest => {
            let down = spec.rho_down(s);
            if s > 1 {
                pmf.add(s - 1, down);
            }
            pmf.add(s, 1.0 - down);
        }
    }
    pmf
}

fn inadmissible(a: Action, state: impl fmt::Display) -> ModelError {
    ModelError::Inadmissible {
        action: a,
        state: state.to_string(),
    }
}

/// One-step kernel of the full system under action `a`.
pub fn x_transition(
    spec: &ServerSpec,
    lambda: f64,
    x: &SystemState,
    a: Action,
) -> Result<Pmf<SystemState>, ModelError> {
    if !open_unit(lambda) {
        return Err(ModelError::ArrivalRate(lambda));
    }
    spec.check_activity(x.s())?;
    if !admissible_actions_x(x).contains(&a) {
        return Err(inadmissible(a, x));
    }
    Ok(x_kernel(spec, lambda, x, a))
}

/// Kernel without validation; `arrival` may be 0 to model a blocked queue.
pub(crate) fn x_kernel(spec: &ServerSpec, arrival: f64, x: &SystemState, a: Action) -> Pmf<SystemState> {
    let q = x.q();
    // (w', q', mass) of the availability/queue component
    let wq: Vec<(Availability, u64, f64)> = match a {
        Action::Work => {
            let m = spec.mu(x.s());
            vec![
                (Availability::Available, q, m * arrival),
                (Availability::Available, q - 1, m * (1.0 - arrival)),
                (Availability::Busy, q + 1, (1.0 - m) * arrival),
                (Availability::Busy, q, (1.0 - m) * (1.0 - arrival)),
            ]
        }
        Action::Rest => vec![
            (Availability::Available, q + 1, arrival),
            (Availability::Available, q, 1.0 - arrival),
        ],
    };
    let mut pmf = Pmf::new();
    for (s_next, ps) in activity_transition(spec, x.s(), a).iter() {
        for &(w_next, q_next, pwq) in &wq {
            // Busy with q' = 0 only arises with zero mass; skip it.
            if let Ok(next) = SystemState::new(ServerState::new(s_next, w_next), q_next) {
                pmf.add(next, ps * pwq);
            }
        }
    }
    pmf
}

/// One-step kernel of the reduced server chain under action `a`.
pub fn ybar_kernel(
    spec: &ServerSpec,
    y: ServerState,
    a: Action,
) -> Result<Pmf<ServerState>, ModelError> {
    spec.check_activity(y.s)?;
    if !admissible_actions_y(y.w).contains(&a) {
        return Err(inadmissible(a, y));
    }
    let w_next: [(Availability, f64); 2] = match a {
        Action::Work => {
            let m = spec.mu(y.s);
            [(Availability::Available, m), (Availability::Busy, 1.0 - m)]
        }
        Action::Rest => [(Availability::Available, 1.0), (Availability::Busy, 0.0)],
    };
    let mut pmf = Pmf::new();
    for (s_next, ps) in activity_transition(spec, y.s, a).iter() {
        for &(w, pw) in &w_next {
            pmf.add(ServerState::new(s_next, w), ps * pw);
        }
    }
    Ok(pmf)
}

/// Row-stochastic transition matrix of the reduced chain under `phi`.
pub fn ybar_matrix(spec: &ServerSpec, phi: &PolicyY) -> DMatrix<f64> {
    let n = spec.state_count();
    let mut p = DMatrix::zeros(n, n);
    for y in spec.states() {
        let i = spec.index(y);
        let work = phi.work_prob(y);
        for (a, weight) in [(Action::Work, work), (Action::Rest, 1.0 - work)] {
            if weight == 0.0 {
                continue;
            }
            let kernel = ybar_kernel(spec, y, a).expect("policy only rests at available states");
            for (next, m) in kernel.iter() {
                p[(i, spec.index(next))] += weight * m;
            }
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn x(s: usize, w: Availability, q: u64) -> SystemState {
        SystemState::new(ServerState::new(s, w), q).unwrap()
    }

    #[test]
    fn admissible_sets() {
        use Availability::*;
        assert_eq!(admissible_actions_x(&x(2, Available, 0)), &[Action::Rest]);
        assert_eq!(admissible_actions_x(&x(2, Busy, 3)), &[Action::Work]);
        assert_eq!(
            admissible_actions_x(&x(2, Available, 1)),
            &[Action::Work, Action::Rest]
        );
        assert_eq!(admissible_actions_y(Busy), &[Action::Work]);
        assert!(!admissible_actions_y(Busy).contains(&Action::Rest));
        assert_eq!(admissible_actions_y(Available), &[Action::Work, Action::Rest]);
    }

    #[test]
    fn busy_empty_queue_rejected() {
        assert_eq!(
            SystemState::new(ServerState::busy(1), 0),
            Err(ModelError::BusyWithEmptyQueue)
        );
    }

    #[test]
    fn activity_moves() {
        let spec = ServerSpec::reference();
        let up = activity_transition(&spec, 1, Action::Work);
        assert_abs_diff_eq!(up.mass(1), 0.8);
        assert_abs_diff_eq!(up.mass(2), 0.2);
        let rest = activity_transition(&spec, 1, Action::Rest);
        assert_eq!(rest.len(), 1);
        assert_eq!(rest.mass(1), 1.0);
        let down = activity_transition(&spec, 3, Action::Rest);
        assert_abs_diff_eq!(down.mass(2), 0.1);
        assert_abs_diff_eq!(down.mass(3), 0.9);
        let top = activity_transition(&spec, 5, Action::Work);
        assert_eq!(top.len(), 1);
        assert_eq!(top.mass(5), 1.0);
    }

    #[test]
    fn work_kernel_case_list() {
        let spec = ServerSpec::reference();
        let lambda = 0.15;
        let s = 2;
        let pmf = x_transition(&spec, lambda, &x(s, Availability::Available, 2), Action::Work).unwrap();
        let m = spec.mu(s);
        let marginal = |w, q| -> f64 {
            (1..=spec.n_s())
                .map(|s2| pmf.mass(x(s2, w, q)))
                .sum()
        };
        assert_abs_diff_eq!(marginal(Availability::Available, 2), m * lambda, epsilon = 1e-15);
        assert_abs_diff_eq!(marginal(Availability::Available, 1), m * (1.0 - lambda), epsilon = 1e-15);
        assert_abs_diff_eq!(marginal(Availability::Busy, 3), (1.0 - m) * lambda, epsilon = 1e-15);
        assert_abs_diff_eq!(marginal(Availability::Busy, 2), (1.0 - m) * (1.0 - lambda), epsilon = 1e-15);
        assert!(pmf.len() <= 8);
        assert_abs_diff_eq!(pmf.total(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rest_kernel_case_list() {
        let spec = ServerSpec::reference();
        let pmf = x_transition(&spec, 0.3, &x(4, Availability::Available, 5), Action::Rest).unwrap();
        let avail = |q| -> f64 { (3..=4).map(|s| pmf.mass(x(s, Availability::Available, q))).sum() };
        assert_abs_diff_eq!(avail(6), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(avail(5), 0.7, epsilon = 1e-15);
        assert!(pmf.iter().all(|(n, _)| n.w() == Availability::Available));
    }

    #[test]
    fn inadmissible_rejected() {
        let spec = ServerSpec::reference();
        assert!(matches!(
            x_transition(&spec, 0.1, &x(1, Availability::Available, 0), Action::Work),
            Err(ModelError::Inadmissible { .. })
        ));
        assert!(matches!(
            ybar_kernel(&spec, ServerState::busy(2), Action::Rest),
            Err(ModelError::Inadmissible { .. })
        ));
        assert!(matches!(
            x_transition(&spec, 1.0, &x(1, Availability::Available, 0), Action::Rest),
            Err(ModelError::ArrivalRate(_))
        ));
    }

    #[test]
    fn reduced_kernel_availability() {
        let spec = ServerSpec::new(vec![0.5, 0.5], vec![0.3, 0.0], vec![0.0, 0.4]).unwrap();
        let rest = ybar_kernel(&spec, ServerState::available(2), Action::Rest).unwrap();
        assert!(rest.iter().all(|(y, _)| y.w == Availability::Available));
        let work = ybar_kernel(&spec, ServerState::busy(1), Action::Work).unwrap();
        let a: f64 = work.iter().filter(|(y, _)| y.w == Availability::Available).map(|(_, p)| p).sum();
        assert_abs_diff_eq!(a, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(work.total(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn spec_validation() {
        assert_eq!(ServerSpec::new(vec![], vec![], vec![]), Err(ModelError::NoStates));
        assert!(matches!(
            ServerSpec::new(vec![1.0], vec![0.0], vec![0.0]),
            Err(ModelError::OutOfRange { field: "mu", .. })
        ));
        assert!(matches!(
            ServerSpec::new(vec![0.5, 0.5], vec![0.3, 0.1], vec![0.0, 0.4]),
            Err(ModelError::OutOfRange { field: "rho_up", s: 2, .. })
        ));
        assert!(matches!(
            ServerSpec::new(vec![0.5, 0.5], vec![0.3, 0.0], vec![0.1, 0.4]),
            Err(ModelError::OutOfRange { field: "rho_down", s: 1, .. })
        ));
        assert!(ServerSpec::new(vec![0.5], vec![0.0], vec![0.0]).is_ok());
    }

    fn arb_spec() -> impl Strategy<Value = ServerSpec> {
        (1usize..=6).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.01f64..0.99, n),
                proptest::collection::vec(0.01f64..0.99, n),
                proptest::collection::vec(0.01f64..0.99, n),
            )
                .prop_map(move |(mu, mut up, mut down)| {
                    up[n - 1] = 0.0;
                    down[0] = 0.0;
                    ServerSpec::new(mu, up, down).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn kernels_are_consistent(spec in arb_spec(), lambda in 0.01f64..0.99, s_raw in 1usize..=6, q in 0u64..4, busy: bool, work: bool) {
            let s = s_raw.min(spec.n_s());
            let w = if busy && q > 0 { Availability::Busy } else { Availability::Available };
            let x0 = x(s, w, q);
            for &a in admissible_actions_x(&x0) {
                let pmf = x_transition(&spec, lambda, &x0, a).unwrap();
                prop_assert!((pmf.total() - 1.0).abs() <= 1e-12);
                prop_assert!(pmf.iter().all(|(n, p)| p >= 0.0 && n.q().abs_diff(q) <= 1));
                if q >= 1 {
                    let reduced = ybar_kernel(&spec, x0.y(), a).unwrap();
                    for (y, m) in reduced.iter() {
                        let marginal: f64 = pmf.iter().filter(|(n, _)| n.y() == y).map(|(_, p)| p).sum();
                        prop_assert!((marginal - m).abs() <= 4.0 * f64::EPSILON);
                    }
                }
            }
            let a = if work || w == Availability::Busy { Action::Work } else { Action::Rest };
            prop_assert!((ybar_kernel(&spec, x0.y(), a).unwrap().total() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn reduced_matrix_rows_sum_to_one(spec in arb_spec(), raw in proptest::collection::vec(0.0f64..=1.0, 6)) {
            let phi = PolicyY::new(raw[..spec.n_s()].to_vec()).unwrap();
            let p = ybar_matrix(&spec, &phi);
            for i in 0..p.nrows() {
                prop_assert!((p.row(i).sum() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn index_order() {
        let spec = ServerSpec::reference();
        assert_eq!(spec.index(ServerState::available(1)), 0);
        assert_eq!(spec.index(ServerState::available(5)), 4);
        assert_eq!(spec.index(ServerState::busy(1)), 5);
        for i in 0..spec.state_count() {
            assert_eq!(spec.index(spec.state_at(i)), i);
        }
    }
}
