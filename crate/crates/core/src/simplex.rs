//! Small dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Problems are `min c.x` subject to linear rows and `x >= 0`. Sizes in this
//! crate are a few dozen variables, so the full tableau is kept in memory.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-12;
/// Phase-one optimum above this means the constraints are infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimplexError {
    #[error("row has {got} coefficients, program has {expected} variables")]
    Dimension { got: usize, expected: usize },
    #[error("simplex did not terminate within {0} pivots")]
    IterationLimit(usize),
    #[error("non-finite coefficient in program")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible { phase_one: f64 },
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            rows: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) -> Result<(), SimplexError> {
        if coeffs.len() != self.n_vars() {
            return Err(SimplexError::Dimension {
                got: coeffs.len(),
                expected: self.n_vars(),
            });
        }
        self.rows.push((coeffs, rel, rhs));
        Ok(())
    }

    pub fn solve(&self) -> Result<LpOutcome, SimplexError> {
        Tableau::build(self)?.run(self)
    }
}

/// Column layout: original variables, then one slack/surplus per inequality,
/// then one artificial per `>=` or `=` row.
struct Tableau {
    m: usize,
    n_struct: usize,
    n_cols: usize,
    first_artificial: usize,
    /// `m` rows of `n_cols + 1` entries; last entry is the right-hand side.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// Constraint matrix and rhs after sign normalization, for the final
    /// re-solve of the basic solution.
    orig: Vec<Vec<f64>>,
    active: Vec<bool>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Result<Self, SimplexError> {
        let n = lp.n_vars();
        if lp.objective.iter().any(|v| !v.is_finite())
            || lp.rows.iter().any(|(c, _, b)| !b.is_finite() || c.iter().any(|v| !v.is_finite()))
        {
            return Err(SimplexError::NonFinite);
        }
        let m = lp.rows.len();
        let normalized: Vec<(Vec<f64>, Relation, f64)> = lp
            .rows
            .iter()
            .map(|(c, rel, b)| {
                if *b < 0.0 {
                    let flipped = match rel {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (c.iter().map(|v| -v).collect(), flipped, -b)
                } else {
                    (c.clone(), *rel, *b)
                }
            })
            .collect();
        let n_slack = normalized.iter().filter(|r| r.1 != Relation::Eq).count();
        let n_art = normalized.iter().filter(|r| r.1 != Relation::Le).count();
        let first_artificial = n + n_slack;
        let n_cols = first_artificial + n_art;
        let mut a = vec![vec![0.0; n_cols + 1]; m];
        let mut basis = vec![0; m];
        let (mut slack, mut art) = (n, first_artificial);
        for (i, (c, rel, b)) in normalized.iter().enumerate() {
            a[i][..n].copy_from_slice(c);
            a[i][n_cols] = *b;
            match rel {
                Relation::Le => {
                    a[i][slack] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    a[i][slack] = -1.0;
                    slack += 1;
                    a[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    a[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        let orig = a.clone();
        Ok(Self {
            m,
            n_struct: n,
            n_cols,
            first_artificial,
            a,
            basis,
            orig,
            active: vec![true; m],
        })
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.n_cols + 1;
        let p = self.a[row][col];
        for j in 0..width {
            self.a[row][j] /= p;
        }
        self.a[row][col] = 1.0;
        let pivot_row = self.a[row].clone();
        for i in 0..self.m {
            if i == row || !self.active[i] {
                continue;
            }
            let f = self.a[i][col];
            if f != 0.0 {
                for j in 0..width {
                    self.a[i][j] -= f * pivot_row[j];
                }
                self.a[i][col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Runs Bland's rule on cost vector `cost` over columns `< limit`.
    /// Returns `false` when the objective is unbounded below.
    fn optimize(&mut self, cost: &[f64], limit: usize) -> Result<bool, SimplexError> {
        let max_iter = 50 * (self.n_cols + self.m + 10);
        for _ in 0..max_iter {
            let mut entering = None;
            for j in 0..limit {
                if self.basis.iter().enumerate().any(|(i, &b)| self.active[i] && b == j) {
                    continue;
                }
                let mut reduced = cost[j];
                for i in 0..self.m {
                    if self.active[i] {
                        reduced -= cost[self.basis[i]] * self.a[i][j];
                    }
                }
                if reduced < -COST_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                if !self.active[i] || self.a[i][col] <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.a[i][self.n_cols] / self.a[i][col];
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, r)) => {
                        if ratio < r - 1e-14 || (ratio <= r + 1e-14 && self.basis[i] < self.basis[k]) {
                            Some((i, ratio))
                        } else {
                            Some((k, r))
                        }
                    }
                };
            }
            match leave {
                None => return Ok(false),
                Some((row, _)) => self.pivot(row, col),
            }
        }
        Err(SimplexError::IterationLimit(max_iter))
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpOutcome, SimplexError> {
        let n_art = self.n_cols - self.first_artificial;
        if n_art > 0 {
            let mut cost = vec![0.0; self.n_cols];
            for c in cost.iter_mut().skip(self.first_artificial) {
                *c = 1.0;
            }
            self.optimize(&cost, self.n_cols)?;
            let phase_one: f64 = (0..self.m)
                .filter(|&i| self.basis[i] >= self.first_artificial)
                .map(|i| self.a[i][self.n_cols])
                .sum();
            if phase_one > FEASIBILITY_TOL {
                return Ok(LpOutcome::Infeasible { phase_one });
            }
            // Drive zero-level artificials out; rows where that is impossible
            // are redundant and get dropped.
            for i in 0..self.m {
                if self.basis[i] < self.first_artificial {
                    continue;
                }
                let col = (0..self.first_artificial)
                    .filter(|&j| self.a[i][j].abs() > 1e-9)
                    .max_by(|&j, &k| self.a[i][j].abs().total_cmp(&self.a[i][k].abs()));
                match col {
                    Some(j) => self.pivot(i, j),
                    None => self.active[i] = false,
                }
            }
        }
        let mut cost = vec![0.0; self.n_cols];
        cost[..self.n_struct].copy_from_slice(&lp.objective);
        if !self.optimize(&cost, self.first_artificial)? {
            return Ok(LpOutcome::Unbounded);
        }
        let x = self.polish();
        let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpOutcome::Optimal { x, value })
    }

    /// Recomputes the basic solution from the original rows with an LU
    /// solve, removing tableau round-off.
    fn polish(&self) -> Vec<f64> {
        let rows: Vec<usize> = (0..self.m).filter(|&i| self.active[i]).collect();
        let k = rows.len();
        let cols: Vec<usize> = rows.iter().map(|&i| self.basis[i]).collect();
        let mut x = vec![0.0; self.n_cols];
        let b = DMatrix::from_fn(k, k, |r, c| self.orig[rows[r]][cols[c]]);
        let rhs = DVector::from_fn(k, |r, _| self.orig[rows[r]][self.n_cols]);
        match b.lu().solve(&rhs) {
            Some(sol) => {
                for (c, &j) in cols.iter().enumerate() {
                    x[j] = sol[c].max(0.0);
                }
            }
            None => {
                for &i in &rows {
                    x[self.basis[i]] = self.a[i][self.n_cols].max(0.0);
                }
            }
        }
        x.truncate(self.n_struct);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn optimal(o: LpOutcome) -> (Vec<f64>, f64) {
        match o {
            LpOutcome::Optimal { x, value } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36.
        let mut lp = LinearProgram::new(vec![-3.0, -5.0]);
        lp.add(vec![1.0, 0.0], Relation::Le, 4.0).unwrap();
        lp.add(vec![0.0, 2.0], Relation::Le, 12.0).unwrap();
        lp.add(vec![3.0, 2.0], Relation::Le, 18.0).unwrap();
        let (x, v) = optimal(lp.solve().unwrap());
        assert_abs_diff_eq!(v, -36.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 6.0, epsilon = 1e-12);
    }

    #[test]
    fn equalities_and_redundant_row() {
        // min x + 2y + 3z s.t. x + y + z = 1, 2x + 2y + 2z = 2, y - z >= 0.2.
        let mut lp = LinearProgram::new(vec![1.0, 2.0, 3.0]);
        lp.add(vec![1.0, 1.0, 1.0], Relation::Eq, 1.0).unwrap();
        lp.add(vec![2.0, 2.0, 2.0], Relation::Eq, 2.0).unwrap();
        lp.add(vec![0.0, 1.0, -1.0], Relation::Ge, 0.2).unwrap();
        let (x, v) = optimal(lp.solve().unwrap());
        assert_abs_diff_eq!(v, 0.8 + 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 0.2, epsilon = 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add(vec![1.0], Relation::Ge, 2.0).unwrap();
        lp.add(vec![1.0], Relation::Le, 1.0).unwrap();
        assert!(matches!(lp.solve().unwrap(), LpOutcome::Infeasible { .. }));
        let mut lp = LinearProgram::new(vec![-1.0, 0.0]);
        lp.add(vec![1.0, -1.0], Relation::Le, 1.0).unwrap();
        assert_eq!(lp.solve().unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn negative_rhs_flipped() {
        // -x <= -3  <=>  x >= 3.
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add(vec![-1.0], Relation::Le, -3.0).unwrap();
        let (x, _) = optimal(lp.solve().unwrap());
        assert_abs_diff_eq!(x[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the textbook largest-coefficient rule.
        let mut lp = LinearProgram::new(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.add(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0).unwrap();
        lp.add(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0).unwrap();
        lp.add(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0).unwrap();
        let (_, v) = optimal(lp.solve().unwrap());
        assert_abs_diff_eq!(v, -0.05, epsilon = 1e-12);
    }

    #[test]
    fn dimension_checked() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        assert!(matches!(lp.add(vec![1.0], Relation::Le, 1.0), Err(SimplexError::Dimension { .. })));
    }
}
