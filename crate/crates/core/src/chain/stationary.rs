use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{communicating_classes, ChainError};

/// Stationary distribution of a finite chain with one recurrent class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPmf {
    probs: Vec<f64>,
}

impl StationaryPmf {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Max-norm of `pi P - pi`.
    pub fn balance_residual(&self, p: &DMatrix<f64>) -> f64 {
        let pi = DVector::from_column_slice(&self.probs);
        (p.tr_mul(&pi) - &pi).amax()
    }
}

/// Solves `pi P = pi`, `sum pi = 1` on the recurrent class by a dense LU
/// solve with the normalization row replacing one balance row. Transient
/// states get zero mass.
pub fn stationary_pmf(p: &DMatrix<f64>) -> Result<StationaryPmf, ChainError> {
    let parts = communicating_classes(p);
    let class = match parts.unique_recurrent() {
        Some(c) => c,
        None => {
            return Err(ChainError::NonUnique {
                recurrent: parts.recurrent().map(|c| c.states.clone()).collect(),
            })
        }
    };
    let idx = &class.states;
    let m = idx.len();
    // Row i of the system is balance at state idx[i]: sum_j pi_j P_ji - pi_i = 0.
    let mut a = DMatrix::from_fn(m, m, |i, j| p[(idx[j], idx[i])] - if i == j { 1.0 } else { 0.0 });
    let mut b = DVector::zeros(m);
    a.row_mut(m - 1).fill(1.0);
    b[m - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or(ChainError::Numerical("singular balance system"))?;
    let mut probs = vec![0.0; p.nrows()];
    for (k, &i) in idx.iter().enumerate() {
        probs[i] = x[k].max(0.0);
    }
    let total: f64 = probs.iter().sum();
    for v in &mut probs {
        *v /= total;
    }
    Ok(StationaryPmf { probs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    use crate::chain::PolicyY;
    use crate::model::{ybar_matrix, ServerSpec};

    #[test]
    fn flip_flop() {
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let pi = stationary_pmf(&p).unwrap();
        assert_abs_diff_eq!(pi.prob(0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pi.prob(1), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn two_state_by_hand() {
        // 0.1 pi_1 = 0.3 pi_2 with pi_1 + pi_2 = 1.
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.3, 0.7]);
        let pi = stationary_pmf(&p).unwrap();
        assert_abs_diff_eq!(pi.prob(0), 0.75, epsilon = 1e-14);
        assert_abs_diff_eq!(pi.prob(1), 0.25, epsilon = 1e-14);
    }

    #[test]
    fn transient_states_get_zero() {
        let p = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.0, 0.2, 0.8, 0.0, 0.6, 0.4]);
        let pi = stationary_pmf(&p).unwrap();
        assert_eq!(pi.prob(0), 0.0);
        assert_abs_diff_eq!(pi.prob(1), 0.6 / 1.4, epsilon = 1e-14);
    }

    #[test]
    fn non_unique_reports_classes() {
        let p = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 0.0, 0.5, 0.0, 0.0, 1.0]);
        match stationary_pmf(&p) {
            Err(ChainError::NonUnique { recurrent }) => assert_eq!(recurrent, vec![vec![0], vec![2]]),
            other => panic!("unexpected {other:?}"),
        }
    }

    /// Power iteration as an independent check on the direct solve.
    fn power_iteration(p: &DMatrix<f64>) -> Vec<f64> {
        let n = p.nrows();
        let mut v = DVector::from_element(n, 1.0 / n as f64);
        // Lazy chain to avoid periodicity.
        let lazy = (p + DMatrix::identity(n, n)) * 0.5;
        for _ in 0..200_000 {
            v = lazy.tr_mul(&v);
        }
        v.iter().copied().collect()
    }

    #[test]
    fn matches_power_iteration_on_thresholds() {
        let spec = ServerSpec::reference();
        for tau in 2..=6 {
            let p = ybar_matrix(&spec, &PolicyY::threshold(5, tau).unwrap());
            let pi = stationary_pmf(&p).unwrap();
            let oracle = power_iteration(&p);
            for i in 0..p.nrows() {
                assert_abs_diff_eq!(pi.prob(i), oracle[i], epsilon = 1e-10);
            }
            assert!(pi.balance_residual(&p) <= 1e-10);
            assert_abs_diff_eq!(pi.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        }
    }
}
