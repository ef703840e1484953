use nalgebra::{DMatrix, DVector};

use super::{communicating_classes, stationary_pmf, ChainError};

/// Relative-value function of an average-reward chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialFunction {
    /// Nonnegative, with minimum entry zero.
    pub h: Vec<f64>,
    pub r_avg: f64,
}

impl PotentialFunction {
    /// Max over states of `|E[R | m] - E[h(next) - h(m) | m] - r_avg|`.
    pub fn identity_residual<R: Fn(usize, usize) -> f64>(&self, p: &DMatrix<f64>, reward: R) -> f64 {
        let n = p.nrows();
        (0..n)
            .map(|m| {
                let mut lhs = 0.0;
                for l in 0..n {
                    let pr = p[(m, l)];
                    if pr != 0.0 {
                        lhs += pr * (reward(m, l) - (self.h[l] - self.h[m]));
                    }
                }
                (lhs - self.r_avg).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn expected_reward<R: Fn(usize, usize) -> f64>(p: &DMatrix<f64>, reward: &R, m: usize) -> f64 {
    (0..p.ncols())
        .filter(|&l| p[(m, l)] != 0.0)
        .map(|l| p[(m, l)] * reward(m, l))
        .sum()
}

/// Solves for `h` with `E[R | m] - E[h(next) - h(m) | m] = r_avg` at every
/// state. `reward(from, to)` is the reward of a one-step transition.
///
/// The anchor is the smallest state of the recurrent class; its value is
/// pinned to zero and the remaining equations form a nonsingular system.
pub fn potential_function<R: Fn(usize, usize) -> f64>(
    p: &DMatrix<f64>,
    reward: R,
) -> Result<PotentialFunction, ChainError> {
    let n = p.nrows();
    let pi = stationary_pmf(p)?;
    let anchor = communicating_classes(p)
        .unique_recurrent()
        .map(|c| c.states[0])
        .ok_or(ChainError::Numerical("no recurrent class"))?;
    let exp_r: Vec<f64> = (0..n).map(|m| expected_reward(p, &reward, m)).collect();
    let r_avg: f64 = (0..n).map(|m| pi.prob(m) * exp_r[m]).sum();

    let rest: Vec<usize> = (0..n).filter(|&m| m != anchor).collect();
    let k = rest.len();
    let b = DMatrix::from_fn(k, k, |j, l| {
        let (sj, sl) = (rest[j], rest[l]);
        if j == l {
            1.0 - p[(sj, sj)]
        } else {
            -p[(sj, sl)]
        }
    });
    let xi = DVector::from_fn(k, |j, _| r_avg - exp_r[rest[j]]);
    let f = if k == 0 {
        DVector::zeros(0)
    } else {
        b.lu()
            .solve(&xi)
            .ok_or(ChainError::Numerical("singular potential system"))?
    };
    let mut h = vec![0.0; n];
    for (j, &m) in rest.iter().enumerate() {
        h[m] = f[j];
    }
    let min = h.iter().copied().fold(f64::INFINITY, f64::min);
    for v in &mut h {
        *v -= min;
    }
    Ok(PotentialFunction { h, r_avg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    use crate::chain::{service_rate, PolicyY};
    use crate::model::{ybar_matrix, ServerSpec};

    #[test]
    fn constant_reward_gives_flat_potential() {
        let spec = ServerSpec::reference();
        let p = ybar_matrix(&spec, &PolicyY::threshold(5, 4).unwrap());
        let pf = potential_function(&p, |_, _| 2.5).unwrap();
        assert_abs_diff_eq!(pf.r_avg, 2.5, epsilon = 1e-12);
        for &v in &pf.h {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn service_reward_recovers_service_rate() {
        let spec = ServerSpec::reference();
        for tau in 2..=6 {
            let phi = PolicyY::threshold(5, tau).unwrap();
            let p = ybar_matrix(&spec, &phi);
            let reward = |from: usize, _to: usize| {
                let y = spec.state_at(from);
                spec.mu(y.s) * phi.work_prob(y)
            };
            let pf = potential_function(&p, reward).unwrap();
            assert!(pf.identity_residual(&p, reward) <= 1e-9);
            assert_abs_diff_eq!(pf.r_avg, service_rate(&spec, &phi).unwrap(), epsilon = 1e-10);
            assert_eq!(pf.h.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        }
    }

    #[test]
    fn transition_dependent_reward() {
        let p = DMatrix::from_row_slice(3, 3, &[0.2, 0.5, 0.3, 0.4, 0.4, 0.2, 0.1, 0.1, 0.8]);
        let reward = |from: usize, to: usize| (from as f64) - 2.0 * (to as f64);
        let pf = potential_function(&p, reward).unwrap();
        assert!(pf.identity_residual(&p, reward) <= 1e-12);
    }
}
