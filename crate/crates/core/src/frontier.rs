//! Minimal utilization as a function of the required service rate, built as
//! the lower convex hull of the threshold-policy rate pairs and the origin.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{best_threshold, threshold_rates, Rates};
use crate::model::ServerSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrontierError {
    #[error("arrival rate {lambda} is not stabilizable: maximal service rate is {nu_star}")]
    NotStabilizable { lambda: f64, nu_star: f64 },
    #[error("arrival rate {0} must be positive")]
    ArrivalRate(f64),
}

/// Piecewise-affine convex non-decreasing curve from `(0, 0)` to the maximal
/// service rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    breakpoints: Vec<(f64, f64)>,
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Lower hull by Andrew's monotone chain. Points sharing an x keep the
/// smallest y; collinear interior points are dropped.
pub fn lower_convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup_by(|later, kept| later.0 == kept.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let scale = ((a.0 - o.0).abs() + (a.1 - o.1).abs()) * ((p.0 - o.0).abs() + (p.1 - o.1).abs());
            if cross(o, a, p) <= 1e-12 * scale {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

impl Frontier {
    /// Builds the frontier from threshold rates (`table[tau - 1]`).
    pub fn from_threshold_rates(table: &[Rates]) -> Self {
        let nu_star = best_threshold(table).0;
        let mut points = vec![(0.0, 0.0)];
        points.extend(
            table
                .iter()
                .filter(|r| r.service <= nu_star)
                .map(|r| (r.service, r.utilization)),
        );
        Self {
            breakpoints: lower_convex_hull(&points),
        }
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn max_rate(&self) -> f64 {
        self.breakpoints.last().map_or(0.0, |p| p.0)
    }

    /// Value at `nu`, or `None` outside `[0, max_rate]`.
    pub fn eval(&self, nu: f64) -> Option<f64> {
        let bp = &self.breakpoints;
        if !(0.0..=self.max_rate()).contains(&nu) {
            return None;
        }
        if bp.len() == 1 {
            return Some(bp[0].1);
        }
        let k = bp.partition_point(|p| p.0 < nu).clamp(1, bp.len() - 1);
        let (a, b) = (bp[k - 1], bp[k]);
        let t = (nu - a.0) / (b.0 - a.0);
        Some(a.1 + t * (b.1 - a.1))
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.breakpoints
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect()
    }

    /// `n` evenly spaced points over `[0, max_rate]`.
    pub fn sample(&self, n: usize) -> Vec<(f64, f64)> {
        let top = self.max_rate();
        (0..n)
            .map(|i| {
                let x = if n == 1 { 0.0 } else { top * i as f64 / (n - 1) as f64 };
                (x, self.eval(x.min(top)).expect("inside domain"))
            })
            .collect()
    }
}

pub fn frontier(spec: &ServerSpec) -> Frontier {
    Frontier::from_threshold_rates(&threshold_rates(spec))
}

/// Least long-run utilization of any policy that stabilizes arrival rate
/// `lambda`.
pub fn infimum_utilization(spec: &ServerSpec, lambda: f64) -> Result<f64, FrontierError> {
    let f = frontier(spec);
    infimum_from_frontier(&f, lambda)
}

pub fn infimum_from_frontier(f: &Frontier, lambda: f64) -> Result<f64, FrontierError> {
    if !(lambda > 0.0) {
        return Err(FrontierError::ArrivalRate(lambda));
    }
    let nu_star = f.max_rate();
    if lambda >= nu_star {
        return Err(FrontierError::NotStabilizable { lambda, nu_star });
    }
    Ok(f.eval(lambda).expect("inside domain"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use crate::lp::solve_lp;

    /// Brute-force lower envelope: minimum over all chords through pairs of
    /// points (and the points themselves) evaluated at `x`.
    fn envelope(points: &[(f64, f64)], x: f64) -> f64 {
        let mut best = f64::INFINITY;
        for &a in points {
            if a.0 == x {
                best = best.min(a.1);
            }
            for &b in points {
                if a.0 < x && x < b.0 {
                    let t = (x - a.0) / (b.0 - a.0);
                    best = best.min(a.1 + t * (b.1 - a.1));
                }
            }
        }
        best
    }

    #[test]
    fn hull_small_cases() {
        assert_eq!(lower_convex_hull(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]), vec![(0.0, 0.0), (2.0, 2.0)]);
        assert_eq!(
            lower_convex_hull(&[(0.0, 0.0), (1.0, 0.2), (2.0, 1.0)]),
            vec![(0.0, 0.0), (1.0, 0.2), (2.0, 1.0)]
        );
        assert_eq!(lower_convex_hull(&[(1.0, 3.0), (1.0, 2.0)]), vec![(1.0, 2.0)]);
    }

    #[test]
    fn example_breakpoints() {
        let f = frontier(&ServerSpec::reference());
        let bp = f.breakpoints();
        assert_eq!(bp.len(), 3);
        let expected = [(0.0, 0.0), (0.199297, 0.430913), (0.3, 0.857143)];
        for (got, want) in bp.iter().zip(expected) {
            assert_abs_diff_eq!(got.0, want.0, epsilon = 1e-6);
            assert_abs_diff_eq!(got.1, want.1, epsilon = 1e-6);
        }
        let s = f.slopes();
        assert!(s[0] >= 0.0 && s[0] <= s[1]);
    }

    #[test]
    fn frontier_values() {
        let spec = ServerSpec::reference();
        let f = frontier(&spec);
        assert_abs_diff_eq!(f.eval(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(f.eval(0.25).unwrap(), 0.645515, epsilon = 1e-6);
        assert_abs_diff_eq!(f.eval(0.15).unwrap(), 0.324324, epsilon = 1e-6);
        assert_eq!(f.eval(0.31), None);
        let corner = f.breakpoints()[1];
        assert_abs_diff_eq!(infimum_utilization(&spec, corner.0).unwrap(), corner.1, epsilon = 1e-15);
        assert!(infimum_utilization(&spec, 1e-9).unwrap() < 1e-8);
        assert!(matches!(
            infimum_utilization(&spec, 0.35),
            Err(FrontierError::NotStabilizable { .. })
        ));
    }

    #[test]
    fn dominated_points_give_single_segment() {
        let table = [
            Rates::ZERO,
            Rates { service: 0.1, utilization: 0.9 },
            Rates { service: 0.2, utilization: 0.5 },
        ];
        let f = Frontier::from_threshold_rates(&table);
        assert_eq!(f.breakpoints(), &[(0.0, 0.0), (0.2, 0.5)]);
    }

    #[test]
    fn matches_envelope_and_lp() {
        let spec = ServerSpec::reference();
        let table = threshold_rates(&spec);
        let mut pts = vec![(0.0, 0.0)];
        pts.extend(table.iter().map(|r| (r.service, r.utilization)));
        let f = Frontier::from_threshold_rates(&table);
        for i in 0..=40 {
            let x = f.max_rate() * i as f64 / 40.0;
            assert_abs_diff_eq!(f.eval(x).unwrap(), envelope(&pts, x), epsilon = 1e-12);
        }
        for i in 0..21 {
            let x = 0.003 + (0.297 - 0.003) * i as f64 / 20.0;
            let lp = solve_lp(&spec, x, 0.0).unwrap();
            assert_abs_diff_eq!(lp.value, f.eval(x).unwrap(), epsilon = 1e-6);
        }
    }

    #[test]
    fn sample_is_convex() {
        let f = frontier(&ServerSpec::reference());
        let s = f.sample(101);
        assert_eq!(s.len(), 101);
        for w in s.windows(3) {
            assert!(w[2].1 - 2.0 * w[1].1 + w[0].1 >= -1e-12);
            assert!(w[1].1 >= w[0].1);
        }
    }

    proptest! {
        #[test]
        fn hull_is_convex_and_below_points(raw in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..12)) {
            let mut pts = vec![(0.0, 0.0)];
            pts.extend(raw);
            let hull = lower_convex_hull(&pts);
            for w in hull.windows(3) {
                let s1 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                let s2 = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
                prop_assert!(s1 <= s2 + 1e-9);
            }
            for w in hull.windows(2) {
                prop_assert!(w[0].0 < w[1].0);
            }
            let f = Frontier { breakpoints: hull };
            for &(x, y) in &pts {
                if let Some(v) = f.eval(x) {
                    prop_assert!(v <= y + 1e-9);
                }
            }
        }
    }
}
