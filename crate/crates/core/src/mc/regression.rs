//! Least-squares projection of per-path targets onto functions of the state.

use crate::linalg::{cholesky_solve, pinv_solve};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// One indicator per state; the fit is the per-state sample mean.
    StateIndicators,
    /// Powers `x^0..x^degree` of the standardised price.
    PricePolynomials { degree: usize },
}

/// Outcome of one regression.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit<T> {
    pub coefficients: Vec<T>,
    /// Fitted value per state; `None` where the basis gives no information.
    pub fitted: Vec<Option<T>>,
    pub unvisited: Vec<usize>,
    pub singular: bool,
}

/// Per-state sufficient statistics: counts and running means of the targets.
#[derive(Debug, Clone)]
pub(crate) struct StateMoments<T> {
    pub count: Vec<usize>,
    pub mean: Vec<T>,
}

impl<T: Real> StateMoments<T> {
    pub fn new(n: usize) -> Self {
        Self {
            count: vec![0; n],
            mean: vec![T::zero(); n],
        }
    }

    pub fn push(&mut self, state: usize, target: T) {
        self.count[state] += 1;
        let k = lit::<T>(self.count[state] as f64);
        // running mean: exact when all targets in a state coincide
        self.mean[state] = self.mean[state] + (target - self.mean[state]) / k;
    }
}

pub(crate) fn fit<T: Real>(basis: Basis, moments: &StateMoments<T>, prices: Option<&[T]>) -> Fit<T> {
    let n = moments.count.len();
    let unvisited: Vec<usize> = (0..n).filter(|&i| moments.count[i] == 0).collect();
    match basis {
        Basis::StateIndicators => {
            let fitted: Vec<Option<T>> = (0..n)
                .map(|i| (moments.count[i] > 0).then_some(moments.mean[i]))
                .collect();
            Fit {
                coefficients: fitted.iter().map(|v| v.unwrap_or(T::zero())).collect(),
                fitted,
                unvisited,
                singular: false,
            }
        }
        Basis::PricePolynomials { degree } => {
            let prices = prices.expect("polynomial basis requires prices");
            let x = standardise(prices);
            let m = degree + 1;
            let powers = |xi: T| {
                let mut p = Vec::with_capacity(m);
                let mut acc = T::one();
                for _ in 0..m {
                    p.push(acc);
                    acc = acc * xi;
                }
                p
            };
            let mut gram = vec![T::zero(); m * m];
            let mut rhs = vec![T::zero(); m];
            for i in 0..n {
                if moments.count[i] == 0 {
                    continue;
                }
                let w = lit::<T>(moments.count[i] as f64);
                let b = powers(x[i]);
                for r in 0..m {
                    rhs[r] = rhs[r] + w * b[r] * moments.mean[i];
                    for c in 0..m {
                        gram[r * m + c] = gram[r * m + c] + w * b[r] * b[c];
                    }
                }
            }
            let (coefficients, singular) = match cholesky_solve(&gram, &rhs, m) {
                Some(c) => (c, false),
                None => (pinv_solve(&gram, &rhs, m), true),
            };
            let fitted = (0..n)
                .map(|i| {
                    let b = powers(x[i]);
                    Some(b.iter().zip(&coefficients).map(|(&p, &c)| p * c).sum())
                })
                .collect();
            Fit {
                coefficients,
                fitted,
                unvisited,
                singular,
            }
        }
    }
}

fn standardise<T: Real>(prices: &[T]) -> Vec<T> {
    let n = lit::<T>(prices.len() as f64);
    let mean = prices.iter().copied().sum::<T>() / n;
    let var = prices.iter().map(|&p| (p - mean) * (p - mean)).sum::<T>() / n;
    let sd = if var > T::zero() { var.sqrt() } else { T::one() };
    prices.iter().map(|&p| (p - mean) / sd).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicators_give_state_means() {
        let mut m = StateMoments::new(3);
        for (s, v) in [(0, 1.0), (0, 3.0), (2, -1.0), (0, 2.0)] {
            m.push(s, v);
        }
        let f = fit(Basis::StateIndicators, &m, None);
        assert_eq!(f.fitted, vec![Some(2.0), None, Some(-1.0)]);
        assert_eq!(f.unvisited, vec![1]);
    }

    #[test]
    fn running_mean_exact_for_repeats() {
        let mut m = StateMoments::new(1);
        for _ in 0..100_000 {
            m.push(0, 0.1);
        }
        assert_eq!(m.mean[0], 0.1);
    }

    #[test]
    fn polynomial_recovers_linear_target() {
        let prices = [10.0f64, 12.0, 15.0, 20.0];
        let mut m = StateMoments::new(4);
        for (i, &p) in prices.iter().enumerate() {
            for _ in 0..=i {
                m.push(i, 2.0 * p - 3.0);
            }
        }
        let f = fit(Basis::PricePolynomials { degree: 1 }, &m, Some(&prices));
        assert!(!f.singular);
        for (i, &p) in prices.iter().enumerate() {
            assert!((f.fitted[i].unwrap() - (2.0 * p - 3.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_polynomial_is_flagged() {
        // a single visited state cannot identify a line
        let prices = [10.0f64, 20.0, 30.0];
        let mut m = StateMoments::new(3);
        m.push(1, 4.0);
        m.push(1, 6.0);
        let f = fit(Basis::PricePolynomials { degree: 1 }, &m, Some(&prices));
        assert!(f.singular);
        assert!((f.fitted[1].unwrap() - 5.0).abs() < 1e-10);
    }
}
