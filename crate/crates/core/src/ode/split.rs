//! Empirical check of the splitting condition
//! `|e_iᵀ(f(t,v) − f(t,v′))|² ≤ c (v − v′)ᵀ Ψ(A_t, e_i) (v − v′)`.
//!
//! With the column convention, `(v − v′)ᵀ Ψ(A, e_i)(v − v′)` only sees
//! coordinates `j` the chain can jump to from `i` (`A_ji > 0`), and is blind to
//! constant shifts, so `f_i` may depend on nothing else.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{psi_of_matrix, Generator, State};
use crate::drivers::Driver;
use crate::scalar::{lit, Real};

pub type Residual<'a, T> = Box<dyn Fn(T, &[T]) -> Vec<T> + Send + Sync + 'a>;

pub struct SplitProblem<'a, T> {
    pub generator: &'a Generator<T>,
    pub residual: Residual<'a, T>,
    /// Claimed modulus; when set, sampled ratios above it are violations.
    pub lipschitz: Option<T>,
}

/// `f_i(t, v) = f̃(e_i, t, v_i, v)` for a driver.
pub fn driver_residual<'a, T: Real, D: Driver<T> + ?Sized>(
    gen: &'a Generator<T>,
    driver: &'a D,
) -> Residual<'a, T> {
    Box::new(move |t, v| {
        let a = gen.matrix_at(&t);
        (0..v.len()).map(|i| driver.eval_with(i, t, v[i], v, a)).collect()
    })
}

#[derive(Debug, Clone)]
pub struct SplitOptions<T> {
    pub samples: usize,
    pub seed: u64,
    /// Base points are drawn uniformly from `[−scale, scale]^N`.
    pub scale: T,
}

impl<T: Real> Default for SplitOptions<T> {
    fn default() -> Self {
        Self {
            samples: 200,
            seed: 0,
            scale: T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitViolation<T> {
    pub t: T,
    pub component: usize,
    /// Coordinate that was perturbed by a probe; `None` for random pairs and
    /// constant shifts.
    pub coordinate: Option<usize>,
    pub numerator: T,
    pub denominator: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitReport<T> {
    /// Largest `numerator / denominator` over pairs with a non-zero seminorm:
    /// an empirical lower bound for `c`.
    pub max_ratio: T,
    pub pairs_checked: usize,
    pub violations: Vec<SplitViolation<T>>,
}

impl<T: Real> SplitReport<T> {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples pairs `(v, v′)` and tests the condition for every component.
///
/// Each sample uses a random pair, a constant-shift probe and one
/// single-coordinate probe per state. A pair whose seminorm is (numerically)
/// zero while `f_i` moves is a violation regardless of `c`.
pub fn validate_split<T: Real>(split: &SplitProblem<'_, T>, opts: &SplitOptions<T>) -> SplitReport<T> {
    let gen = split.generator;
    let n = gen.n_states();
    let horizon = *gen.horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let uniform = |rng: &mut ChaCha8Rng| lit::<T>(rng.gen_range(-1.0..1.0)) * opts.scale;
    let probe = opts.scale * lit(1e-3);
    let tiny = lit::<T>(1e-10);

    let mut report = SplitReport {
        max_ratio: T::zero(),
        pairs_checked: 0,
        violations: Vec::new(),
    };
    for _ in 0..opts.samples {
        let t = horizon * lit(rng.gen::<f64>());
        let rates = gen.matrix_at(&t);
        let v: Vec<T> = (0..n).map(|_| uniform(&mut rng)).collect();
        let fv = (split.residual)(t, &v);
        let psis: Vec<_> = (0..n).map(|i| psi_of_matrix(rates, State(i))).collect();
        let max_rates: Vec<T> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .fold(T::zero(), |m, j| m.max(rates[(j, i)]))
            })
            .collect();

        let mut pairs: Vec<(Option<usize>, Vec<T>)> = Vec::with_capacity(n + 2);
        pairs.push((None, (0..n).map(|_| uniform(&mut rng)).collect()));
        pairs.push((None, v.iter().map(|&x| x + probe).collect()));
        for j in 0..n {
            let mut w = v.clone();
            w[j] = w[j] + probe;
            pairs.push((Some(j), w));
        }

        for (coordinate, w) in pairs {
            let fw = (split.residual)(t, &w);
            let diff: Vec<T> = v.iter().zip(&w).map(|(&a, &b)| a - b).collect();
            let scale_sq: T = diff.iter().map(|&d| d * d).sum();
            for i in 0..n {
                let num = (fv[i] - fw[i]) * (fv[i] - fw[i]);
                let den = psis[i].quadratic_form(&diff);
                report.pairs_checked += 1;
                let den_floor = tiny * scale_sq * (max_rates[i] + T::one());
                let violation = if den <= den_floor {
                    num > tiny * scale_sq
                } else {
                    let ratio = num / den;
                    report.max_ratio = report.max_ratio.max(ratio);
                    matches!(split.lipschitz, Some(c) if ratio > c * (T::one() + tiny))
                };
                if violation {
                    report.violations.push(SplitViolation {
                        t,
                        component: i,
                        coordinate,
                        numerator: num,
                        denominator: den,
                    });
                }
            }
        }
    }
    report
}
