//! BSDE drivers `f̃(e_i, t, y, z)`.
//!
//! Every driver here only sees `z` through differences `z_j − z_i` weighted by
//! the jump rates out of the current state, which makes it invariant under the
//! `∼_M` equivalence: adding a constant to `z`, or changing a coordinate the
//! chain cannot jump to, leaves the value unchanged.

use std::cmp::Ordering;

use crate::chain::{Generator, State};
use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::scalar::{to_f64, Real};

/// A Markovian driver.
pub trait Driver<T: Real>: Send + Sync {
    /// Evaluates `f̃(e_state, t, y, z)` against `rates`, the rate matrix active
    /// at `t`. Inputs are assumed consistent (`z.len() == rates.dim()`).
    fn eval_with(&self, state: usize, t: T, y: T, z: &[T], rates: &SquareMatrix<T>) -> T;

    /// Checked evaluation against a generator.
    fn eval(&self, state: State, t: T, y: T, z: &[T], gen: &Generator<T>) -> Result<T> {
        gen.check_state(state)?;
        if z.len() != gen.n_states() {
            return Err(Error::DimensionMismatch {
                expected: gen.n_states(),
                got: z.len(),
            });
        }
        Ok(self.eval_with(state.0, t, y, z, gen.matrix_at(&t)))
    }
}

/// The drivers that can be declared in a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriverSpec<T> {
    Zero,
    /// `intercept + y_coeff·y + drift_coeff·(zᵀ A e_i)`.
    Affine {
        intercept: T,
        y_coeff: T,
        drift_coeff: T,
    },
    /// `min_{r ∈ [1/α, α]} (r − 1)·(zᵀ A e_i)`: worst case over scalings `rA`
    /// of the jump rates out of the current state.
    RateUncertainty { alpha: T },
    /// `zᵀ(Ã^z − A) e_i` with `Ã^z` the minmaxvar-distorted rates.
    Minmaxvar { gamma: T },
}

impl<T: Real> DriverSpec<T> {
    pub fn rate_uncertainty(alpha: T) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self::RateUncertainty { alpha })
    }

    pub fn minmaxvar(gamma: T) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self::Minmaxvar { gamma })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::RateUncertainty { alpha } => check_alpha(alpha),
            Self::Minmaxvar { gamma } => check_gamma(gamma),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Affine { .. } => "affine",
            Self::RateUncertainty { .. } => "rate_uncertainty",
            Self::Minmaxvar { .. } => "minmaxvar",
        }
    }
}

impl<T: Real> Driver<T> for DriverSpec<T> {
    fn eval_with(&self, state: usize, _t: T, y: T, z: &[T], rates: &SquareMatrix<T>) -> T {
        match *self {
            Self::Zero => eval_zero(),
            Self::Affine {
                intercept,
                y_coeff,
                drift_coeff,
            } => intercept + y_coeff * y + drift_coeff * drift(z, rates, state),
            Self::RateUncertainty { alpha } => rate_uncertainty_unchecked(drift(z, rates, state), alpha),
            Self::Minmaxvar { gamma } => minmaxvar_unchecked(z, rates, state, gamma),
        }
    }
}

fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if alpha >= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(to_f64(&alpha)))
    }
}

fn check_gamma<T: Real>(gamma: T) -> Result<()> {
    if gamma >= T::zero() && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidGamma(to_f64(&gamma)))
    }
}

/// `zᵀ A e_i`, computed as `Σ_{j≠i} A_ji (z_j − z_i)` (equal when the column
/// sums to zero, and exactly shift-invariant in floating point).
pub fn drift<T: Real>(z: &[T], rates: &SquareMatrix<T>, state: usize) -> T {
    let zi = z[state];
    (0..z.len())
        .filter(|&j| j != state)
        .map(|j| rates[(j, state)] * (z[j] - zi))
        .sum()
}

pub fn eval_zero<T: Real>() -> T {
    T::zero()
}

/// Rate-uncertainty driver, with `s = zᵀ A e_state`. The objective is linear in
/// `r`, so the minimum sits at an endpoint: `(1/α − 1)·s` when `s ≥ 0`,
/// `(α − 1)·s` otherwise.
pub fn eval_rate_uncertainty<T: Real>(
    state: State,
    z: &[T],
    rates: &SquareMatrix<T>,
    alpha: T,
) -> Result<T> {
    check_alpha(alpha)?;
    check_dims(state, z, rates)?;
    Ok(rate_uncertainty_unchecked(drift(z, rates, state.0), alpha))
}

fn rate_uncertainty_unchecked<T: Real>(s: T, alpha: T) -> T {
    if s >= T::zero() {
        s / alpha - s
    } else {
        s * alpha - s
    }
}

fn check_dims<T: Real>(state: State, z: &[T], rates: &SquareMatrix<T>) -> Result<()> {
    if z.len() != rates.dim() {
        return Err(Error::DimensionMismatch {
            expected: rates.dim(),
            got: z.len(),
        });
    }
    if state.0 >= rates.dim() {
        return Err(Error::StateOutOfRange {
            index: state.0,
            n_states: rates.dim(),
        });
    }
    Ok(())
}

/// Distorted jump rates out of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortedRates<T> {
    pub state: usize,
    /// Full distorted column: off-current entries are the distorted rates, the
    /// current entry balances the column to zero.
    pub rates: Vec<T>,
    /// Sort permutation: `order[k]` is the state in sorted position `k`.
    pub order: Vec<usize>,
    /// Cumulative positive-part rates in sorted order.
    pub cumulative: Vec<T>,
}

impl<T: Real> DistortedRates<T> {
    /// Total off-current distorted rate.
    pub fn off_current_mass(&self) -> T {
        self.rates
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != self.state)
            .map(|(_, &q)| q)
            .sum()
    }
}

/// Stable ascending sort of indices by `(z_i, i)`.
fn sort_order<T: Real>(z: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| {
        z[a].partial_cmp(&z[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Minmaxvar rate distortion.
///
/// 1. sort states by `z` ascending (ties by index);
/// 2. `G(k)` = cumulative positive-part rates into the sorted states, the
///    current state contributing zero;
/// 3. `ψ(G) = (1 − (1 − x^{1/(1+γ)})^{1+γ})(G(N) − G(1)) + G(1)` with
///    `x = (G − G(1))/(G(N) − G(1))`;
/// 4. `q_1 = G(1)`, `q_k = ψ(G(k)) − ψ(G(k−1))`;
/// 5. unsort, and set the current entry so the column sums to zero.
///
/// States the chain cannot jump to carry no rate and are skipped when picking
/// the anchor `G(1)`, so their `z` values never influence the result.
///
/// With `γ = 0`, or when `G(N) = G(1)`, the original rates come back unchanged.
pub fn distort_rates<T: Real>(
    z: &[T],
    rates: &SquareMatrix<T>,
    state: State,
    gamma: T,
) -> Result<DistortedRates<T>> {
    check_gamma(gamma)?;
    check_dims(state, z, rates)?;
    Ok(distort_unchecked(z, rates, state.0, gamma))
}

fn distort_unchecked<T: Real>(
    z: &[T],
    rates: &SquareMatrix<T>,
    state: usize,
    gamma: T,
) -> DistortedRates<T> {
    let n = z.len();
    let order = sort_order(z);
    let positive = |i: usize| {
        if i == state {
            T::zero()
        } else {
            rates[(i, state)].max(T::zero())
        }
    };
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = T::zero();
    for &i in &order {
        acc = acc + positive(i);
        cumulative.push(acc);
    }
    let anchor = order
        .iter()
        .position(|&i| i == state || positive(i) > T::zero())
        .unwrap_or(0);
    let g1 = cumulative[anchor];
    let gn = cumulative[n - 1];
    let span = gn - g1;

    let mut out = vec![T::zero(); n];
    if gamma == T::zero() || !(span > T::zero()) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = positive(i);
        }
    } else {
        let one = T::one();
        let expo = one + gamma;
        let psi = |g: T| {
            let x = ((g - g1) / span).max(T::zero()).min(one);
            (one - (one - x.powf(one / expo)).powf(expo)) * span + g1
        };
        let mut prev = psi(g1);
        out[order[anchor]] = g1;
        for k in anchor + 1..n {
            let cur = psi(cumulative[k]);
            out[order[k]] = cur - prev;
            prev = cur;
        }
    }
    out[state] = T::zero();
    let total: T = out.iter().copied().sum();
    out[state] = -total;
    DistortedRates {
        state,
        rates: out,
        order,
        cumulative,
    }
}

/// `Σ_i z_i (Ã_{i,state} − A_{i,state})`, evaluated as
/// `Σ_{i≠state} (z_i − z_state)(Ã_{i,state} − A_{i,state})`.
pub fn eval_minmaxvar<T: Real>(
    state: State,
    z: &[T],
    rates: &SquareMatrix<T>,
    gamma: T,
) -> Result<T> {
    check_gamma(gamma)?;
    check_dims(state, z, rates)?;
    Ok(minmaxvar_unchecked(z, rates, state.0, gamma))
}

fn minmaxvar_unchecked<T: Real>(z: &[T], rates: &SquareMatrix<T>, state: usize, gamma: T) -> T {
    if gamma == T::zero() {
        return T::zero();
    }
    let d = distort_unchecked(z, rates, state, gamma);
    let zs = z[state];
    (0..z.len())
        .filter(|&i| i != state)
        .map(|i| (z[i] - zs) * (d.rates[i] - rates[(i, state)]))
        .sum()
}
