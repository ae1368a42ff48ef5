//! The coupled ODE system `du/dt = −(f(t, u) + Aᵀ_t u)` behind a Markovian
//! BSDE, integrated backward from `u_T = φ`.

mod integrator;
mod split;
mod surface;

pub use integrator::StepStats;
pub use split::{driver_residual, validate_split, Residual, SplitOptions, SplitProblem, SplitReport, SplitViolation};
pub use surface::ValueSurface;

use crate::chain::Generator;
use crate::drivers::{drift, Driver};
use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::pricing::PricingProblem;
use crate::scalar::{lit, to_f64, Real};

use integrator::{dopri5, rk4_step, AdaptiveOutcome, PiController, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegratorConfig<T> {
    /// Classical RK4 on a uniform grid of `steps` intervals (segment breakpoints
    /// are added as extra nodes).
    FixedRk4 { steps: usize },
    /// Dormand–Prince 5(4) with PI step control; the surface is reported on a
    /// uniform grid of `output_steps` intervals plus breakpoints.
    Adaptive {
        rel_tol: T,
        abs_tol: T,
        max_steps: usize,
        output_steps: usize,
    },
}

impl<T: Real> Default for IntegratorConfig<T> {
    fn default() -> Self {
        Self::Adaptive {
            rel_tol: lit(1e-6),
            abs_tol: lit(1e-9),
            max_steps: 1_000_000,
            output_steps: 100,
        }
    }
}

impl<T: Real> IntegratorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::FixedRk4 { steps } if steps == 0 => {
                Err(Error::InvalidConfig("fixed grid needs at least one step".into()))
            }
            Self::Adaptive {
                rel_tol,
                abs_tol,
                max_steps,
                output_steps,
            } => {
                if !(rel_tol > T::zero() && abs_tol > T::zero()) {
                    return Err(Error::InvalidConfig("tolerances must be positive".into()));
                }
                if max_steps == 0 || output_steps == 0 {
                    return Err(Error::InvalidConfig("step counts must be positive".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn grid_steps(&self) -> usize {
        match *self {
            Self::FixedRk4 { steps } => steps,
            Self::Adaptive { output_steps, .. } => output_steps,
        }
    }

    /// Local error scale `abs_tol + rel_tol·magnitude` of the adaptive method;
    /// `None` for the fixed grid.
    pub fn tolerance(&self, magnitude: T) -> Option<T> {
        match *self {
            Self::FixedRk4 { .. } => None,
            Self::Adaptive { rel_tol, abs_tol, .. } => Some(abs_tol + rel_tol * magnitude),
        }
    }
}

/// Evaluates `−(f(t, u) + Aᵀu)` into `out` for a fixed rate matrix, with the
/// components in `pinned` held still.
pub(crate) fn field_into<T: Real, D: Driver<T> + ?Sized>(
    driver: &D,
    rates: &SquareMatrix<T>,
    pinned: &[bool],
    t: T,
    u: &[T],
    out: &mut [T],
) {
    for i in 0..u.len() {
        out[i] = if pinned[i] {
            T::zero()
        } else {
            -(driver.eval_with(i, t, u[i], u, rates) + drift(u, rates, i))
        };
    }
}

/// The vector field `(t, u) ↦ −(f(t, u) + Aᵀ_t u)`, where component `i` of
/// `f` is `f̃(e_i, t, u_i, u)`.
pub fn build_vector_field<'a, T: Real, D: Driver<T> + ?Sized>(
    gen: &'a Generator<T>,
    driver: &'a D,
) -> impl Fn(T, &[T]) -> Result<Vec<T>> + 'a {
    let pinned = vec![false; gen.n_states()];
    move |t, u| {
        if u.len() != gen.n_states() {
            return Err(Error::DimensionMismatch {
                expected: gen.n_states(),
                got: u.len(),
            });
        }
        let mut out = vec![T::zero(); u.len()];
        field_into(driver, gen.matrix_at(&t), &pinned, t, u, &mut out);
        Ok(out)
    }
}

/// Uniform grid of `steps` intervals on `[0, horizon]` merged with the
/// generator's breakpoints.
fn output_grid<T: Real>(gen: &Generator<T>, steps: usize) -> Vec<T> {
    let horizon = *gen.horizon();
    let mut grid: Vec<T> = (0..=steps)
        .map(|k| {
            if k == steps {
                horizon
            } else {
                horizon * lit(k as f64) / lit(steps as f64)
            }
        })
        .collect();
    let eps = horizon * lit(1e-12);
    for seg in gen.segments().iter().skip(1) {
        let b = seg.start;
        match grid.iter().position(|&g| (g - b).abs() <= eps) {
            Some(k) => grid[k] = b,
            None => grid.push(b),
        }
    }
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    grid
}

/// Integrates backward from `terminal` at the horizon to 0 with `driver`,
/// holding `barrier_states` at zero.
pub fn solve_backward_with<T: Real, D: Driver<T> + ?Sized>(
    gen: &Generator<T>,
    terminal: &[T],
    barrier_states: &[usize],
    driver: &D,
    cfg: &IntegratorConfig<T>,
) -> Result<ValueSurface<T>> {
    solve_inner(gen, terminal, barrier_states, driver, cfg, false)
}

fn solve_inner<T: Real, D: Driver<T> + ?Sized>(
    gen: &Generator<T>,
    terminal: &[T],
    barrier_states: &[usize],
    driver: &D,
    cfg: &IntegratorConfig<T>,
    dense: bool,
) -> Result<ValueSurface<T>> {
    cfg.validate()?;
    let n = gen.n_states();
    if terminal.len() != n {
        return Err(Error::InvalidTerminal(format!(
            "expected {n} entries, got {}",
            terminal.len()
        )));
    }
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidTerminal("non-finite entry".into()));
    }
    let mut pinned = vec![false; n];
    for &b in barrier_states {
        if b >= n {
            return Err(Error::StateOutOfRange { index: b, n_states: n });
        }
        pinned[b] = true;
    }
    let pin = |u: &mut [T]| {
        for (v, &p) in u.iter_mut().zip(&pinned) {
            if p {
                *v = T::zero();
            }
        }
    };

    let times = output_grid(gen, cfg.grid_steps());
    let mut values = vec![Vec::new(); times.len()];
    let mut u = terminal.to_vec();
    pin(&mut u);
    values[times.len() - 1] = u.clone();

    let mut stats = StepStats::default();
    let mut ctl = PiController::new();
    let mut next = vec![T::zero(); n];
    let mut extra: Vec<(T, Vec<T>)> = Vec::new();
    for k in (0..times.len() - 1).rev() {
        let (t0, t1) = (times[k], times[k + 1]);
        // the interval lies inside one segment; look it up from its midpoint
        let rates = gen.matrix_at(&((t0 + t1) / lit(2.0)));
        let mut f = |t: T, y: &[T], out: &mut [T]| field_into(driver, rates, &pinned, t, y, out);
        match *cfg {
            IntegratorConfig::FixedRk4 { .. } => {
                rk4_step(&mut f, t1, &u, t0 - t1, &mut next);
                std::mem::swap(&mut u, &mut next);
                pin(&mut u);
                stats.accepted += 1;
            }
            IntegratorConfig::Adaptive {
                rel_tol,
                abs_tol,
                max_steps,
                ..
            } => {
                let tol = Tolerances {
                    rel: rel_tol,
                    abs: abs_tol,
                };
                let mut observe = |t: T, y: &[T]| {
                    if dense {
                        extra.push((t, y.to_vec()));
                    }
                };
                match dopri5(&mut f, &pin, &mut observe, t1, t0, &mut u, tol, &mut ctl, &mut stats, max_steps) {
                    AdaptiveOutcome::Done => {}
                    AdaptiveOutcome::StepLimit => return Err(Error::StepLimitExceeded(max_steps)),
                    AdaptiveOutcome::NonFinite => {
                        return Err(Error::NonFiniteState { t: to_f64(&t1) })
                    }
                }
            }
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: to_f64(&t0) });
        }
        values[k] = u.clone();
    }
    let (times, values) = if extra.is_empty() {
        (times, values)
    } else {
        let mut rows: Vec<(T, Vec<T>)> = times.into_iter().zip(values).chain(extra).collect();
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
        rows.into_iter().unzip()
    };
    let mut pinned_states: Vec<usize> = barrier_states.to_vec();
    pinned_states.sort_unstable();
    pinned_states.dedup();
    Ok(ValueSurface {
        times,
        values,
        pinned: pinned_states,
        labels: None,
        stats,
    })
}

/// Solves the problem's BSDE: the ask-price surface.
pub fn solve_backward<T: Real>(
    problem: &PricingProblem<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<ValueSurface<T>> {
    problem.driver.validate()?;
    let mut s = solve_backward_with(
        &problem.generator,
        &problem.terminal,
        &problem.barrier_states,
        &problem.driver,
        cfg,
    )?;
    s.labels = problem.price_map.as_ref().map(|p| p.prices().to_vec());
    Ok(s)
}

/// Like [`solve_backward`], but the adaptive method also reports every accepted
/// step, so the surface resolves fast transients between output times.
pub fn solve_backward_dense<T: Real>(
    problem: &PricingProblem<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<ValueSurface<T>> {
    problem.driver.validate()?;
    let mut s = solve_inner(
        &problem.generator,
        &problem.terminal,
        &problem.barrier_states,
        &problem.driver,
        cfg,
        true,
    )?;
    s.labels = problem.price_map.as_ref().map(|p| p.prices().to_vec());
    Ok(s)
}

/// `(bid, ask)`: ask solves with `φ`, bid is minus the solution with `−φ`.
pub fn bid_ask<T: Real>(
    problem: &PricingProblem<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<(ValueSurface<T>, ValueSurface<T>)> {
    let ask = solve_backward(problem, cfg)?;
    let short = problem.scaled(-T::one());
    // 0 - x keeps pinned zeros at +0
    let bid = solve_backward(&short, cfg)?.map(|v| T::zero() - v);
    Ok((bid, ask))
}
