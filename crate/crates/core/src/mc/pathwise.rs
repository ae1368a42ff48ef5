//! Pathwise check: along simulated chain paths, evolve `Y` forward by
//! `dY = −f̃(X_{t−}, t, Y, Z_t) dt − Z_tᵀ A_t X_{t−} dt` between jumps and
//! `ΔY = Z_τᵀ(X_τ − X_{τ−})` at jumps, with `Z_t = u_t` read off the surface,
//! and compare against `u(t, X_t)` at every grid time.
//!
//! Between events `Y` is stepped with the two-stage Gauss–Legendre rule, whose
//! nodes are interior: the driver is never sampled at a grid time, where ties
//! in `u_T` can make it differ from its left limit.

use rand::Rng;
use rayon::prelude::*;

use crate::chain::{simulate_path_with, Generator, State};
use crate::drivers::{drift, Driver};
use crate::ode::field_into;
use crate::error::{Error, Result};
use crate::ode::ValueSurface;
use crate::scalar::{lit, Real};

use super::path_rng;

const MAX_PICARD: usize = 50;

#[derive(Debug, Clone)]
pub struct PathwiseOptions {
    pub n_paths: usize,
    pub seed: u64,
    /// Fixed start state; when `None` each path starts in a uniformly drawn
    /// non-pinned state.
    pub start: Option<State>,
    /// Sub-steps per surface interval. Above 1, `Z` inside each interval is
    /// re-integrated backward from the later row, so interpolation error no
    /// longer depends on the output grid; errors are still measured against
    /// the surface rows, at every sub-step.
    pub refine: usize,
}

impl Default for PathwiseOptions {
    fn default() -> Self {
        Self {
            n_paths: 1000,
            seed: 0,
            start: None,
            refine: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathwiseReport<T> {
    /// `max |Y_t − u(t, X_t)|` over paths and grid times.
    pub max_error: T,
    pub worst_path: usize,
    pub worst_time: T,
    pub n_paths: usize,
    pub total_jumps: usize,
}

impl<T: Real> PathwiseReport<T> {
    pub fn passed(&self, threshold: T) -> bool {
        self.max_error <= threshold
    }
}

/// Lagrange interpolant of the surface on one grid interval, through up to
/// four neighbouring rows inside the same generator segment.
struct Interval<'a, T> {
    t0: T,
    h: T,
    nodes: Vec<(T, &'a [T])>,
    u1: &'a [T],
}

impl<T: Real> Interval<'_, T> {
    fn z_at(&self, t: T, out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
        for (a, &(ta, row)) in self.nodes.iter().enumerate() {
            let w = self
                .nodes
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .fold(T::one(), |w, (_, &(tb, _))| w * (t - tb) / (ta - tb));
            for (o, &v) in out.iter_mut().zip(row) {
                *o = *o + w * v;
            }
        }
    }
}

/// Grid-row index ranges `[lo, hi]` of each interval's generator segment.
fn segment_rows<T: Real>(gen: &Generator<T>, times: &[T]) -> Vec<(usize, usize)> {
    let eps = *gen.horizon() * lit(1e-12);
    (0..times.len() - 1)
        .map(|k| {
            let seg = gen.segment_index_at(&((times[k] + times[k + 1]) / lit(2.0)));
            let start = gen.segments()[seg].start;
            let end = *gen.segment_end(seg);
            let lo = times.iter().position(|&t| t >= start - eps).unwrap_or(0);
            let hi = times.iter().rposition(|&t| t <= end + eps).unwrap_or(times.len() - 1);
            (lo.min(k), hi.max(k + 1))
        })
        .collect()
}

/// Gauss–Legendre stage data: nodes `c` and matrix `a`; both weights are ½.
fn gauss_legendre<T: Real>() -> ([T; 2], [[T; 2]; 2]) {
    let half = lit::<T>(0.5);
    let quarter = lit::<T>(0.25);
    let r = lit::<T>(3.0f64.sqrt() / 6.0);
    ([half - r, half + r], [[quarter, quarter - r], [quarter + r, quarter]])
}

/// Surface rows with `m − 1` extra rows per interval, each interval integrated
/// backward from its later row. Original rows are kept as they are.
fn refine_rows<T: Real, D: Driver<T> + ?Sized>(
    surface: &ValueSurface<T>,
    gen: &Generator<T>,
    driver: &D,
    pinned: &[bool],
    m: usize,
) -> (Vec<T>, Vec<Vec<T>>) {
    let n = surface.n_states();
    let (c, a) = gauss_legendre::<T>();
    let half = lit::<T>(0.5);
    let last = surface.times.len() - 1;
    let mut times = Vec::with_capacity(last * m + 1);
    let mut rows = Vec::with_capacity(last * m + 1);
    let mut k_stage = [vec![T::zero(); n], vec![T::zero(); n]];
    let mut next = [vec![T::zero(); n], vec![T::zero(); n]];
    let mut arg = vec![T::zero(); n];
    for k in 0..last {
        let (t0, t1) = (surface.times[k], surface.times[k + 1]);
        let rates = gen.matrix_at(&((t0 + t1) * half));
        let h = (t1 - t0) / lit(m as f64);
        let mut u = surface.values[k + 1].clone();
        let mut sub = Vec::with_capacity(m - 1);
        for step in 1..m {
            let top = t1 - h * lit((step - 1) as f64);
            // stage q sits at top − c_q h; the step is −h
            for q in 0..2 {
                field_into(driver, rates, pinned, top - c[q] * h, &u, &mut k_stage[q]);
            }
            for _ in 0..MAX_PICARD {
                for q in 0..2 {
                    for i in 0..n {
                        arg[i] = u[i] - h * (a[q][0] * k_stage[0][i] + a[q][1] * k_stage[1][i]);
                    }
                    field_into(driver, rates, pinned, top - c[q] * h, &arg, &mut next[q]);
                }
                let settled = next == k_stage;
                std::mem::swap(&mut next, &mut k_stage);
                if settled {
                    break;
                }
            }
            for i in 0..n {
                u[i] = u[i] - h * half * (k_stage[0][i] + k_stage[1][i]);
            }
            sub.push((t1 - h * lit(step as f64), u.clone()));
        }
        times.push(t0);
        rows.push(surface.values[k].clone());
        for (t, row) in sub.into_iter().rev() {
            times.push(t);
            rows.push(row);
        }
    }
    times.push(surface.times[last]);
    rows.push(surface.values[last].clone());
    (times, rows)
}

pub fn pathwise_verify<T: Real, D: Driver<T> + ?Sized>(
    surface: &ValueSurface<T>,
    gen: &Generator<T>,
    driver: &D,
    opts: &PathwiseOptions,
) -> Result<PathwiseReport<T>> {
    let n = gen.n_states();
    if surface.n_states() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: surface.n_states(),
        });
    }
    if surface.times.len() < 2 {
        return Err(Error::InvalidConfig("surface needs at least two grid times".into()));
    }
    let mut pinned = vec![false; n];
    for &b in &surface.pinned {
        pinned[b] = true;
    }
    let free: Vec<usize> = (0..n).filter(|&i| !pinned[i]).collect();
    if let Some(s) = opts.start {
        gen.check_state(s)?;
    }
    if free.is_empty() && opts.start.is_none() {
        return Err(Error::InvalidConfig("every state is pinned".into()));
    }

    let (times, rows) = if opts.refine > 1 {
        refine_rows(surface, gen, driver, &pinned, opts.refine)
    } else {
        (surface.times.clone(), surface.values.clone())
    };
    let times = &times;
    let intervals: Vec<Interval<'_, T>> = segment_rows(gen, times)
        .into_iter()
        .enumerate()
        .map(|(k, (lo, hi))| {
            // stencil k−1..=k+2, shifted to stay inside the segment
            let width = (hi - lo + 1).min(4);
            let first = k.saturating_sub(1).max(lo).min(hi + 1 - width);
            Interval {
                t0: times[k],
                h: times[k + 1] - times[k],
                nodes: (first..first + width)
                    .map(|r| (times[r], rows[r].as_slice()))
                    .collect(),
                u1: &rows[k + 1],
            }
        })
        .collect();

    let per_path: Vec<(T, T, usize)> = (0..opts.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(opts.seed, p);
            let start = opts
                .start
                .unwrap_or_else(|| State(free[rng.gen_range(0..free.len())]));
            let path = simulate_path_with(gen, start, &mut rng)?;
            Ok(run_path(gen, driver, &intervals, times, &pinned, &path.jumps, start))
        })
        .collect::<Result<_>>()?;

    let mut report = PathwiseReport {
        max_error: T::zero(),
        worst_path: 0,
        worst_time: T::zero(),
        n_paths: opts.n_paths,
        total_jumps: 0,
    };
    for (p, (err, at, jumps)) in per_path.into_iter().enumerate() {
        report.total_jumps += jumps;
        if err > report.max_error || err.is_nan() {
            report.max_error = err;
            report.worst_path = p;
            report.worst_time = at;
        }
    }
    Ok(report)
}

/// Returns `(max error, time of max, jumps)` for one path.
fn run_path<T: Real, D: Driver<T> + ?Sized>(
    gen: &Generator<T>,
    driver: &D,
    intervals: &[Interval<'_, T>],
    times: &[T],
    pinned: &[bool],
    jumps: &[(T, State)],
    start: State,
) -> (T, T, usize) {
    let n = gen.n_states();
    let mut z = vec![T::zero(); n];
    let mut state = start.0;
    let mut y = intervals[0].nodes[0].1[state];
    let mut dead = pinned[state];
    let mut j = 0;
    let mut worst = (T::zero(), T::zero());
    let half = lit::<T>(0.5);
    let (c, a) = gauss_legendre::<T>();
    let mut zs = [vec![T::zero(); n], vec![T::zero(); n]];

    for (k, iv) in intervals.iter().enumerate() {
        let rates = gen.matrix_at(&(iv.t0 + iv.h * half));
        let t_end = times[k + 1];
        let mut t = iv.t0;
        loop {
            let next_jump = jumps.get(j).filter(|(tau, _)| *tau <= t_end);
            let stop = next_jump.map_or(t_end, |(tau, _)| *tau);
            if !dead && stop > t {
                let h = stop - t;
                let mut drifts = [T::zero(); 2];
                for q in 0..2 {
                    iv.z_at(t + c[q] * h, &mut zs[q]);
                    drifts[q] = drift(&zs[q], rates, state);
                }
                let rhs = |q: usize, yq: T| -(driver.eval_with(state, t + c[q] * h, yq, &zs[q], rates) + drifts[q]);
                let mut f = [rhs(0, y), rhs(1, y)];
                for _ in 0..MAX_PICARD {
                    let stages = [
                        y + h * (a[0][0] * f[0] + a[0][1] * f[1]),
                        y + h * (a[1][0] * f[0] + a[1][1] * f[1]),
                    ];
                    let next = [rhs(0, stages[0]), rhs(1, stages[1])];
                    let settled = next == f;
                    f = next;
                    if settled {
                        break;
                    }
                }
                y = y + h * half * (f[0] + f[1]);
            }
            t = stop;
            match next_jump {
                Some(&(tau, new)) => {
                    if !dead {
                        iv.z_at(tau, &mut z);
                        y = y + z[new.0] - z[state];
                    }
                    state = new.0;
                    dead |= pinned[state];
                    j += 1;
                }
                None => break,
            }
        }
        let target = if dead { T::zero() } else { iv.u1[state] };
        let err = (y - target).abs();
        if err > worst.0 || err.is_nan() {
            worst = (err, t_end);
        }
    }
    (worst.0, worst.1, jumps.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::DriverSpec;
    use crate::matrix::SquareMatrix;
    use crate::ode::{solve_backward, IntegratorConfig};
    use crate::pricing::{build_synthetic_chain, Payoff, PricingProblem, VolatilityProfile};

    #[test]
    fn constant_surface_has_no_error() {
        let (g, _) = build_synthetic_chain(6, (10.0, 30.0), VolatilityProfile::flat(0.2), 1.0).unwrap();
        let s = ValueSurface {
            times: vec![0.0, 0.5, 1.0],
            values: vec![vec![2.0; 6]; 3],
            pinned: vec![],
            labels: None,
            stats: Default::default(),
        };
        let opts = PathwiseOptions { n_paths: 200, seed: 1, ..Default::default() };
        let r = pathwise_verify(&s, &g, &DriverSpec::Zero, &opts).unwrap();
        assert!(r.max_error <= 1e-14, "{}", r.max_error);
        assert!(r.total_jumps > 0);
    }

    #[test]
    fn zero_rates_track_time_integration() {
        let g = Generator::homogeneous(SquareMatrix::zeros(3), 1.0, &Default::default()).unwrap();
        let d = DriverSpec::Affine { intercept: 0.0, y_coeff: -0.5, drift_coeff: 0.0 };
        let prob = PricingProblem::from_terminal(g.clone(), vec![1.0, 2.0, 3.0], d).unwrap();
        let cfg = IntegratorConfig::<f64>::default();
        let s = solve_backward(&prob, &cfg).unwrap();
        let r = pathwise_verify(&s, &g, &d, &PathwiseOptions { n_paths: 30, seed: 2, ..Default::default() }).unwrap();
        assert_eq!(r.total_jumps, 0);
        assert!(r.max_error <= cfg.tolerance(3.0).unwrap(), "{}", r.max_error);
    }

    #[test]
    fn corrupted_surface_fails() {
        let (g, p) = build_synthetic_chain(10, (10.0, 30.0), VolatilityProfile::flat(0.2), 1.0).unwrap();
        let d = DriverSpec::RateUncertainty { alpha: 1.1 };
        let prob = PricingProblem::new(g.clone(), Some(p), Payoff::Butterfly, d).unwrap();
        let cfg = IntegratorConfig::<f64>::default();
        let mut s = solve_backward(&prob, &cfg).unwrap();
        let opts = PathwiseOptions { n_paths: 100, seed: 3, ..Default::default() };
        let good = pathwise_verify(&s, &g, &d, &opts).unwrap();
        assert!(good.max_error < 1e-4, "{}", good.max_error);
        s.values[0].iter_mut().for_each(|v| *v += 0.1);
        let bad = pathwise_verify(&s, &g, &d, &opts).unwrap();
        assert!(bad.max_error > 0.05);
    }

    #[test]
    fn refinement_removes_grid_interpolation_error() {
        let (g, p) = build_synthetic_chain(30, (10.0, 30.0), VolatilityProfile::flat(0.3), 1.0 / 12.0).unwrap();
        let d = DriverSpec::RateUncertainty { alpha: 1.1 };
        let prob = PricingProblem::new(g.clone(), Some(p), Payoff::Butterfly, d).unwrap();
        let cfg = IntegratorConfig::Adaptive { rel_tol: 1e-9, abs_tol: 1e-11, max_steps: 1_000_000, output_steps: 20 };
        let mut s = solve_backward(&prob, &cfg).unwrap();
        let plain = PathwiseOptions { n_paths: 200, seed: 4, ..Default::default() };
        let refined = PathwiseOptions { refine: 16, ..plain.clone() };
        let coarse = pathwise_verify(&s, &g, &d, &plain).unwrap().max_error;
        let fine = pathwise_verify(&s, &g, &d, &refined).unwrap().max_error;
        assert!(fine < 1e-5 && fine * 100.0 < coarse, "{fine} vs {coarse}");
        s.values[5].iter_mut().for_each(|v| *v += 0.01);
        assert!(pathwise_verify(&s, &g, &d, &refined).unwrap().max_error > 5e-3);
    }
}
