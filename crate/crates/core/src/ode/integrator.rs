//! Explicit Runge–Kutta steppers. Steps may be negative (backward in time).

use crate::scalar::{lit, Real};

/// Classical fourth-order step from `(t, y)` over `h`.
pub(crate) fn rk4_step<T: Real>(
    f: &mut impl FnMut(T, &[T], &mut [T]),
    t: T,
    y: &[T],
    h: T,
    out: &mut [T],
) {
    let n = y.len();
    let two = lit::<T>(2.0);
    let half = h / two;
    let mut k1 = vec![T::zero(); n];
    let mut k2 = vec![T::zero(); n];
    let mut k3 = vec![T::zero(); n];
    let mut k4 = vec![T::zero(); n];
    let mut tmp = vec![T::zero(); n];
    f(t, y, &mut k1);
    for i in 0..n {
        tmp[i] = y[i] + half * k1[i];
    }
    f(t + half, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = y[i] + half * k2[i];
    }
    f(t + half, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    f(t + h, &tmp, &mut k4);
    let sixth = h / lit(6.0);
    for i in 0..n {
        out[i] = y[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 5th-order weights minus embedded 4th-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerances<T> {
    pub rel: T,
    pub abs: T,
}

/// Step-size controller state carried across intervals.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PiController<T> {
    pub h: Option<T>,
    err_prev: T,
}

impl<T: Real> PiController<T> {
    pub fn new() -> Self {
        Self {
            h: None,
            err_prev: lit(1e-4),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

pub(crate) enum AdaptiveOutcome {
    Done,
    StepLimit,
    NonFinite,
}

/// Integrates `y` from `t0` to `t1` (either direction) with DOPRI5 and a PI
/// controller. `pin` is applied after every accepted step; `observe` sees each
/// accepted interior point.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dopri5<T: Real>(
    f: &mut impl FnMut(T, &[T], &mut [T]),
    pin: &impl Fn(&mut [T]),
    observe: &mut impl FnMut(T, &[T]),
    t0: T,
    t1: T,
    y: &mut [T],
    tol: Tolerances<T>,
    ctl: &mut PiController<T>,
    stats: &mut StepStats,
    max_steps: usize,
) -> AdaptiveOutcome {
    let n = y.len();
    let span = t1 - t0;
    if span == T::zero() {
        return AdaptiveOutcome::Done;
    }
    let dir = span.signum();
    let one = T::one();
    let safety = lit::<T>(0.9);
    let beta = lit::<T>(0.04);
    let expo = lit::<T>(0.2) - beta * lit(0.75);
    let (fac_min, fac_max) = (lit::<T>(0.2), lit::<T>(10.0));

    let mut k: Vec<Vec<T>> = vec![vec![T::zero(); n]; 7];
    let mut tmp = vec![T::zero(); n];
    let mut y_new = vec![T::zero(); n];
    let mut t = t0;
    // a cold start takes a tiny first step: the field at the starting point can
    // differ from its one-sided limit (ties in a sort-based driver)
    let mut h = ctl
        .h
        .map(|h| h.abs())
        .unwrap_or(span.abs() * lit(1e-6))
        .min(span.abs())
        * dir;
    f(t, y, &mut k[0]);

    loop {
        if stats.accepted + stats.rejected >= max_steps {
            return AdaptiveOutcome::StepLimit;
        }
        let remaining = t1 - t;
        let last = h.abs() >= remaining.abs() * (one - lit(1e-12));
        if last {
            h = remaining;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = T::zero();
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc = acc + lit::<T>(a) * kj[i];
                    }
                }
                tmp[i] = y[i] + h * acc;
            }
            if s == 6 {
                y_new.copy_from_slice(&tmp);
                pin(&mut y_new);
                f(t + h, &y_new, &mut k[6]);
            } else {
                f(t + lit::<T>(C[s]) * h, &tmp, &mut k[s]);
            }
        }
        let mut err_sq = T::zero();
        for i in 0..n {
            let e: T = (0..7).map(|s| lit::<T>(E[s]) * k[s][i]).sum::<T>() * h;
            let sc = tol.abs + tol.rel * y[i].abs().max(y_new[i].abs());
            err_sq = err_sq + (e / sc) * (e / sc);
        }
        let err = (err_sq / lit(n.max(1) as f64)).sqrt();
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            if h.abs() < span.abs() * lit(1e-14) {
                return AdaptiveOutcome::NonFinite;
            }
            stats.rejected += 1;
            h = h * fac_min;
            continue;
        }
        if err <= one {
            stats.accepted += 1;
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&y_new);
            let fsal = k[6].clone();
            k[0] = fsal;
            let fac = (err.max(lit(1e-10)).powf(expo) / ctl.err_prev.powf(beta) / safety)
                .max(one / fac_max)
                .min(one / fac_min);
            ctl.err_prev = err.max(lit(1e-4));
            let h_next = h / fac;
            if last {
                ctl.h = Some(h_next);
                return AdaptiveOutcome::Done;
            }
            observe(t, y);
            h = h_next;
        } else {
            stats.rejected += 1;
            let fac = (err.powf(expo) / safety).min(one / fac_min);
            h = h / fac;
        }
    }
}
