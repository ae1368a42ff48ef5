//! Regression Monte Carlo for Markov-chain BSDEs, and a pathwise check that a
//! solved surface reproduces the forward dynamics of `Y`.
//!
//! Forward: exact chain paths from a fixed start, recorded on `t_k = kT/M`.
//! Backward: from `u_T = φ`, each step forms per-path targets
//! `u_{k+1}(X_{k+1}) + f̃(X_{k+1}, t_k, u_{k+1}(X_{k+1}), u_{k+1})·Δt` and
//! projects them onto a basis evaluated at `X_k`.

mod pathwise;
mod regression;

pub use pathwise::{pathwise_verify, PathwiseOptions, PathwiseReport};
pub use regression::Basis;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chain::{simulate_path_with, State};
use crate::drivers::Driver;
use crate::error::{Error, Result};
use crate::pricing::PricingProblem;
use crate::scalar::{lit, Real};

use regression::{fit, StateMoments};

#[derive(Debug, Clone, PartialEq)]
pub struct MCConfig {
    pub n_paths: usize,
    /// Number of time steps `M`; `Δt = T/M`.
    pub n_steps: usize,
    pub basis: Basis,
    pub seed: u64,
    pub start: State,
    /// Batches for the batch-means standard error.
    pub batches: usize,
}

impl MCConfig {
    pub fn new(n_paths: usize, n_steps: usize, start: State, seed: u64) -> Self {
        Self {
            n_paths,
            n_steps,
            basis: Basis::StateIndicators,
            seed,
            start,
            batches: 32,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.n_steps == 0 || self.batches == 0 {
            return Err(Error::InvalidConfig(
                "n_paths, n_steps and batches must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Warnings raised by a regression stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageFlag {
    /// Rank-deficient normal equations; solved by pseudo-inverse.
    SingularRegression,
    /// No path sat in these states; their previous values were carried over.
    NoPathsVisitState(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionStage<T> {
    pub t_index: usize,
    pub coefficients: Vec<T>,
    /// `u_{t_k}` per state after the fit.
    pub fitted: Vec<T>,
    pub flags: Vec<StageFlag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MCEstimate<T> {
    pub u0_at_start: T,
    pub std_error: T,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Stage diagnostics from the full-sample pass, ordered by `t_index`.
    pub stages: Vec<RegressionStage<T>>,
    pub batch_estimates: Vec<T>,
}

impl<T: Real> MCEstimate<T> {
    /// `estimate=<..> std_error=<..> n_paths=<..> M=<..> seed=<..>`
    pub fn record(&self) -> String {
        format!(
            "estimate={} std_error={} n_paths={} M={} seed={}",
            self.u0_at_start, self.std_error, self.n_paths, self.n_steps, self.seed
        )
    }

    /// Per-stage CSV: `t_index,state_0,...`.
    pub fn stages_csv(&self) -> String {
        let n = self.stages.first().map_or(0, |s| s.fitted.len());
        let mut out = String::from("t_index");
        for i in 0..n {
            out.push_str(&format!(",state_{i}"));
        }
        out.push('\n');
        for s in &self.stages {
            out.push_str(&s.t_index.to_string());
            for v in &s.fitted {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Simulated paths on the regression grid.
pub(crate) struct GridPaths {
    stride: usize,
    /// `states[p * stride + k]` = state of path `p` at `t_k`.
    states: Vec<u32>,
    /// `knocked[p * stride + k]`: path `p` touched a barrier state in `(t_{k-1}, t_k]`.
    knocked: Vec<bool>,
}

impl GridPaths {
    fn state(&self, p: usize, k: usize) -> usize {
        self.states[p * self.stride + k] as usize
    }

    fn knocked(&self, p: usize, k: usize) -> bool {
        self.knocked[p * self.stride + k]
    }
}

/// Per-path RNG: one ChaCha stream per path index, so results do not depend on
/// thread scheduling.
pub(crate) fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn simulate_grid<T: Real>(problem: &PricingProblem<T>, cfg: &MCConfig, times: &[T]) -> Result<GridPaths> {
    let gen = &problem.generator;
    gen.check_state(cfg.start)?;
    let stride = times.len();
    let mut barrier = vec![false; gen.n_states()];
    for &b in &problem.barrier_states {
        barrier[b] = true;
    }
    let per_path: Vec<(Vec<u32>, Vec<bool>)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(cfg.seed, p);
            let path = simulate_path_with(gen, cfg.start, &mut rng)?;
            let states: Vec<u32> = path.sample(times).into_iter().map(|s| s.0 as u32).collect();
            let mut knocked = vec![false; stride];
            let mut j = 0;
            for k in 1..stride {
                let mut hit = barrier[states[k] as usize];
                while j < path.jumps.len() && path.jumps[j].0 <= times[k] {
                    hit |= barrier[path.jumps[j].1 .0];
                    j += 1;
                }
                knocked[k] = hit;
            }
            Ok((states, knocked))
        })
        .collect::<Result<_>>()?;
    let mut states = Vec::with_capacity(cfg.n_paths * stride);
    let mut knocked = Vec::with_capacity(cfg.n_paths * stride);
    for (s, k) in per_path {
        states.extend(s);
        knocked.extend(k);
    }
    Ok(GridPaths {
        stride,
        states,
        knocked,
    })
}

/// Backward regression over the paths `range`.
fn backward<T: Real, D: Driver<T> + ?Sized>(
    problem: &PricingProblem<T>,
    driver: &D,
    cfg: &MCConfig,
    times: &[T],
    paths: &GridPaths,
    range: std::ops::Range<usize>,
    keep_stages: bool,
) -> (T, Vec<RegressionStage<T>>) {
    let gen = &problem.generator;
    let n = gen.n_states();
    let m = cfg.n_steps;
    let dt = times[1] - times[0];
    let prices = problem.price_map.as_ref().map(|p| p.prices());
    let mut pinned = vec![false; n];
    for &b in &problem.barrier_states {
        pinned[b] = true;
    }
    let mut u = problem.terminal.clone();
    for (v, &p) in u.iter_mut().zip(&pinned) {
        if p {
            *v = T::zero();
        }
    }
    let mut stages = Vec::new();
    let mut fvals = vec![T::zero(); n];
    for k in (0..m).rev() {
        let t = times[k];
        let rates = gen.matrix_at(&t);
        for (i, fv) in fvals.iter_mut().enumerate() {
            *fv = driver.eval_with(i, t, u[i], &u, rates);
        }
        let mut moments = StateMoments::new(n);
        for p in range.clone() {
            let next = paths.state(p, k + 1);
            let target = if paths.knocked(p, k + 1) {
                T::zero()
            } else {
                u[next] + fvals[next] * dt
            };
            moments.push(paths.state(p, k), target);
        }
        let fitted = fit(cfg.basis, &moments, prices);
        let mut flags = Vec::new();
        if fitted.singular {
            flags.push(StageFlag::SingularRegression);
        }
        if !fitted.unvisited.is_empty() {
            flags.push(StageFlag::NoPathsVisitState(fitted.unvisited.clone()));
        }
        for i in 0..n {
            u[i] = if pinned[i] {
                T::zero()
            } else {
                fitted.fitted[i].unwrap_or(u[i])
            };
        }
        if keep_stages {
            stages.push(RegressionStage {
                t_index: k,
                coefficients: fitted.coefficients,
                fitted: u.clone(),
                flags,
            });
        }
    }
    stages.reverse();
    (u[cfg.start.0], stages)
}

/// Monte-Carlo estimate of `u_0(start)` for the problem's driver.
pub fn mc_solve<T: Real>(problem: &PricingProblem<T>, cfg: &MCConfig) -> Result<MCEstimate<T>> {
    mc_solve_with(problem, &problem.driver, cfg)
}

pub fn mc_solve_with<T: Real, D: Driver<T> + ?Sized>(
    problem: &PricingProblem<T>,
    driver: &D,
    cfg: &MCConfig,
) -> Result<MCEstimate<T>> {
    cfg.validate()?;
    if matches!(cfg.basis, Basis::PricePolynomials { .. }) && problem.price_map.is_none() {
        return Err(Error::InvalidConfig("polynomial basis needs a price map".into()));
    }
    let horizon = problem.horizon();
    let times: Vec<T> = (0..=cfg.n_steps)
        .map(|k| {
            if k == cfg.n_steps {
                horizon
            } else {
                horizon * lit(k as f64) / lit(cfg.n_steps as f64)
            }
        })
        .collect();
    let paths = simulate_grid(problem, cfg, &times)?;
    let (estimate, stages) = backward(problem, driver, cfg, &times, &paths, 0..cfg.n_paths, true);

    let b = cfg.batches.min(cfg.n_paths);
    let batch_estimates: Vec<T> = (0..b)
        .into_par_iter()
        .map(|j| {
            let lo = j * cfg.n_paths / b;
            let hi = (j + 1) * cfg.n_paths / b;
            backward(problem, driver, cfg, &times, &paths, lo..hi, false).0
        })
        .collect();
    let std_error = if b < 2 {
        T::zero()
    } else {
        let bf = lit::<T>(b as f64);
        let mean = batch_estimates
            .iter()
            .enumerate()
            .fold(T::zero(), |m, (k, &x)| m + (x - m) / lit(k as f64 + 1.0));
        let var = batch_estimates
            .iter()
            .map(|&x| (x - mean) * (x - mean))
            .sum::<T>()
            / (bf - T::one());
        (var / bf).sqrt()
    };
    Ok(MCEstimate {
        u0_at_start: estimate,
        std_error,
        n_paths: cfg.n_paths,
        n_steps: cfg.n_steps,
        seed: cfg.seed,
        stages,
        batch_estimates,
    })
}
