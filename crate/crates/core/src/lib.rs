//! Backward stochastic differential equations driven by finite-state
//! continuous-time Markov chains.
//!
//! A BSDE `dY = −f(t, Y, Z) dt + Zᵀ dM` on a chain `X` with Markovian driver has
//! the Markovian solution `Y_t = u(t, X_t)` exactly when `u` solves the coupled
//! ODE system `du/dt = −(f(t, u) + Aᵀ_t u)`, with `Z_t = u_t`. This crate solves
//! that system backward from a terminal payoff, prices claims under concave
//! drivers (rate uncertainty, minmaxvar rate distortion) as bid/ask pairs, and
//! cross-checks the results with regression Monte Carlo and a pathwise replay of
//! the forward dynamics.
//!
//! Rate matrices use the column convention: entry `(i, j)` is the rate from
//! state `j` to state `i`.
//!
//! Everything numeric is generic over [`Real`] (`f32`, `f64`); the exact
//! algebra in [`chain`] also accepts rationals through [`Field`].

pub mod chain;
pub mod drivers;
pub mod error;
mod linalg;
pub mod matrix;
pub mod mc;
pub mod ode;
pub mod pricing;
pub mod scalar;

pub use chain::{
    m_equivalent, psi, seminorm_sq, simulate_path, validate_generator, ChainPath, Generator, PsiMatrix, State,
    ValidationOptions,
};
pub use drivers::{distort_rates, drift, eval_minmaxvar, eval_rate_uncertainty, eval_zero, DistortedRates, Driver, DriverSpec};
pub use error::{Error, Result};
pub use matrix::SquareMatrix;
pub use mc::{mc_solve, pathwise_verify, Basis, MCConfig, MCEstimate, PathwiseOptions, PathwiseReport};
pub use ode::{bid_ask, build_vector_field, solve_backward, solve_backward_dense, solve_backward_with, validate_split, IntegratorConfig, SplitProblem, ValueSurface};
pub use pricing::{build_synthetic_chain, butterfly, digital_knockout_terminal, Payoff, PriceMap, PricingProblem, VolatilityProfile};
pub use scalar::{Field, Real};

pub type Generator64 = Generator<f64>;
pub type Generator32 = Generator<f32>;
pub type DriverSpec64 = DriverSpec<f64>;
pub type ValueSurface64 = ValueSurface<f64>;
pub type ValueSurface32 = ValueSurface<f32>;
pub type PricingProblem64 = PricingProblem<f64>;
pub type MCEstimate64 = MCEstimate<f64>;
pub type IntegratorConfig64 = IntegratorConfig<f64>;
