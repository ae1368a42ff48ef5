//! Payoffs on the price grid, knockout barriers and pricing problems.

use std::collections::BTreeSet;

use crate::chain::{validate_generator, Generator, ValidationOptions};
use crate::drivers::DriverSpec;
use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::scalar::{lit, to_f64, Real};

/// Stock price `S(e_i)` in each state.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceMap<T>(Vec<T>);

impl<T: Real> PriceMap<T> {
    pub fn new(prices: Vec<T>) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::InvalidRange("empty price map".into()));
        }
        if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p > T::zero())) {
            return Err(Error::InvalidRange(format!(
                "prices must be finite and positive, got {p}"
            )));
        }
        Ok(Self(prices))
    }

    pub fn prices(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// State whose price is closest to `s`.
    pub fn nearest_state(&self, s: T) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if (p - s).abs() < (self.0[best] - s).abs() {
                best = i;
            }
        }
        best
    }
}

/// Butterfly payoff taken literally: `s` on `[15, 20)`, `25 − s` on
/// `[20, 25)`, zero elsewhere. Note the first leg is `s`, not `s − 15`.
pub fn butterfly<T: Real>(s: T) -> T {
    let (a, b, c) = (lit::<T>(15.0), lit::<T>(20.0), lit::<T>(25.0));
    if s >= a && s < b {
        s
    } else if s >= b && s < c {
        c - s
    } else {
        T::zero()
    }
}

/// Digital knockout: pays 1 when `strike < S < barrier` at maturity; states
/// with `S ≥ barrier` are knocked out and returned as barrier states.
pub fn digital_knockout_terminal<T: Real>(
    prices: &PriceMap<T>,
    barrier: T,
    strike: T,
) -> (Vec<T>, Vec<usize>) {
    let terminal = prices
        .prices()
        .iter()
        .map(|&s| {
            if s > strike && s < barrier {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect();
    let barriers = prices
        .prices()
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= barrier)
        .map(|(i, _)| i)
        .collect();
    (terminal, barriers)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payoff<T> {
    Butterfly,
    DigitalKnockout { barrier: T, strike: T },
    /// Explicit value per state.
    CustomTable(Vec<T>),
}

impl<T: Real> Payoff<T> {
    /// Default knockout: barrier 25, strike 15.
    pub fn digital_knockout() -> Self {
        Self::DigitalKnockout {
            barrier: lit(25.0),
            strike: lit(15.0),
        }
    }

    /// Terminal vector and knocked-out states.
    pub fn evaluate(&self, prices: Option<&PriceMap<T>>, n_states: usize) -> Result<(Vec<T>, Vec<usize>)> {
        let need_prices = || {
            prices.ok_or_else(|| Error::InvalidTerminal("payoff needs a price map".into()))
        };
        let (terminal, barriers) = match self {
            Self::Butterfly => (
                need_prices()?.prices().iter().map(|&s| butterfly(s)).collect(),
                Vec::new(),
            ),
            Self::DigitalKnockout { barrier, strike } => {
                digital_knockout_terminal(need_prices()?, *barrier, *strike)
            }
            Self::CustomTable(v) => (v.clone(), Vec::new()),
        };
        if terminal.len() != n_states {
            return Err(Error::DimensionMismatch {
                expected: n_states,
                got: terminal.len(),
            });
        }
        if terminal.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTerminal("non-finite payoff value".into()));
        }
        Ok((terminal, barriers))
    }
}

/// Parses a two-column `state_index value` table; unlisted states pay zero.
pub fn parse_custom_table<T: Real>(text: &str, n_states: usize) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); n_states];
    let mut seen = BTreeSet::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { line: k + 1, msg };
        let mut cols = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty());
        let (Some(i), Some(v), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(err(format!("expected two columns, got `{line}`")));
        };
        let i: usize = i.parse().map_err(|_| err(format!("bad state index `{i}`")))?;
        let v: T = v.parse().map_err(|_| err(format!("bad value `{v}`")))?;
        if i >= n_states {
            return Err(err(format!("state {i} out of range")));
        }
        if !seen.insert(i) {
            return Err(err(format!("state {i} listed twice")));
        }
        out[i] = v;
    }
    Ok(out)
}

/// Everything needed to price one claim.
#[derive(Debug, Clone)]
pub struct PricingProblem<T> {
    pub generator: Generator<T>,
    pub price_map: Option<PriceMap<T>>,
    pub payoff: Payoff<T>,
    pub terminal: Vec<T>,
    pub barrier_states: Vec<usize>,
    pub driver: DriverSpec<T>,
}

impl<T: Real> PricingProblem<T> {
    pub fn new(
        generator: Generator<T>,
        price_map: Option<PriceMap<T>>,
        payoff: Payoff<T>,
        driver: DriverSpec<T>,
    ) -> Result<Self> {
        driver.validate()?;
        if let Some(p) = &price_map {
            if p.len() != generator.n_states() {
                return Err(Error::DimensionMismatch {
                    expected: generator.n_states(),
                    got: p.len(),
                });
            }
        }
        let (terminal, barrier_states) = payoff.evaluate(price_map.as_ref(), generator.n_states())?;
        Ok(Self {
            generator,
            price_map,
            payoff,
            terminal,
            barrier_states,
            driver,
        })
    }

    /// Problem with an explicit terminal vector and no barrier.
    pub fn from_terminal(generator: Generator<T>, terminal: Vec<T>, driver: DriverSpec<T>) -> Result<Self> {
        Self::new(generator, None, Payoff::CustomTable(terminal), driver)
    }

    pub fn horizon(&self) -> T {
        *self.generator.horizon()
    }

    pub fn n_states(&self) -> usize {
        self.generator.n_states()
    }

    /// Same problem with the terminal vector scaled by `factor` (barriers kept).
    pub fn scaled(&self, factor: T) -> Self {
        let mut out = self.clone();
        out.terminal.iter_mut().for_each(|v| *v = *v * factor);
        out
    }

    pub fn with_driver(&self, driver: DriverSpec<T>) -> Self {
        Self {
            driver,
            ..self.clone()
        }
    }
}

/// Level-dependent volatility `σ(S) = base·(S/S_ref)^skew`, with `S_ref` the
/// geometric midpoint of the grid. `skew = 0` is flat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolatilityProfile<T> {
    pub base: T,
    pub skew: T,
}

impl<T: Real> VolatilityProfile<T> {
    pub fn flat(base: T) -> Self {
        Self {
            base,
            skew: T::zero(),
        }
    }
}

/// Birth–death chain on a log-spaced price grid.
///
/// With log-spacing `δ`, state `i` jumps up and down each at rate
/// `σ(S_i)²/(2δ²)`, which matches the local variance of `ln S` over unit time.
/// The end states reflect.
pub fn build_synthetic_chain<T: Real>(
    n_states: usize,
    price_range: (T, T),
    profile: VolatilityProfile<T>,
    horizon: T,
) -> Result<(Generator<T>, PriceMap<T>)> {
    let (lo, hi) = price_range;
    if n_states < 2 {
        return Err(Error::InvalidRange(format!("need at least 2 states, got {n_states}")));
    }
    if !(lo > T::zero() && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidRange(format!(
            "price range must satisfy 0 < lo < hi, got ({}, {})",
            to_f64(&lo),
            to_f64(&hi)
        )));
    }
    if !(profile.base >= T::zero() && profile.base.is_finite() && profile.skew.is_finite()) {
        return Err(Error::InvalidRange("volatility must be finite and non-negative".into()));
    }
    let steps = lit::<T>((n_states - 1) as f64);
    let delta = (hi / lo).ln() / steps;
    let prices: Vec<T> = (0..n_states)
        .map(|i| lo * (delta * lit::<T>(i as f64)).exp())
        .collect();
    let s_ref = (lo * hi).sqrt();
    let two = lit::<T>(2.0);
    let rate = |s: T| {
        let sigma = profile.base * (s / s_ref).powf(profile.skew);
        sigma * sigma / (two * delta * delta)
    };
    let mut a = SquareMatrix::zeros(n_states);
    for (j, &s) in prices.iter().enumerate() {
        let r = rate(s);
        let mut out = T::zero();
        if j + 1 < n_states {
            a[(j + 1, j)] = r;
            out = out + r;
        }
        if j > 0 {
            a[(j - 1, j)] = r;
            out = out + r;
        }
        a[(j, j)] = -out;
    }
    let gen = validate_generator(vec![(T::zero(), a)], horizon, &ValidationOptions::default())?;
    Ok((gen, PriceMap::new(prices)?))
}
