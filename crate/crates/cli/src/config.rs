//! TOML run configuration and its translation into solver inputs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chainbsde::chain::parse_generator;
use chainbsde::{
    build_synthetic_chain, Basis, DriverSpec, Generator, IntegratorConfig, MCConfig, Payoff, PriceMap,
    PricingProblem, State, ValidationOptions, VolatilityProfile,
};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Horizon in months; one month is `1/12` in the generator's time unit.
    pub horizon_months: f64,
    pub generator: GeneratorSource,
    pub payoff: PayoffConfig,
    pub driver: DriverConfig,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSource {
    Synthetic {
        n_states: usize,
        price_range: [f64; 2],
        vol_base: f64,
        #[serde(default)]
        vol_skew: f64,
    },
    File {
        path: PathBuf,
        /// One price per state, in state order.
        #[serde(default)]
        prices: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffConfig {
    Butterfly,
    DigitalKnockout {
        #[serde(default = "default_barrier")]
        barrier: f64,
        #[serde(default = "default_strike")]
        strike: f64,
    },
    Table {
        #[serde(default)]
        values: Option<Vec<f64>>,
        #[serde(default)]
        path: Option<PathBuf>,
    },
}

fn default_barrier() -> f64 {
    25.0
}

fn default_strike() -> f64 {
    15.0
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverConfig {
    Zero,
    Affine {
        #[serde(default)]
        intercept: f64,
        #[serde(default)]
        y_coeff: f64,
        #[serde(default)]
        drift_coeff: f64,
    },
    RateUncertainty {
        alpha: f64,
    },
    Minmaxvar {
        gamma: f64,
    },
}

impl DriverConfig {
    pub fn spec(self) -> Result<DriverSpec<f64>> {
        let spec = match self {
            Self::Zero => DriverSpec::Zero,
            Self::Affine {
                intercept,
                y_coeff,
                drift_coeff,
            } => DriverSpec::Affine {
                intercept,
                y_coeff,
                drift_coeff,
            },
            Self::RateUncertainty { alpha } => DriverSpec::rate_uncertainty(alpha)?,
            Self::Minmaxvar { gamma } => DriverSpec::minmaxvar(gamma)?,
        };
        Ok(spec)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub struct IntegratorSection {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub output_steps: usize,
    /// Interval count for `method = "rk4"`.
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Adaptive,
    Rk4,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            method: Method::Adaptive,
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            max_steps: 1_000_000,
            output_steps: 100,
            steps: 1000,
        }
    }
}

impl IntegratorSection {
    pub fn build(&self) -> Result<IntegratorConfig<f64>> {
        let cfg = match self.method {
            Method::Adaptive => IntegratorConfig::Adaptive {
                rel_tol: self.rel_tol,
                abs_tol: self.abs_tol,
                max_steps: self.max_steps,
                output_steps: self.output_steps,
            },
            Method::Rk4 => IntegratorConfig::FixedRk4 { steps: self.steps },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub batches: usize,
    /// Polynomial degree in the standardised price; indicators when absent.
    pub poly_degree: Option<usize>,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            n_steps: 50,
            seed: 0,
            batches: 32,
            poly_degree: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub n_paths: usize,
    pub seed: u64,
    /// Pathwise threshold as a multiple of the integrator tolerance.
    pub tolerance_factor: f64,
    /// Absolute threshold; overrides `tolerance_factor`, and is required with
    /// the fixed-step integrator.
    pub threshold: Option<f64>,
    pub split_samples: usize,
    /// Sub-steps per surface interval when reconstructing `Z` along paths.
    pub refine: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            n_paths: 1000,
            seed: 0,
            tolerance_factor: 10.0,
            threshold: None,
            split_samples: 200,
            refine: 32,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// State whose value is printed; defaults to the middle state.
    pub start_state: Option<usize>,
    /// Alternative to `start_state`: the state nearest this price.
    pub start_price: Option<f64>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            start_state: None,
            start_price: None,
        }
    }
}

/// Everything resolved from a config file.
pub struct Run {
    pub config: RunConfig,
    pub problem: PricingProblem<f64>,
    pub integrator: IntegratorConfig<f64>,
    pub start: State,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if !(cfg.horizon_months > 0.0 && cfg.horizon_months.is_finite()) {
            bail!("horizon_months must be positive, got {}", cfg.horizon_months);
        }
        Ok(cfg)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon_months / 12.0
    }

    /// Resolves relative file references against `base`.
    pub fn resolve(self, base: &Path) -> Result<Run> {
        let horizon = self.horizon();
        let (generator, prices) = match &self.generator {
            GeneratorSource::Synthetic {
                n_states,
                price_range,
                vol_base,
                vol_skew,
            } => {
                let profile = VolatilityProfile {
                    base: *vol_base,
                    skew: *vol_skew,
                };
                let (g, p) = build_synthetic_chain(*n_states, (price_range[0], price_range[1]), profile, horizon)?;
                (g, Some(p))
            }
            GeneratorSource::File { path, prices } => {
                let path = base.join(path);
                let text =
                    std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let g: Generator<f64> = parse_generator(&text, horizon, &ValidationOptions::default())
                    .with_context(|| format!("loading generator {}", path.display()))?;
                let p = prices.clone().map(PriceMap::new).transpose()?;
                (g, p)
            }
        };
        let n = generator.n_states();
        let payoff = match &self.payoff {
            PayoffConfig::Butterfly => Payoff::Butterfly,
            PayoffConfig::DigitalKnockout { barrier, strike } => Payoff::DigitalKnockout {
                barrier: *barrier,
                strike: *strike,
            },
            PayoffConfig::Table { values, path } => match (values, path) {
                (Some(v), None) => Payoff::CustomTable(v.clone()),
                (None, Some(p)) => {
                    let p = base.join(p);
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    Payoff::CustomTable(chainbsde::pricing::parse_custom_table(&text, n)?)
                }
                _ => bail!("payoff table needs exactly one of `values` or `path`"),
            },
        };
        let start = match (self.output.start_state, self.output.start_price, &prices) {
            (Some(s), None, _) => s,
            (None, Some(s), Some(p)) => p.nearest_state(s),
            (None, Some(_), None) => bail!("start_price needs a price map"),
            (None, None, _) => n / 2,
            (Some(_), Some(_), _) => bail!("set at most one of start_state and start_price"),
        };
        let start = State(start);
        generator.check_state(start)?;
        let problem = PricingProblem::new(generator, prices, payoff, self.driver.spec()?)?;
        let integrator = self.integrator.build()?;
        Ok(Run {
            config: self,
            problem,
            integrator,
            start,
        })
    }
}

impl McSection {
    pub fn build(&self, start: State) -> MCConfig {
        let mut cfg = MCConfig::new(self.n_paths, self.n_steps, start, self.seed);
        cfg.batches = self.batches;
        if let Some(degree) = self.poly_degree {
            cfg.basis = Basis::PricePolynomials { degree };
        }
        cfg
    }
}
