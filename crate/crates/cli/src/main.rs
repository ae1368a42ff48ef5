mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chainbsde::ode::{driver_residual, SplitOptions};
use chainbsde::{
    bid_ask, distort_rates, mc_solve, pathwise_verify, solve_backward, validate_split, DriverSpec, PathwiseOptions,
    SplitProblem, State, ValueSurface,
};
use clap::{Args, Parser, Subcommand};

use config::{Method, Run, RunConfig};

#[derive(Parser)]
#[command(name = "chainbsde", version, about = "Markov-chain BSDE pricing: bid/ask surfaces, Monte Carlo and pathwise checks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the Monte Carlo and pathwise seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the adaptive integrator's relative tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Load the configuration and report the chain, payoff and driver.
    Validate,
    /// Solve the BSDE under the configured driver and write its surface.
    Price,
    /// Ask (driver as given), bid (dual) and risk-neutral surfaces.
    Bidask,
    /// Regression Monte Carlo estimate of u_0 at the start state.
    Mc,
    /// Print the minmaxvar-distorted jump rates out of one state.
    Distort {
        /// State whose outgoing rates are distorted; defaults to the start state.
        #[arg(long)]
        state: Option<usize>,
        /// Time at which z is read from the solved surface.
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        /// Stress level; defaults to the configured minmaxvar gamma.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Replay the forward dynamics along simulated paths and check the split
    /// condition; exits nonzero when the pathwise error is above threshold.
    Verify {
        /// Check this surface CSV instead of solving.
        #[arg(long)]
        surface: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let Some(path) = cli.common.config.as_deref() else {
        bail!("--config is required");
    };
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.common.seed {
        cfg.mc.seed = seed;
        cfg.verify.seed = seed;
    }
    if let Some(tol) = cli.common.tol {
        if cfg.integrator.method != Method::Adaptive {
            bail!("--tol applies to the adaptive integrator only");
        }
        cfg.integrator.rel_tol = tol;
    }
    if let Some(out) = cli.common.out {
        cfg.output.dir = out;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let run = cfg.resolve(base)?;
    match cli.command {
        Command::Validate => validate(&run),
        Command::Price => price(&run),
        Command::Bidask => bidask(&run),
        Command::Mc => mc(&run),
        Command::Distort { state, time, gamma } => distort(&run, state, time, gamma),
        Command::Verify { surface } => verify(&run, surface.as_deref()),
    }
}

fn write_out(run: &Run, name: &str, contents: &str) -> Result<PathBuf> {
    let dir = &run.config.output.dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn price_of(run: &Run, state: usize) -> Option<f64> {
    run.problem.price_map.as_ref().map(|p| p.prices()[state])
}

fn describe_start(run: &Run) -> String {
    match price_of(run, run.start.0) {
        Some(p) => format!("state {} (price {p})", run.start.0),
        None => format!("state {}", run.start.0),
    }
}

fn validate(run: &Run) -> Result<bool> {
    let p = &run.problem;
    let g = &p.generator;
    println!("states: {}", g.n_states());
    println!("segments: {}", g.segments().len());
    println!("horizon: {}", g.horizon());
    println!("driver: {}", p.driver.name());
    let lo = p.terminal.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = p.terminal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("terminal range: [{lo}, {hi}]");
    println!("barrier states: {:?}", p.barrier_states);
    println!("start: {}", describe_start(run));
    println!("ok");
    Ok(true)
}

/// `state,price,<columns...>` with one row per state at `t = 0`.
fn time0_csv(run: &Run, columns: &[(&str, &[f64])]) -> String {
    let mut out = String::from("state,price");
    for (name, _) in columns {
        write!(out, ",{name}").unwrap();
    }
    out.push('\n');
    for i in 0..run.problem.n_states() {
        match price_of(run, i) {
            Some(p) => write!(out, "{i},{p}").unwrap(),
            None => write!(out, "{i},").unwrap(),
        }
        for (_, v) in columns {
            write!(out, ",{}", v[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

const PLOT_SCRIPT: &str = r#"import sys
import pandas as pd
import matplotlib.pyplot as plt

frame = pd.read_csv(sys.argv[1] if len(sys.argv) > 1 else "time0.csv")
x = "price" if frame["price"].notna().all() else "state"
fig, ax = plt.subplots()
for col in frame.columns:
    if col not in ("state", "price"):
        ax.plot(frame[x], frame[col], label=col)
ax.set_xlabel(x)
ax.set_ylabel("value at t = 0")
ax.legend()
fig.savefig(sys.argv[2] if len(sys.argv) > 2 else "time0.png", dpi=150)
"#;

fn price(run: &Run) -> Result<bool> {
    let surface = solve_backward(&run.problem, &run.integrator)?;
    let s = write_out(run, "surface.csv", &surface.to_csv())?;
    let t0 = write_out(run, "time0.csv", &time0_csv(run, &[("value", surface.initial())]))?;
    write_out(run, "plot_time0.py", PLOT_SCRIPT)?;
    println!("u0 at {} = {}", describe_start(run), surface.initial()[run.start.0]);
    println!("wrote {} and {}", s.display(), t0.display());
    Ok(true)
}

fn bidask(run: &Run) -> Result<bool> {
    let (bid, ask) = bid_ask(&run.problem, &run.integrator)?;
    let rn = solve_backward(&run.problem.with_driver(DriverSpec::Zero), &run.integrator)?;
    write_out(run, "ask_surface.csv", &ask.to_csv())?;
    write_out(run, "bid_surface.csv", &bid.to_csv())?;
    write_out(run, "rn_surface.csv", &rn.to_csv())?;
    let columns = [("ask", ask.initial()), ("bid", bid.initial()), ("risk_neutral", rn.initial())];
    write_out(run, "time0.csv", &time0_csv(run, &columns))?;
    write_out(run, "plot_time0.py", PLOT_SCRIPT)?;
    let k = run.start.0;
    println!(
        "at {}: ask = {}, bid = {}, risk neutral = {}",
        describe_start(run),
        ask.initial()[k],
        bid.initial()[k],
        rn.initial()[k]
    );
    println!("wrote surfaces and time0.csv to {}", run.config.output.dir.display());
    Ok(true)
}

fn mc(run: &Run) -> Result<bool> {
    let est = mc_solve(&run.problem, &run.config.mc.build(run.start))?;
    write_out(run, "mc_stages.csv", &est.stages_csv())?;
    println!("{}", est.record());
    Ok(true)
}

fn distort(run: &Run, state: Option<usize>, time: f64, gamma: Option<f64>) -> Result<bool> {
    let gamma = match (gamma, run.problem.driver) {
        (Some(g), _) => g,
        (None, DriverSpec::Minmaxvar { gamma }) => gamma,
        (None, _) => bail!("the configured driver is not minmaxvar; pass --gamma"),
    };
    let state = State(state.unwrap_or(run.start.0));
    let g = &run.problem.generator;
    g.check_state(state)?;
    if !(0.0..=*g.horizon()).contains(&time) {
        bail!("time {time} outside [0, {}]", g.horizon());
    }
    let surface = solve_backward(&run.problem, &run.integrator)?;
    let row = nearest_row(&surface, time);
    let t = surface.times[row];
    let z = &surface.values[row];
    let a = g.matrix_at(&t);
    let d = distort_rates(z, a, state, gamma)?;
    println!("state {} at t = {t}, gamma = {gamma}", state.0);
    println!("{:>4} {:>6} {:>14} {:>14} {:>14} {:>14} {:>14}", "pos", "state", "price", "z", "rate", "cumulative", "distorted");
    for (pos, &i) in d.order.iter().enumerate() {
        let price = price_of(run, i).map_or_else(|| "-".to_string(), |p| format!("{p:.6}"));
        println!(
            "{pos:>4} {i:>6} {price:>14} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}",
            z[i],
            a[(i, state.0)],
            d.cumulative[pos],
            d.rates[i]
        );
    }
    println!("off-current mass: {}", d.off_current_mass());
    Ok(true)
}

fn nearest_row(surface: &ValueSurface<f64>, t: f64) -> usize {
    let mut best = 0;
    for (k, &s) in surface.times.iter().enumerate() {
        if (s - t).abs() < (surface.times[best] - t).abs() {
            best = k;
        }
    }
    best
}

fn verify(run: &Run, surface_path: Option<&Path>) -> Result<bool> {
    let p = &run.problem;
    let surface = match surface_path {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut s = ValueSurface::from_csv(&text)?;
            if s.n_states() != p.n_states() {
                bail!("surface has {} states, configuration has {}", s.n_states(), p.n_states());
            }
            s.pinned = p.barrier_states.clone();
            s
        }
        None => solve_backward(p, &run.integrator)?,
    };
    let v = &run.config.verify;
    let scale = p.terminal.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let threshold = match (v.threshold, run.integrator.tolerance(scale)) {
        (Some(t), _) => t,
        (None, Some(tol)) => v.tolerance_factor * tol,
        (None, None) => bail!("verify.threshold is required with the fixed-step integrator"),
    };
    let opts = PathwiseOptions {
        n_paths: v.n_paths,
        seed: v.seed,
        start: None,
        refine: v.refine.max(1),
    };
    let report = pathwise_verify(&surface, &p.generator, &p.driver, &opts)?;
    let passed = report.passed(threshold);
    println!(
        "pathwise: max |Y - u| = {:e} over {} paths ({} jumps), worst path {} at t = {}; threshold {:e}: {}",
        report.max_error,
        report.n_paths,
        report.total_jumps,
        report.worst_path,
        report.worst_time,
        threshold,
        if passed { "pass" } else { "FAIL" }
    );

    let split = SplitProblem {
        generator: &p.generator,
        residual: driver_residual(&p.generator, &p.driver),
        lipschitz: None,
    };
    let split_opts = SplitOptions {
        samples: v.split_samples,
        seed: v.seed,
        ..Default::default()
    };
    let sr = validate_split(&split, &split_opts);
    println!(
        "split condition: {} pairs, empirical modulus {:e}, {} zero-seminorm violations",
        sr.pairs_checked,
        sr.max_ratio,
        sr.violations.len()
    );
    if let Some(first) = sr.violations.first() {
        println!(
            "  first violation: component {} moved by coordinate {:?} at t = {}",
            first.component, first.coordinate, first.t
        );
    }
    Ok(passed)
}
