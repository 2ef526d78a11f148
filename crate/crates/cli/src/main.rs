use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use relmart::excursions::AlphaSchedule;
use relmart::harness::Moments;
use relmart::local_time::reflected_decomposition;
use relmart::paths::{simulate_brownian, simulate_driver_d, streams};
use relmart::relmart::{ito_mckean, Decomposition};
use relmart::sde::{
    euler_solve, geometric_skew_mean, geometric_skew_solve, picard_solve, CoeffSpec, SdeProblem,
};
use relmart::skewbm::{
    construct_from_relmart, construct_y_delta_1, construct_y_delta_2, AlphaSpec, SkewParams,
};
use relmart::suite::{run_suite_with, SuiteConfig, DEFAULT_SEED};
use relmart::{Error, RngStream, SamplePath, TimeGrid};

#[derive(Parser)]
#[command(
    name = "relmart",
    version,
    about = "Skew Brownian motion and relative-martingale SDE simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathKind {
    Brownian,
    Reflected,
    ItoMckean,
}

#[derive(Clone, Copy, ValueEnum)]
enum SkewMethod {
    ItoMckean,
    TimeChange,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Default,
    Fast,
}

#[derive(clap::Args)]
struct Batch {
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    paths: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate Brownian, reflected or Ito-McKean paths to CSV.
    Simulate {
        #[command(flatten)]
        batch: Batch,
        #[arg(long, value_enum, default_value = "brownian")]
        kind: PathKind,
        #[arg(long, default_value_t = 0.6)]
        delta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Construct skew Brownian paths by excursion flipping.
    ConstructSkew {
        #[command(flatten)]
        batch: Batch,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Piecewise alpha as `t0:a0,t1:a1,...` with t0 = 0.
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long, default_value_t = 0.6)]
        delta: f64,
        #[arg(long, value_enum, default_value = "ito-mckean")]
        method: SkewMethod,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an SDE driven by a relative martingale from a JSON config.
    SolveSde {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the validation suite.
    Validate {
        #[arg(long, value_enum, default_value = "default")]
        suite: Suite,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restrict to these criterion ids, e.g. `--only C1 --only C3`.
        #[arg(long)]
        only: Vec<String>,
    },
    /// Geometric skew SDE: Monte Carlo mean against the closed form.
    Price {
        #[command(flatten)]
        batch: Batch,
        #[arg(long, default_value_t = 0.05)]
        mu: f64,
        #[arg(long, default_value_t = 0.2)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        s0: f64,
        #[arg(long, default_value_t = 0.6)]
        delta: f64,
    },
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidGrid(_)
            | Error::InvalidParameter { .. }
            | Error::InvalidInput(_)
            | Error::Json(_) => Failure::Usage(e.to_string()),
            _ => Failure::Run(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

type Outcome = Result<bool, Failure>;

/// `println!` that tolerates a closed stdout.
macro_rules! say {
    ($($arg:tt)*) => {{
        let mut out = io::stdout().lock();
        let _ = writeln!(out, $($arg)*);
        let _ = out.flush();
    }};
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate {
            batch,
            kind,
            delta,
            out,
        } => simulate(&batch, kind, delta, &out),
        Command::ConstructSkew {
            batch,
            alpha,
            schedule,
            delta,
            method,
            out,
        } => construct_skew(&batch, alpha, schedule.as_deref(), delta, method, &out),
        Command::SolveSde { config, out } => solve_sde(&config, &out),
        Command::Validate {
            suite,
            seed,
            out,
            only,
        } => validate(suite, seed, out, only),
        Command::Price {
            batch,
            mu,
            sigma,
            s0,
            delta,
        } => price(&batch, mu, sigma, s0, delta),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn pair(batch: &Batch, g: &TimeGrid, i: usize) -> (SamplePath, SamplePath) {
    let b = simulate_brownian(
        g,
        &RngStream::new(batch.seed, streams::BROWNIAN).child(i as u64),
    );
    let d = simulate_driver_d(
        g,
        &RngStream::new(batch.seed, streams::DRIVER).child(i as u64),
    );
    (b, d)
}

fn write_path(dir: &Path, name: &str, i: usize, p: &SamplePath) -> Result<(), Failure> {
    let f = fs::File::create(dir.join(format!("{name}_{i:05}.csv")))?;
    p.write_csv(io::BufWriter::new(f))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    fs::write(
        path,
        serde_json::to_string_pretty(value).map_err(Error::from)?,
    )?;
    Ok(())
}

fn simulate(batch: &Batch, kind: PathKind, delta: f64, out: &Path) -> Outcome {
    let g = TimeGrid::new(batch.horizon, batch.steps)?;
    fs::create_dir_all(out)?;
    for i in 0..batch.paths {
        let (b, d) = pair(batch, &g, i);
        let p = match kind {
            PathKind::Brownian => b,
            PathKind::Reflected => reflected_decomposition(&d).total().clone(),
            PathKind::ItoMckean => ito_mckean(&b, &d, delta)?.total().clone(),
        };
        write_path(out, "path", i, &p)?;
    }
    Ok(true)
}

fn parse_schedule(s: &str, horizon: f64) -> Result<AlphaSchedule, Failure> {
    let mut partition = Vec::new();
    let mut values = Vec::new();
    for item in s.split(',') {
        let (t, a) = item
            .split_once(':')
            .ok_or_else(|| Failure::Usage(format!("schedule item `{item}` is not t:alpha")))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|e| Failure::Usage(format!("`{x}`: {e}")))
        };
        partition.push(parse(t)?);
        values.push(parse(a)?);
    }
    let sched = AlphaSchedule::new(partition, values)?;
    sched.check_horizon(horizon)?;
    Ok(sched)
}

#[derive(Serialize)]
struct SkewSummary {
    paths: usize,
    horizon: f64,
    fraction_positive: f64,
    alpha_at_start: f64,
}

fn construct_skew(
    batch: &Batch,
    alpha: f64,
    schedule: Option<&str>,
    delta: f64,
    method: SkewMethod,
    out: &Path,
) -> Outcome {
    let sched = schedule
        .map(|s| parse_schedule(s, batch.horizon))
        .transpose()?;
    // The time-changed path lives on [0, horizon], so the source needs a
    // little more quadratic variation than that.
    let source_horizon = match method {
        SkewMethod::ItoMckean => batch.horizon,
        SkewMethod::TimeChange => batch.horizon * 1.25,
    };
    let g = TimeGrid::new(source_horizon, batch.steps)?;
    fs::create_dir_all(out)?;
    let mut positive = 0;
    for i in 0..batch.paths {
        let (b, d) = pair(batch, &g, i);
        let st = RngStream::new(batch.seed, "skew").child(i as u64);
        let y = match (method, &sched) {
            (SkewMethod::ItoMckean, None) => {
                construct_y_delta_1(&b, &d, SkewParams { alpha, delta }, &st)?.y
            }
            (SkewMethod::ItoMckean, Some(s)) => construct_y_delta_2(&b, &d, s, delta, &st)?.y,
            (SkewMethod::TimeChange, s) => {
                let spec = s
                    .clone()
                    .map_or(AlphaSpec::Constant(alpha), AlphaSpec::Schedule);
                construct_from_relmart(&ito_mckean(&b, &d, delta)?, &d, &spec, batch.horizon, &st)?
                    .y
            }
        };
        positive += usize::from(y.terminal() > 0.0);
        write_path(out, "skew", i, &y)?;
    }
    write_json(
        &out.join("summary.json"),
        &SkewSummary {
            paths: batch.paths,
            horizon: batch.horizon,
            fraction_positive: positive as f64 / batch.paths.max(1) as f64,
            alpha_at_start: sched.as_ref().map_or(alpha, |s| s.values()[0]),
        },
    )?;
    Ok(true)
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum CoeffConfig {
    /// `sigma(x) = sigma x`, `b(x) = b x`.
    Linear { sigma: f64, b: f64 },
    /// `sigma(x) = sigma x`, `b(x) = (mu + sigma^2 / 2) x`.
    Gbm { mu: f64, sigma: f64 },
    CustomTable {
        xs: Vec<f64>,
        sigma: Vec<f64>,
        b: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum DriverKind {
    Reflected,
    ItoMckean,
    Bm,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SdeConfig {
    coeffs: CoeffConfig,
    driver: DriverKind,
    #[serde(default = "default_delta")]
    delta: f64,
    /// Accepted for schema compatibility; the drivers here carry no skewness.
    #[serde(default)]
    #[allow(dead_code)]
    alpha: Option<f64>,
    #[serde(rename = "T")]
    horizon: f64,
    steps: usize,
    paths: usize,
    seed: u64,
    #[serde(default)]
    zeta: Option<f64>,
    z0: f64,
    #[serde(default)]
    picard: Option<PicardConfig>,
}

#[derive(Debug, Deserialize)]
struct PicardConfig {
    max_iter: usize,
    tol: f64,
}

fn default_delta() -> f64 {
    0.6
}

#[derive(Serialize)]
struct SdeReport {
    paths: usize,
    terminal_mean: f64,
    terminal_se: f64,
    start_overridden_by_zeta: bool,
    picard_distances: Option<Vec<f64>>,
    picard_converged: Option<bool>,
}

fn solve_sde(config: &Path, out: &Path) -> Outcome {
    let text = fs::read_to_string(config)
        .map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
    let cfg: SdeConfig = serde_json::from_str(&text).map_err(|e| Failure::Usage(e.to_string()))?;
    let coeffs = match cfg.coeffs {
        CoeffConfig::Linear { sigma, b } => CoeffSpec::linear(sigma, b),
        CoeffConfig::Gbm { mu, sigma } => CoeffSpec::linear(sigma, mu + 0.5 * sigma * sigma),
        CoeffConfig::CustomTable { xs, sigma, b } => CoeffSpec::table(xs, sigma, b)?,
    };
    let g = TimeGrid::new(cfg.horizon, cfg.steps)?;
    let batch = Batch {
        horizon: cfg.horizon,
        steps: cfg.steps,
        paths: cfg.paths,
        seed: cfg.seed,
    };
    let mut problems = Vec::with_capacity(cfg.paths);
    for i in 0..cfg.paths {
        let (b, d) = pair(&batch, &g, i);
        let refl = reflected_decomposition(&d);
        let h = refl.h_ref().clone();
        let driver = match cfg.driver {
            DriverKind::Reflected => refl,
            DriverKind::ItoMckean => ito_mckean(&b, &d, cfg.delta)?,
            DriverKind::Bm => Decomposition::martingale_only(b, h.clone()),
        };
        problems.push(SdeProblem::new(
            coeffs.clone(),
            driver,
            d,
            h,
            cfg.z0,
            cfg.zeta,
        )?);
    }
    fs::create_dir_all(out)?;
    let (solutions, distances, converged) = match &cfg.picard {
        Some(p) => {
            let r = picard_solve(&problems, p.max_iter, p.tol)?;
            (r.solutions, Some(r.distances), Some(r.converged))
        }
        None => (
            problems
                .iter()
                .map(euler_solve)
                .collect::<Result<Vec<_>, _>>()?,
            None,
            None,
        ),
    };
    for (i, x) in solutions.iter().enumerate() {
        write_path(out, "solution", i, x)?;
    }
    let m: Moments = solutions.iter().map(|x| x.terminal()).collect();
    write_json(
        &out.join("report.json"),
        &SdeReport {
            paths: solutions.len(),
            terminal_mean: m.mean,
            terminal_se: m.se(),
            start_overridden_by_zeta: problems.iter().any(|p| p.start_overridden()),
            picard_distances: distances,
            picard_converged: converged,
        },
    )?;
    Ok(converged.unwrap_or(true))
}

fn validate(suite: Suite, seed: u64, out: Option<PathBuf>, only: Vec<String>) -> Outcome {
    let mut cfg = match suite {
        Suite::Default => SuiteConfig::default_suite(seed),
        Suite::Fast => SuiteConfig::fast_suite(seed),
    };
    cfg.out_dir = out;
    if !only.is_empty() {
        cfg.tests = only;
    }
    let report = run_suite_with(&cfg, |o| say!("{}", o.summary_line()))?;
    say!(
        "{} {} criteria in {:.1}s",
        if report.pass { "PASS" } else { "FAIL" },
        report.outcomes.len(),
        report.wall_clock.total_seconds
    );
    Ok(report.pass)
}

#[derive(Serialize)]
struct PriceReport {
    closed_form_mean: f64,
    mc_closed_mean: f64,
    mc_closed_se: f64,
    mc_euler_mean: f64,
    mc_euler_se: f64,
    within_3se: bool,
    driver_positive_share: f64,
}

fn price(batch: &Batch, mu: f64, sigma: f64, s0: f64, delta: f64) -> Outcome {
    let g = TimeGrid::new(batch.horizon, batch.steps)?;
    let mut closed = Moments::default();
    let mut euler = Moments::default();
    let mut up = 0;
    for i in 0..batch.paths {
        let (b, d) = pair(batch, &g, i);
        let x = ito_mckean(&b, &d, delta)?;
        let (e, c) = geometric_skew_solve(mu, sigma, s0, x.total())?;
        closed.push(c.terminal());
        euler.push(e.terminal());
        up += usize::from(x.total().terminal() > 0.0);
    }
    let exact = geometric_skew_mean(mu, sigma, s0, delta, batch.horizon);
    let within = (closed.mean - exact).abs() <= 3.0 * closed.se();
    let report = PriceReport {
        closed_form_mean: exact,
        mc_closed_mean: closed.mean,
        mc_closed_se: closed.se(),
        mc_euler_mean: euler.mean,
        mc_euler_se: euler.se(),
        within_3se: within,
        driver_positive_share: up as f64 / batch.paths.max(1) as f64,
    };
    say!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(Error::from)?
    );
    Ok(within)
}
