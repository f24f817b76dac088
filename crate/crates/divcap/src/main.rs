use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use divcap::config::{ConfigError, Resolved, RunConfig};
use divcap::report::{self, SolveReport};
use divcap::sim::{self, Control, Functional, LaplaceEstimate, MCEstimate};
use divcap::verify;
use divcap_core::barrier::{j_c, j_d};
use serde::Serialize;

const CONFIG_HELP: &str = "\
CONFIG FILE (TOML or JSON, chosen by extension)
  mu, sigma, q, beta        model parameters (sigma > 0, q > 0, beta > 1)
  [cap]
    kind                    constant | linear | affine | tabulated
    coefficients            [S] | [k] | [c0, c1] | [[x, F(x)], ...] starting at x = 0
  [numerics]
    x_max                   truncation point (default: chosen from the decay rates)
    tol                     ODE tolerance (default 1e-8)
    grid_n                  minimum number of grid intervals (default 200)
  [sim]
    dt                      time step (default 1e-3)
    horizon                 simulated horizon (default ln(1e6)/q)
    n_paths                 number of paths (default 200000)
    seed                    master seed (default 0)
    antithetic              antithetic pairs (default false)
    bridge                  Brownian-bridge crossing correction (default false)
    truncation_tol          largest accepted horizon truncation bound (default 1e-3)
  [output]
    grid_points             rows in value_grid.csv (default 201)
    grid_max                right end of the value grid (default: past both barriers)

EXIT CODES
  0 success, 1 verification or computation failure, 2 configuration error";

#[derive(Parser)]
#[command(name = "divcap", version, about = "Optimal dividends with a rate cap and capital injection", after_long_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports and grids.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides `sim.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Barriers, regime and value grid (report.json, value_grid.csv).
    Solve,
    /// One solve per parameter value (sweep.csv).
    Sweep {
        /// mu, sigma, q, beta, or cap.<i> for a cap coefficient.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
    },
    /// Analytic and simulation checks (verify.json).
    Verify {
        /// Run only the analytic checks.
        #[arg(long)]
        no_sim: bool,
    },
    /// Monte Carlo estimate for a barrier strategy (simulate.json).
    Simulate {
        #[arg(long, value_enum)]
        strategy: Strategy,
        /// Barrier level (default: b_d for refracted, b_c for reflected).
        #[arg(long)]
        barrier: Option<f64>,
        /// Initial surplus.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        x0: f64,
        /// Also write the first N paths to trace.csv.
        #[arg(long, value_name = "N")]
        trace: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Strategy {
    Refracted,
    Reflected,
}

enum Failure {
    Config(anyhow::Error),
    Verify,
    Run(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify) => ExitCode::from(1),
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Failure> {
    let path = cli.config.as_deref().ok_or_else(|| Failure::Config(anyhow::anyhow!("--config <path> is required")))?;
    let mut c = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        c.sim.seed = seed;
    }
    Ok(c)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let config = load(cli)?;
    match &cli.command {
        Command::Solve => solve(cli, &config.resolve()?),
        Command::Sweep { param, values } => {
            let rows = report::sweep(&config, param, values)?;
            let mut buf = Vec::new();
            report::write_sweep_csv(&mut buf, &rows).map_err(anyhow::Error::from)?;
            write(&cli.out, "sweep.csv", &buf)?;
            print!("{}", String::from_utf8_lossy(&buf));
            Ok(())
        }
        Command::Verify { no_sim } => {
            let r = verify::verify(&config.resolve()?, !no_sim);
            for c in &r.checks {
                println!("{}", c.line());
            }
            println!("{}", if r.passed { "verification passed" } else { "verification FAILED" });
            write(&cli.out, "verify.json", serde_json::to_string_pretty(&r).map_err(anyhow::Error::from)?.as_bytes())?;
            if r.passed {
                Ok(())
            } else {
                Err(Failure::Verify)
            }
        }
        Command::Simulate { strategy, barrier, x0, trace } => simulate(cli, &config.resolve()?, *strategy, *barrier, *x0, *trace),
    }
}

fn solve(cli: &Cli, cfg: &Resolved) -> Result<(), Failure> {
    let vf = report::solve(&cfg.params, &cfg.cap, &cfg.numerics).context("solving")?;
    let rep = SolveReport::new(&vf);
    let x_hi = cfg.output.grid_max.unwrap_or_else(|| report::default_grid_max(&vf));
    let rows = report::value_grid(&vf, x_hi, cfg.output.grid_points).context("evaluating the value grid")?;
    let mut csv = Vec::new();
    report::write_grid_csv(&mut csv, &rows).map_err(anyhow::Error::from)?;
    let json = serde_json::to_string_pretty(&rep).map_err(anyhow::Error::from)?;
    write(&cli.out, "report.json", json.as_bytes())?;
    write(&cli.out, "value_grid.csv", &csv)?;
    println!("{json}");
    Ok(())
}

#[derive(Serialize)]
struct SimulateReport {
    strategy: Strategy,
    barrier: f64,
    x0: f64,
    seed: u64,
    dt: f64,
    horizon: f64,
    n_paths: u64,
    antithetic: bool,
    bridge: bool,
    estimate: MCEstimate,
    closed_form: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    laplace_tau0: Option<LaplaceEstimate>,
}

fn simulate(
    cli: &Cli,
    cfg: &Resolved,
    strategy: Strategy,
    barrier: Option<f64>,
    x0: f64,
    trace: Option<u64>,
) -> Result<(), Failure> {
    if !x0.is_finite() || x0 < 0.0 {
        return Err(Failure::Config(anyhow::anyhow!("invalid `--x0`: must be nonnegative")));
    }
    if matches!(barrier, Some(b) if !b.is_finite() || b < 0.0) {
        return Err(Failure::Config(anyhow::anyhow!("invalid `--barrier`: must be nonnegative")));
    }
    let vf = report::solve(&cfg.params, &cfg.cap, &cfg.numerics).context("solving")?;
    let p = &vf.problem;
    let (params, cap, sc) = (&cfg.params, &cfg.cap, &cfg.sim);
    let (b, f, control) = match strategy {
        Strategy::Refracted => {
            let b = barrier.unwrap_or(vf.regime.b_d.b);
            (b, Functional::Jd { b }, Control::Refracted { b })
        }
        Strategy::Reflected => {
            let b = barrier.unwrap_or(vf.regime.b_c.b);
            (b, Functional::Jc { b }, Control::Reflected { b })
        }
    };
    let closed_form = match strategy {
        Strategy::Refracted => divcap_core::coeffs_d(p, b).and_then(|c| j_d(p, &c, x0)),
        Strategy::Reflected => divcap_core::coeffs_c(p, b).and_then(|c| j_c(p, &c, x0)),
    }
    .context("closed-form value")?;
    let estimate = sim::estimate(params, cap, f, x0, sc).map_err(anyhow::Error::from)?;
    let laplace_tau0 = match strategy {
        Strategy::Refracted => Some(sim::estimate_laplace_tau0(params, cap, x0, b, sc).map_err(anyhow::Error::from)?),
        Strategy::Reflected => None,
    };
    let rep = SimulateReport {
        strategy,
        barrier: b,
        x0,
        seed: sc.seed,
        dt: sc.dt,
        horizon: sc.horizon(params.q),
        n_paths: sc.n_paths,
        antithetic: sc.antithetic,
        bridge: sc.bridge,
        estimate,
        closed_form,
        laplace_tau0,
    };
    let json = serde_json::to_string_pretty(&rep).map_err(anyhow::Error::from)?;
    write(&cli.out, "simulate.json", json.as_bytes())?;
    if let Some(n) = trace {
        let mut buf = Vec::new();
        sim::write_trace(&mut buf, params, cap, control, x0, sc, n).map_err(anyhow::Error::from)?;
        write(&cli.out, "trace.csv", &buf)?;
    }
    println!("{json}");
    Ok(())
}
