//! `seqtest` — stopping boundaries, K-sweeps, Monte Carlo validation and
//! self-checks for sequential drift testing under soft penalties.

mod commands;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use commands::{CliError, Format, EXIT_USAGE};
use seqtest::ProblemParams;

#[derive(Parser)]
#[command(
    name = "seqtest",
    version,
    about = "Optimal stopping boundaries for Bayesian sequential drift testing with soft-classification penalties",
    after_help = "Penalty grammar: ce:a1,a2 | l1 | l2 | classic:a1,a2\n\
                  Exit codes: 0 ok, 1 usage error, 2 degenerate problem, 3 validation failure"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Either `--K` alone or an explicit (alpha, sigma, cost) triple; the
/// boundaries depend on the parameters only through K = alpha^2/(c sigma^2).
#[derive(Args)]
struct ParamArgs {
    /// Signal-to-noise parameter K (sets alpha = sqrt(K), sigma = cost = 1).
    #[arg(long = "K", conflicts_with_all = ["alpha", "sigma", "cost"])]
    k: Option<f64>,
    /// Drift magnitude alpha (nonzero).
    #[arg(long)]
    alpha: Option<f64>,
    /// Noise level sigma.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Observation cost c.
    #[arg(long, default_value_t = 1.0)]
    cost: f64,
}

impl ParamArgs {
    fn resolve(&self) -> Result<ProblemParams, CliError> {
        match (self.k, self.alpha) {
            (Some(k), None) => Ok(ProblemParams::from_k(k)?),
            (None, Some(alpha)) => Ok(ProblemParams::new(alpha, self.sigma, self.cost)?),
            (None, None) => Err(CliError(
                "give either --K or --alpha [--sigma --cost]".into(),
            )),
            (Some(_), Some(_)) => unreachable!("clap conflicts_with_all"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the free-boundary problem and print the boundaries.
    Solve {
        /// Penalty: ce:a1,a2 | l1 | l2 | classic:a1,a2
        penalty: String,
        #[command(flatten)]
        params: ParamArgs,
        /// Bisection bracket tolerance.
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        /// Emit a JSON report.
        #[arg(long)]
        json: bool,
        /// Emit a one-row CSV.
        #[arg(long, conflicts_with = "json")]
        csv: bool,
        /// Envelope grid size for kinked penalties.
        #[arg(long = "grid-n", default_value_t = 1_000_000)]
        grid_n: usize,
    },
    /// Sweep the boundaries over a K-grid and emit CSV.
    Sweep {
        penalty: String,
        #[arg(long = "K-min")]
        k_min: f64,
        #[arg(long = "K-max")]
        k_max: f64,
        /// Number of grid points.
        #[arg(long, default_value_t = 50)]
        points: usize,
        /// Logarithmic K-spacing.
        #[arg(long)]
        log: bool,
        /// Output CSV path (stdout when omitted; a .manifest.json sidecar
        /// is written next to the file).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Estimate the Bayes risk of the optimal rule by Monte Carlo and
    /// compare with the exact value function.
    Simulate {
        penalty: String,
        #[command(flatten)]
        params: ParamArgs,
        /// Starting posterior, in (0, 1).
        #[arg(long)]
        prior: f64,
        /// Number of simulated paths.
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        /// Time step of the simulation grid.
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        /// Truncation horizon (default 50 / cost).
        #[arg(long = "t-max")]
        t_max: Option<f64>,
        /// RNG seed (falls back to SEQTEST_SEED, then 0).
        #[arg(long)]
        seed: Option<u64>,
        /// Also estimate the four single-boundary perturbations by +-delta.
        #[arg(long, value_name = "DELTA")]
        perturb: Option<f64>,
    },
    /// Run assumption checks, the solver, the envelope and their
    /// cross-validation; exit 3 on the first failure.
    Validate {
        penalty: String,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        /// Envelope grid size for the agreement check.
        #[arg(long = "grid-n", default_value_t = 200_000)]
        grid_n: usize,
    },
}

fn seed_fallback(seed: Option<u64>) -> u64 {
    seed.or_else(|| {
        std::env::var("SEQTEST_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(0)
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Solve {
            penalty,
            params,
            tol,
            json,
            csv,
            grid_n,
        } => {
            let format = if json {
                Format::Json
            } else if csv {
                Format::Csv
            } else {
                Format::Text
            };
            commands::cmd_solve(&penalty, params.resolve()?, tol, format, grid_n)
        }
        Command::Sweep {
            penalty,
            k_min,
            k_max,
            points,
            log,
            out,
            tol,
        } => commands::cmd_sweep(&penalty, k_min, k_max, points, log, out.as_deref(), tol),
        Command::Simulate {
            penalty,
            params,
            prior,
            paths,
            dt,
            t_max,
            seed,
            perturb,
        } => commands::cmd_simulate(
            &penalty,
            params.resolve()?,
            prior,
            paths,
            dt,
            t_max,
            seed_fallback(seed),
            perturb,
        ),
        Command::Validate {
            penalty,
            params,
            tol,
            grid_n,
        } => commands::cmd_validate(&penalty, params.resolve()?, tol, grid_n),
    }
}

/// Restore default SIGPIPE so piping into `head` ends the process quietly
/// instead of panicking on a closed stdout.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(CliError(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
