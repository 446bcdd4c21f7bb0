//! `autocat`: stationary laws, balance diagnostics, exact solves and simulation
//! for open autocatalytic reaction networks.
//!
//! Exit status: 0 on success, 2 for configuration problems (flags, files,
//! parameter values), 3 when a computation fails a numerical-validity check.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "autocat", version, about, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Product-form stationary law (exact when all kappa are equal) as a distribution CSV.
    Stationary(StationaryArgs),
    /// Balance functional B* over the two-species grid n <= --grid.
    Balance(BalanceArgs),
    /// Gillespie simulation; writes the occupation-time table.
    Simulate(SimulateArgs),
    /// Mean-field fixed point and its stability (scaled two-species parameters).
    FixedPoint(FixedPointArgs),
    /// Exact stationary law of the chain truncated at total count --nmax.
    Exact(ExactArgs),
    /// Total-variation distance, per-state differences and modes of two distribution CSVs.
    Compare(CompareArgs),
    /// Regime classification (DV against d) and modes over a (V, D) grid.
    Regimes(RegimesArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON parameter file (`"kind": "raw"` or `"kind": "scaled"`).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; tables go to standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Truncation level: a total count, or `auto` to derive it from `--tail-tol`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum NMax {
    Auto,
    Fixed(u64),
}

impl FromStr for NMax {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(NMax::Auto);
        }
        s.parse()
            .map(NMax::Fixed)
            .map_err(|_| format!("expected a non-negative integer or `auto`, got `{s}`"))
    }
}

#[derive(Debug, Args)]
struct Truncation {
    /// Largest total count kept.
    #[arg(long, default_value = "auto")]
    nmax: NMax,
    /// Omitted Poisson tail mass when `--nmax auto`.
    #[arg(long, default_value_t = 1e-12)]
    tail_tol: f64,
}

#[derive(Debug, Args)]
struct StationaryArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    truncation: Truncation,
}

#[derive(Debug, Args)]
struct BalanceArgs {
    #[command(flatten)]
    common: Common,
    /// Largest total count of the state grid.
    #[arg(long, default_value_t = 80)]
    grid: u64,
    /// Also write the 2F1 ratio series for n = 0..=grid (needs --out).
    #[arg(long, requires = "out")]
    ratios: bool,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("horizon").required(true).args(["t_max", "max_events"])))]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Simulated time, burn-in included.
    #[arg(long)]
    t_max: Option<f64>,
    /// Reactions recorded after burn-in.
    #[arg(long)]
    max_events: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Burn-in time [default: 1% of --t-max, or 0 with --max-events].
    #[arg(long)]
    burn_in: Option<f64>,
    /// Initial counts, comma separated [default: lambda_i / delta rounded].
    #[arg(long, value_delimiter = ',')]
    initial: Option<Vec<u64>>,
    /// Independent replicas (seeds seed, seed + 1, ...) merged into one table.
    #[arg(long, default_value_t = 1)]
    replicas: u64,
}

#[derive(Debug, Args)]
struct FixedPointArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    /// Drop transitions leaving the truncated set.
    Drop,
    /// Disable inflow on the top hyperplane.
    Reflect,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SolverArg {
    Gth,
    Power,
}

#[derive(Debug, Args)]
struct ExactArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    truncation: Truncation,
    #[arg(long, value_enum, default_value_t = PolicyArg::Drop)]
    policy: PolicyArg,
    #[arg(long, value_enum, default_value_t = SolverArg::Gth)]
    solver: SolverArg,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// First distribution or occupation CSV.
    #[arg(long)]
    a: PathBuf,
    /// Second distribution or occupation CSV.
    #[arg(long)]
    b: PathBuf,
    /// Output directory for the report and the per-state differences; the
    /// report goes to standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RegimesArgs {
    /// Scaled parameter file; its V and D are replaced by the grid values.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Volumes V of the grid.
    #[arg(long, value_delimiter = ',', default_value = "20,200,2000")]
    volumes: Vec<f64>,
    /// Flow rates D of the grid.
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.05")]
    flows: Vec<f64>,
    /// Omitted Poisson tail mass for the mode search.
    #[arg(long, default_value_t = 1e-12)]
    tail_tol: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_NUMERICAL })
        }
    }
}
