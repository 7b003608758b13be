//! `hrma`: build geodesic rays from problem files and run the numerical check suites.

mod commands;
mod error;
mod problem;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hrma_core::checks::{RunConfig, Suite, DEFAULT_SEED};

use crate::error::{CliError, Result};
use crate::problem::Problem;

#[derive(Parser)]
#[command(name = "hrma", version, about = "Weak geodesic rays from test curves and filtrations")]
struct Cli {
    /// Worker threads; overrides the problem file.
    #[arg(long, global = true, env = "HRMA_THREADS")]
    threads: Option<usize>,
    /// Multiplies every check bound.
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ray, energies and linearity report for a `curve` or `dual_u` problem.
    Ray {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Histograms, concave transforms, Phong-Sturm rays and equivalence gaps per k.
    Filtration {
        #[arg(long)]
        spec: PathBuf,
        /// Comma-separated degrees, e.g. `4,8,16,32`.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs a numerical check suite.
    Check {
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        /// Write the JSON report here.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Include wall-clock times in the report.
        #[arg(long)]
        timings: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Core,
    Envelopes,
    Rays,
    Filtration,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Core => Suite::Core,
            SuiteArg::Envelopes => Suite::Envelopes,
            SuiteArg::Rays => Suite::Rays,
            SuiteArg::Filtration => Suite::Filtration,
            SuiteArg::All => Suite::All,
        }
    }
}

fn init_threads(n: Option<usize>) {
    if let Some(n) = n.filter(|&n| n > 0) {
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn load(spec: &Path, threads: Option<usize>) -> Result<Problem> {
    let p = Problem::load(spec)?;
    init_threads(threads.or(p.spec.threads));
    Ok(p)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ray { spec, out } => {
            let problem = load(&spec, cli.threads)?;
            for f in commands::cmd_ray(&problem, &out)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Filtration { spec, k, out } => {
            let problem = load(&spec, cli.threads)?;
            for f in commands::cmd_filtration(&problem, k, cli.tol_scale, &out)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Check { suite, json, seed, timings } => {
            init_threads(cli.threads);
            let cfg = RunConfig { seed, tol_scale: cli.tol_scale, timings };
            let report = commands::cmd_check(suite.into(), &cfg, json.as_deref())?;
            for c in &report.checks {
                println!("{}", c.summary());
            }
            let failed = report.checks.iter().filter(|c| !c.pass).count();
            if failed > 0 {
                return Err(CliError::ChecksFailed(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
