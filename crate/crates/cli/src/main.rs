//! `pnavier`: run, check and sweep the Galerkin solver from a TOML config.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical failure or failed
//! checks, 3 I/O and parse errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pnavier::basis::{build_stream_basis, BasisKind};
use pnavier::config::{SolverConfig, DEFAULTS_TOML};
use pnavier::pipeline::{self, Suite};
use pnavier::spectral::build_spectral_basis;
use pnavier::Error;

#[derive(Parser, Debug)]
#[command(name = "pnavier", version, about = "Spectral Galerkin solver for the p-Navier-Stokes equations")]
struct Cli {
    /// Print the default configuration and exit.
    #[arg(long)]
    print_defaults: bool,

    /// Cap on worker threads (0 lets the pool decide).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate and write trace, snapshots and summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build a basis and write it as text.
    Basis {
        #[arg(long)]
        kind: BasisKind,
        /// Number of fields (a perfect square for the stream basis).
        #[arg(long)]
        n: usize,
        /// Stream functions per axis of the spectral pool.
        #[arg(long)]
        pool: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a check suite: inequalities, energy, weakform or all.
    Check {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        config: PathBuf,
    },
    /// Convergence sweep over basis sizes.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
    },
}

enum Failure {
    Error(Error),
    ChecksFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_)
        | Error::InvalidConfig { .. }
        | Error::IndexOutOfRange { .. }
        | Error::UnsupportedOrder(_)
        | Error::TrivialInitialData => 1,
        Error::NonFiniteSample { .. }
        | Error::IllConditionedBasis(_)
        | Error::PoissonConvergence { .. }
        | Error::StepUnderflow { .. }
        | Error::NewtonFailure { .. }
        | Error::Numerical(_) => 2,
        Error::Parse { .. } | Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::Plot(_) => 3,
    }
}

fn write_basis(kind: BasisKind, n: usize, pool: Option<usize>, out: &Path) -> Result<(), Error> {
    let basis = match kind {
        BasisKind::Stream => {
            let r = n.isqrt();
            if r * r != n {
                return Err(Error::InvalidArgument(format!(
                    "the stream basis needs a perfect square, got {n}"
                )));
            }
            build_stream_basis(r, true)?
        }
        BasisKind::Spectral => build_spectral_basis(pool.unwrap_or(n.isqrt() + 2), n)?.basis,
    };
    std::fs::write(out, basis.to_text()).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    println!("wrote {} ({} fields) to {}", basis.id(), basis.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.threads > 0 && !pnavier::par::set_threads(cli.threads) {
        eprintln!("warning: --threads ignored (thread pool unavailable)");
    }
    if cli.print_defaults {
        print!("{DEFAULTS_TOML}");
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Error::InvalidArgument("no subcommand given (try --help)".into()).into());
    };
    match command {
        Command::Simulate { config } => {
            let cfg = SolverConfig::load(&config)?;
            let out = cfg.resolved_output_dir();
            let s = pipeline::simulate(&cfg, &out)?;
            println!(
                "{}: {} steps to t = {}, H {:e} -> {:e}, defect {:e} relative",
                s.basis_id,
                s.steps,
                s.t_reached,
                s.h0,
                s.final_h,
                s.integrated_defect.abs() / s.h0
            );
            println!("outputs in {}", out.display());
        }
        Command::Basis { kind, n, pool, out } => write_basis(kind, n, pool, &out)?,
        Command::Check { suite, config } => {
            let suite: Suite = suite.parse()?;
            let cfg = SolverConfig::load(&config)?;
            let out = pipeline::check(suite, &cfg, &cfg.resolved_output_dir())?;
            for r in &out.reports {
                println!(
                    "{:<24} {} worst {:e} (threshold {:e}, {} samples)",
                    r.name,
                    if r.pass { "PASS" } else { "FAIL" },
                    r.worst,
                    r.threshold,
                    r.samples
                );
            }
            if !out.pass {
                return Err(Failure::ChecksFailed);
            }
        }
        Command::Sweep { config, n_list } => {
            let cfg = SolverConfig::load(&config)?;
            let r = pipeline::sweep(&cfg, &n_list, &cfg.resolved_output_dir())?;
            for d in &r.distances {
                println!("N = {:>3} vs {:>3}: {:e}", d.n_i, d.n_j, d.distance);
            }
            println!("distance to the largest basis decreasing: {}", r.decreasing);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::ChecksFailed) => {
            eprintln!("error: one or more checks failed");
            ExitCode::from(2)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
