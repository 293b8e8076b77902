//! `bode`: solve, evaluate and optimize Bayesian designs for ODE models.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use bode_core::exec::Exec;
use bode_core::rng::Seed;
use clap::{Parser, Subcommand};

use commands::Ctx;
use config::Prepared;

/// Exit status classes.
pub enum Failure {
    /// Unreadable, malformed or inconsistent input (exit 2).
    Config(anyhow::Error),
    /// Factorization failures, non-finite values, weight underflow (exit 3).
    Numerical(anyhow::Error),
    /// Output could not be written (exit 1).
    Io(anyhow::Error),
}

impl Failure {
    pub fn from_core(e: bode_core::error::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.into())
        } else {
            Failure::Config(e.into())
        }
    }
}

#[derive(Parser)]
#[command(name = "bode", version, about = "Bayesian optimal design for ODE models with a probabilistic solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Draw solution paths on the solver grid.
    Solve(Common),
    /// Repeated expected-loss estimates at the initial design.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        /// Also write per-sample losses and weight diagnostics.
        #[arg(long)]
        audit: bool,
    },
    /// Optimize the design with approximate coordinate exchange.
    Design(Common),
    /// Repeated estimates for the initial design, the config's named designs
    /// and any design files given.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[arg(long = "design")]
        designs: Vec<PathBuf>,
    },
    /// Check a config and/or emitted files against their schemas.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        files: Vec<PathBuf>,
    },
}

fn context(common: &Common, exec: Exec) -> Result<Ctx, Failure> {
    let prep = Prepared::load(&common.config)?;
    let seed = Seed(common.seed.unwrap_or(prep.cfg.seed));
    commands::ensure_dir(&common.out)?;
    Ok(Ctx { prep, seed, out: common.out.clone(), exec })
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::Config(e.into()))?;
    }
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match cli.command {
        Command::Solve(c) => commands::solve(&context(&c, exec)?),
        Command::Evaluate { common, repeats, audit } => commands::evaluate(&context(&common, exec)?, repeats, audit),
        Command::Design(c) => commands::design(&context(&c, exec)?),
        Command::Compare { common, repeats, designs } => {
            commands::compare(&context(&common, exec)?, repeats, &designs)
        }
        Command::Validate { config, files } => {
            if config.is_none() && files.is_empty() {
                return Err(Failure::Config(anyhow::anyhow!("nothing to validate")));
            }
            if let Some(c) = config {
                Prepared::load(&c)?;
                println!("{}: ok (config)", c.display());
            }
            for (f, kind) in commands::validate_files(&files)? {
                println!("{}: ok ({kind})", f.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, e) = match f {
                Failure::Config(e) => (2, e),
                Failure::Numerical(e) => (3, e),
                Failure::Io(e) => (1, e),
            };
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
