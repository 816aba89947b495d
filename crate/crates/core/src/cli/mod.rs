//! Batch front end: `key = value` experiment files in, CSV out.
//!
//! Exit codes: 0 success, 1 a property or rate check failed, 2 configuration
//! error, 3 numeric failure, 4 degenerate diagnostic.

mod build;
mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{Outcome, BSPDE_SLACK_TOL, SLACK_TOL};
pub use config::ConfigDoc;

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "bsvi",
    version,
    about = "Penalized BSVI solver and diagnostics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment file (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Binary ensemble cache: read if present, written otherwise.
    #[arg(long, global = true)]
    pub cache_ensemble: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Resolvent property checks on a catalog function.
    ProxCheck,
    /// Solve one penalized equation (or the finest of a schedule).
    Solve,
    /// Rate study across an epsilon schedule.
    Converge,
    /// Obstacle or linear problem on the unit interval.
    Bspde,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Usage(_) | Error::Config(_) | Error::Format(_) | Error::Io(_) => EXIT_CONFIG,
        Error::Numeric { .. } | Error::SingularRegression { .. } | Error::Generator { .. } => {
            EXIT_NUMERIC
        }
        Error::Degenerate(_) => EXIT_DEGENERATE,
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::usage("--config <path> is required"))?;
    let doc = ConfigDoc::read(path)?;
    let cache = cli.cache_ensemble.as_deref();
    let run = || match cli.command {
        Command::ProxCheck => commands::prox_check(&doc, &cli.out),
        Command::Solve => commands::solve(&doc, &cli.out, cache),
        Command::Converge => commands::converge(&doc, &cli.out, cache),
        Command::Bspde => commands::bspde(&doc, &cli.out, cache),
    };
    match cli.threads {
        Some(0) => Err(Error::usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Runs the CLI and returns the process exit code.
pub fn main_with(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.passed {
                EXIT_OK
            } else {
                eprintln!("check failed: {}", outcome.summary);
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
