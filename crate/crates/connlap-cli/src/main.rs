//! `connlap` — build graph (connection) Laplacians from sampled manifolds
//! and run the convergence experiments.
//!
//! Exit codes: 0 success, 1 validation error (arguments, config, input
//! files), 2 numerical failure (eigensolver or quadrature non-convergence,
//! power overflow).

mod commands;

use std::process::ExitCode;

use clap::Parser;

use commands::{Cli, CommandError};

fn main() -> ExitCode {
    configure_threads();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage/flag problems are validation errors: usage text on
            // stderr, exit 1.
            eprint!("{e}");
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CommandError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CommandError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}

/// `CONNLAP_THREADS` caps the worker count; 0 or unset means automatic.
fn configure_threads() {
    if let Ok(v) = std::env::var("CONNLAP_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
