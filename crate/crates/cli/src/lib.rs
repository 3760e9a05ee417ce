//! Command-line front end for `resflow`: argument and config handling,
//! artifact writing, and exit-status policy.
//!
//! Exit status is 0 when every certified inequality of the run holds, 1 on a
//! failed certification or a numerical failure (the summary is still written),
//! and 2 on configuration errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::Path;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod summary;
pub mod svg;

pub use config::{KappaSpec, OperatorSpec, RunArgs, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "resflow", version, about = "Residual-controlled homotopy path following")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FlowChoice {
    Generalized,
    Davidenko,
    ContinuousNewton,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a flow and certify its residual bounds.
    Follow {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "generalized")]
        flow: FlowChoice,
        /// End time for the continuous Newton flow.
        #[arg(long, default_value_t = 3.0)]
        horizon: f64,
    },
    /// Build a piecewise-linear path on the dyadic partition of level k.
    BuildPath {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, short = 'k', default_value_t = 3)]
        level: u32,
    },
    /// Restart the unit-time flow from each terminal point.
    Restart {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 10)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Re-anchor a frozen Jacobian at every restart.
        #[arg(long)]
        refresh: bool,
    },
    /// Approximately solve Ψ(u) = g from u = 0.
    Invert {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        psi: String,
        /// Comma-separated target components.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        g: Vec<f64>,
    },
    /// Estimate κ over the trust ball.
    Kappa {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Check analytic against finite-difference derivatives, and optionally re-check a trace.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 20)]
        points: usize,
        /// Trace CSV written by `follow` for the same problem.
        #[arg(long)]
        trace: Option<std::path::PathBuf>,
    },
    /// Print the problem corpus.
    ListProblems,
}

/// Runs a parsed command and returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Follow { run, flow, horizon } => commands::follow(&run, flow, horizon),
        Command::BuildPath { run, level } => commands::build_path(&run, level),
        Command::Restart {
            run,
            max_iters,
            tol,
            refresh,
        } => commands::restart(&run, max_iters, tol, refresh),
        Command::Invert { run, psi, g } => commands::invert(&run, &psi, &g),
        Command::Kappa { run } => commands::kappa(&run),
        Command::Verify { run, points, trace } => commands::verify(&run, points, trace.as_deref()),
        Command::ListProblems => {
            commands::list_problems();
            Ok(true)
        }
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("resflow: {e}");
            e.exit_code()
        }
    }
}
