//! `grbsde`: experiment driver for the reflected generalized BSDE
//! laboratory.
//!
//! One subcommand per theorem cluster:
//!
//! * `check`: coefficient assumptions and data compatibility
//! * `solve`: unreflected backward solve, fixed-point iteration,
//!   contraction measurement, a priori estimate
//! * `penalize`: penalty schedule with convergence, uniform-bound and
//!   auxiliary-equation diagnostics
//! * `reflect`: direct reflected solve, Skorokhod residual,
//!   K-decomposition, Snell agreement, mirror duality
//! * `stop`: optimal-stopping representation (enumeration / hitting
//!   policies)
//! * `compare`: comparison principle under ordered data bumps
//!
//! Exit status 0 means every asserted invariant passed. Identical config and
//! seed produce byte-identical CSV output.

mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::ExperimentConfig;
use run::{Pipeline, StopMethod};

#[derive(Parser)]
#[command(name = "grbsde", version, about = "Reflected generalized BSDE laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV reports and the summary.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the seed from the config's run section.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StopMethodArg {
    Enumerate,
    NuP,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the coefficient assumptions and data compatibility.
    Check(CommonArgs),
    /// Solve the unreflected equation and measure the fixed-point map.
    Solve(CommonArgs),
    /// Run the penalization schedule with its diagnostics.
    Penalize(CommonArgs),
    /// Solve the reflected equation directly and verify minimality.
    Reflect(CommonArgs),
    /// Certify the optimal-stopping representation.
    Stop {
        #[command(flatten)]
        common: CommonArgs,
        /// How to certify the representation.
        #[arg(long, value_enum, default_value_t = StopMethodArg::Both)]
        method: StopMethodArg,
    },
    /// Check the comparison principle under ordered bumps.
    Compare(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (pipeline, common) = match cli.command {
        Command::Check(c) => (Pipeline::Check, c),
        Command::Solve(c) => (Pipeline::Solve, c),
        Command::Penalize(c) => (Pipeline::Penalize, c),
        Command::Reflect(c) => (Pipeline::Reflect, c),
        Command::Stop { common, method } => (
            Pipeline::Stop(match method {
                StopMethodArg::Enumerate => StopMethod::Enumerate,
                StopMethodArg::NuP => StopMethod::NuP,
                StopMethodArg::Both => StopMethod::Both,
            }),
            common,
        ),
        Command::Compare(c) => (Pipeline::Compare, c),
    };

    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("io error: cannot read {}: {e}", common.config.display());
            return ExitCode::from(2);
        }
    };
    let cfg = match ExperimentConfig::from_json(&text) {
        Ok(cfg) => cfg,
        Err(violations) => {
            eprintln!("config error: {} violation(s)", violations.len());
            for v in violations {
                eprintln!("  {v}");
            }
            return ExitCode::from(2);
        }
    };

    match run::execute(pipeline, &cfg, &common.out, common.seed) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
