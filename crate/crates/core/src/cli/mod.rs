//! Command-line front end: JSON configs in, CSV series and JSON reports out.
//!
//! Exit codes: 0 success, 1 validation failure, 2 numerical failure.

mod commands;
mod config;
mod output;

pub use commands::{
    cmd_decay_fit, cmd_passivity_check, cmd_resolvent_scan, cmd_simulate, cmd_transfer_scan,
    DecayFitArgs, PassivityArgs, ResolventArgs, TransferArgs, TransferModel,
};
pub use config::{InitialExpressionConfig, Outputs, RunConfig};
pub use output::write_atomic;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::discretize::DiscretizeError;
use crate::expr::ExprError;
use crate::interconnect::InterconnectError;
use crate::linalg::LinalgError;
use crate::lti::LtiError;
use crate::spectral::SpectralError;
use crate::timestep::TimestepError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<ExprError> for CliError {
    fn from(e: ExprError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<DiscretizeError> for CliError {
    fn from(e: DiscretizeError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<LinalgError> for CliError {
    fn from(e: LinalgError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<LtiError> for CliError {
    fn from(e: LtiError) -> Self {
        match e {
            LtiError::SingularFeedback(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<InterconnectError> for CliError {
    fn from(e: InterconnectError) -> Self {
        match e {
            InterconnectError::SingularLoop => CliError::Numerical(e.to_string()),
            InterconnectError::Lti(inner) => inner.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TimestepError> for CliError {
    fn from(e: TimestepError) -> Self {
        match e {
            TimestepError::Singular(_) => CliError::Numerical(e.to_string()),
            TimestepError::Model(inner) => inner.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::EmptyWindow(..)
            | SpectralError::DegenerateWindow(_)
            | SpectralError::InvalidGrid(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "polystab",
    version,
    about = "Energy-consistent simulation and spectral analysis of boundary-coupled wave systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a model and write its energy trace as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Trace CSV path; defaults to `outputs.trace` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the passivity identities of both blocks and the coupled system.
    PassivityCheck(PassivityArgs),
    /// Sample Re P_c(is) in closed form and fit the lower bound η₀/(1+|s|^α).
    TransferScan(TransferArgs),
    /// Sample the resolvent norm on iℝ and fit its growth exponent.
    ResolventScan(ResolventArgs),
    /// Fit a power law to an energy trace.
    DecayFit(DecayFitArgs),
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out } => cmd_simulate(&config, out.as_deref()),
        Command::PassivityCheck(args) => cmd_passivity_check(&args),
        Command::TransferScan(args) => cmd_transfer_scan(&args),
        Command::ResolventScan(args) => cmd_resolvent_scan(&args),
        Command::DecayFit(args) => cmd_decay_fit(&args),
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
