//! `delegate`: policy tooling, calibration, threshold selection and
//! simulation of human-AI delegation workflows.
//!
//! Exit codes: 0 success, 1 diagnostics or infeasible result, 2 usage error,
//! 3 runtime failure.

mod calibrate;
mod output;
mod policy;
mod simulate;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Environment variable naming the default output directory for
/// `simulate` and `compare`.
pub const OUT_DIR_ENV: &str = "DELEGATE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "delegate", version, about = "Delegation criteria for human-AI diagnostic workflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check, format or build delegation policies.
    #[command(subcommand)]
    Policy(PolicyCommand),
    /// Fit an isotonic calibration map from (raw_score, correct) records.
    Calibrate(calibrate::CalibrateArgs),
    /// Select an autonomy threshold from labelled assessments.
    Threshold(calibrate::ThresholdArgs),
    /// Run a scenario and write per-modality reports and audit logs.
    Simulate(simulate::SimulateArgs),
    /// Paired comparison of modalities against a baseline.
    Compare(simulate::CompareArgs),
}

#[derive(Debug, Subcommand)]
enum PolicyCommand {
    /// Parse and validate a policy against a field schema.
    Check(policy::CheckArgs),
    /// Print a policy in canonical form.
    Fmt(policy::FmtArgs),
    /// Splice selected thresholds into a policy template.
    Build(policy::BuildArgs),
}

/// Run options shared by `simulate` and `compare`.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Base seed; defaults to the scenario's.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<u32>,
    #[arg(long)]
    pub population_size: Option<usize>,
    /// Output directory [default: $DELEGATE_OUT_DIR, else ./out]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    /// Diagnostics or an infeasible result (exit 1).
    pub fn rejected(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 1, error: error.into() }
    }

    /// I/O or other runtime failure (exit 3).
    pub fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 3, error: error.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CmdResult = Result<(), Failure>;

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Policy(PolicyCommand::Check(a)) => policy::check(&a),
        Command::Policy(PolicyCommand::Fmt(a)) => policy::fmt(&a),
        Command::Policy(PolicyCommand::Build(a)) => policy::build(&a),
        Command::Calibrate(a) => calibrate::calibrate(&a),
        Command::Threshold(a) => calibrate::threshold(&a),
        Command::Simulate(a) => simulate::simulate(&a),
        Command::Compare(a) => simulate::compare(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
