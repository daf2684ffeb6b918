mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

/// Failures surfaced to the user, each with a stable tag.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mfkernels::Error),
    #[error("{0}")]
    Usage(String),
    #[error("sinkhorn did not converge (marginal violation {0:e})")]
    NotConverged(f64),
    #[error("{0} self-test check(s) failed")]
    SelftestFailed(usize),
}

impl CliError {
    fn tag(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.tag(),
            CliError::Usage(_) => "USAGE",
            CliError::NotConverged(_) => "NOT_CONVERGED",
            CliError::SelftestFailed(_) => "SELFTEST_FAILED",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[USAGE]: {first}");
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error[USAGE]: cannot set up {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.tag());
            ExitCode::from(e.exit_code())
        }
    }
}
