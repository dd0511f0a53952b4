//! Command-line driver for the carnot-core experiments.
//!
//! Each verb reads an [`ExperimentConfig`] (JSON, every field optional),
//! applies flag overrides and either prints a verification report or writes
//! a CSV table whose first line records the resolved configuration.

pub mod config;
pub mod error;
pub mod run;
pub mod verify;

pub use config::{Coefficient, Command, ExperimentConfig, Overrides};
pub use error::{CliError, CliResult, EXIT_CHECK_FAILED, EXIT_IO, EXIT_OK, EXIT_USAGE};
pub use run::{run, RunOutput};
pub use verify::{run_verify, VerifyReport};

/// Runs one command to completion, printing to stdout/stderr, and returns
/// the process exit status.
pub fn execute(command: Command, config: Option<&std::path::Path>, overrides: &Overrides) -> i32 {
    match try_execute(command, config, overrides) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn try_execute(
    command: Command,
    config: Option<&std::path::Path>,
    overrides: &Overrides,
) -> CliResult<i32> {
    let base = match config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let cfg = base.resolve(command, overrides)?;
    if command == Command::Verify {
        let report = run_verify(&cfg)?;
        let text = report.render();
        print!("{text}");
        if let Some(path) = &cfg.out {
            carnot_core::report::write_atomic(path, text.as_bytes())
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        }
        return Ok(if report.all_passed() {
            EXIT_OK
        } else {
            EXIT_CHECK_FAILED
        });
    }
    let out = run(&cfg)?;
    println!("{}", out.summary);
    Ok(EXIT_OK)
}
