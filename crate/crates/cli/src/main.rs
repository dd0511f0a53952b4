use std::path::PathBuf;
use std::process::ExitCode;

use carnot_cli::config::parse_grid;
use carnot_cli::{execute, Coefficient, Command, Overrides, EXIT_USAGE};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "carnot",
    version,
    about = "Hardy inequalities and p-Laplacian experiments on Carnot groups"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Residual checks of the group calculus (exit 1 if any fails).
    Verify(Common),
    /// Rayleigh quotients along the extremal family.
    HardyScan(Common),
    /// Rayleigh quotients along a concentrating family.
    SigmaInf(Common),
    /// Run the parabolic solver once.
    Evolve(Common),
    /// Run the parabolic solver on successively refined grids.
    Refine(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    /// Potential coefficient: a number, or a multiple of the Hardy constant such as `2C`.
    #[arg(long, value_parser = Coefficient::parse)]
    lambda: Option<Coefficient>,
    /// Grid cells `N` or `NxM`; mesh cells per axis for scans.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let (command, common) = match cli.verb {
        Verb::Verify(c) => (Command::Verify, c),
        Verb::HardyScan(c) => (Command::HardyScan, c),
        Verb::SigmaInf(c) => (Command::SigmaInf, c),
        Verb::Evolve(c) => (Command::Evolve, c),
        Verb::Refine(c) => (Command::Refine, c),
    };
    let overrides = Overrides {
        p: common.p,
        lambda: common.lambda,
        grid: common.grid,
        out: common.out,
        seed: common.seed,
    };
    ExitCode::from(execute(command, common.config.as_deref(), &overrides) as u8)
}
