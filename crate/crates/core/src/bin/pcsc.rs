//! `pcsc <command> --config <path> [--out <dir>] [--tol <real>] [--no-meta]`

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use pcsc::cli::{run, Command, RunArgs};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    /// Degree, Gauduchon/balanced flags, eccentricity and obstruction ladder.
    Analyze,
    /// Regime-dispatched solve; writes u and the report.
    Solve,
    /// Residual of the configured `u` against `g`.
    Verify,
    /// A function passing the integral condition that is not realizable.
    Counterexample,
    /// Manufactured-solution convergence over N = 16, 32, 64.
    Mms,
}

#[derive(Debug, Parser)]
#[command(
    name = "pcsc",
    version,
    about = "Prescribed Chern scalar curvature on periodic grids"
)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    #[arg(long)]
    config: PathBuf,
    /// Directory for report.json and field dumps.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Residual tolerance for accepting a solution.
    #[arg(long)]
    tol: Option<f64>,
    /// Omit version and timestamp so reports are byte-identical across runs.
    #[arg(long)]
    no_meta: bool,
}

fn main() -> ExitCode {
    // Usage errors exit with 1; code 2 is reserved for non-realizability.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let command = match cli.command {
        Cmd::Analyze => Command::Analyze,
        Cmd::Solve => Command::Solve,
        Cmd::Verify => Command::Verify,
        Cmd::Counterexample => Command::Counterexample,
        Cmd::Mms => Command::Mms,
    };
    let args = RunArgs {
        command,
        config: cli.config,
        out: cli.out,
        tol: cli.tol,
        no_meta: cli.no_meta,
    };
    match run(&args) {
        Ok(report) => {
            println!("{}", report.to_json());
            ExitCode::from(report.exit_code as u8)
        }
        Err(e) => {
            eprintln!("pcsc: {e}");
            ExitCode::from(1)
        }
    }
}
