use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phasefield::io;

#[derive(Parser)]
#[command(name = "phasefield", version, about = "Stabilized spectral solvers for Cahn-Hilliard and MBE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation from a JSON config; trailing `--key value` pairs override config fields.
    Run {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Temporal or spatial convergence study, written to converge.csv.
    Converge(io::ConvergeArgs),
    /// Energy-decay scan over step sizes and stabilization values, written to scan.csv.
    StabilityScan(io::ScanArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { io::EXIT_CONFIG as u8 } else { 0 });
        }
    };
    if let Err(e) = io::configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(io::EXIT_CONFIG as u8);
    }
    let code = match cli.command {
        Command::Run { config, overrides } => match io::parse_override_args(&overrides) {
            Ok(o) => io::cmd_run(&config, &o),
            Err(e) => {
                eprintln!("error: {e}");
                io::exit_code(&e)
            }
        },
        Command::Converge(args) => io::cmd_converge(&args),
        Command::StabilityScan(args) => io::cmd_stability_scan(&args),
    };
    ExitCode::from(code as u8)
}
