//! Command-line harness. `run` executes one configured experiment; `sweep`
//! repeats it along one configuration axis and writes a comparison CSV.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 config error.
//! Log verbosity via the RUST_LOG environment variable.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use protofed::config::ExperimentConfig;
use protofed::harness::{run_experiment, run_sweep, SweepAxis};
use protofed::Error;

#[derive(Parser)]
#[command(name = "protofed", about = "Federated prototype-alignment simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config.
    Run { config: PathBuf },
    /// Run the experiment once per value of one config axis.
    Sweep {
        config: PathBuf,
        /// kernel | proto_fraction | transmit | mmd_mode
        #[arg(long)]
        axis: String,
        /// comma-separated values, e.g. none,linear,poly2,gaussian
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn execute(cli: Cli) -> protofed::Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (summary, _) = run_experiment(&cfg)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?
            );
        }
        Command::Sweep {
            config,
            axis,
            values,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let axis = SweepAxis::parse(&axis)?;
            let rows = run_sweep(&cfg, axis, &values)?;
            println!("value,best_map,best_rank1,best_round,total_bytes");
            for r in &rows {
                println!(
                    "{},{},{},{},{}",
                    r.value, r.best_map, r.best_rank1, r.best_round, r.total_bytes
                );
            }
        }
    }
    Ok(())
}
