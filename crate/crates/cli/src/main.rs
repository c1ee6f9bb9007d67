use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use resona_cli::{run_cli, CliArgs};

/// Pulse design through a bandwidth-limited resonator: optimize control
/// waveforms and simulate the resulting spin dynamics.
#[derive(Parser)]
#[command(name = "resona", version, about)]
struct Args {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides io.out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (overrides grape.rng_seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for ensemble and grid evaluation.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cli_args = CliArgs {
        config: args.config,
        out: args.out,
        seed: args.seed,
        threads: args.threads,
    };
    match run_cli(&cli_args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
