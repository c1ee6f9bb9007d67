//! Batch front end for the pulse-design library: JSON config in, waveforms
//! and reports out. Exit codes: 0 success, 2 usage/config error, 3 the
//! optimizer finished without reaching the target fidelity (files are still
//! written).

use std::path::PathBuf;

use thiserror::Error;

pub mod commands;
pub mod config;
pub mod pulse_io;

use commands::RunContext;
use config::Task;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

#[derive(Debug, Clone)]
pub struct CliArgs {
    pub config: PathBuf,
    /// Overrides io.out_dir from the config.
    pub out: Option<PathBuf>,
    /// Overrides grape.rng_seed from the config.
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Run one task; returns the process exit code.
pub fn run_cli(args: &CliArgs) -> Result<i32, CliError> {
    if let Some(n) = args.threads {
        // Ignore the error if a global pool already exists (e.g. in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut loaded = config::load_config(&args.config)?;
    if let Some(seed) = args.seed {
        match loaded.config.grape.as_mut() {
            Some(g) => g.rng_seed = seed,
            None => return Err(CliError::Config("--seed given but config has no grape block".into())),
        }
    }
    let out_dir = match &args.out {
        Some(p) => p.clone(),
        None => loaded.base_dir.join(&loaded.config.io.out_dir),
    };
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    let ctx = RunContext { loaded, out_dir };
    match ctx.loaded.config.task {
        Task::Optimize => commands::cmd_optimize(&ctx),
        Task::Fid => commands::cmd_fid(&ctx),
        Task::Map => commands::cmd_map(&ctx),
        Task::Spectrum => commands::cmd_spectrum(&ctx),
        Task::Distort => commands::cmd_distort(&ctx),
        Task::ResonatorInfo => commands::cmd_resonator_info(&ctx),
    }
}
