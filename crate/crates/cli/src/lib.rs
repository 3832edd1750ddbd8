//! Command-line front-end wiring the toolkit into reproducible experiments.
//! Every run reads one flat config (defaults, optional TOML file, key=value
//! overrides), derives all randomness from a single seed, and writes its
//! artifacts plus a hash manifest under the output directory.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use sgwn_core::{Error, Result};

use crate::config::Config;

#[derive(Debug, Parser)]
#[command(
    name = "sgwn",
    about = "Spectral graph wavelet network fault-diagnosis experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML config file with flat dotted keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory for all artifacts (created if absent).
    #[arg(long, default_value = "runs/out", global = true)]
    pub out: PathBuf,

    /// Master seed; shorthand for --set seed=N.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// key=value config overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Generate the synthetic multi-sensor dataset file.
    Synth,
    /// Train a model and write checkpoint, history, and metrics.
    Train,
    /// Export filter-bank frequency response curves.
    Filters,
    /// Export wavelet coefficients for one sample.
    Transform,
    /// Squared envelope spectrum of a sample, a checkpoint's features, or the
    /// AM reference vector.
    Ses,
    /// Accuracy vs depth for the SGWN and the low-pass baseline.
    DepthSweep,
    /// Accuracy and wall time over a (J, K) grid.
    HyperSweep,
    /// Accuracy on clean data and under injected noise at each SNR.
    NoiseSweep,
}

/// Exit-code contract: 0 success, 2 config error, 3 missing input,
/// 4 numerical or I/O failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Validation(_) | Error::Capacity(_) | Error::Json(_) => 2,
        Error::MissingInput(_) => 3,
        Error::Numerical(_) | Error::Format { .. } | Error::Io(_) => 4,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = Config::load(cli.config.as_deref(), &overrides)?;

    #[cfg(feature = "parallel")]
    {
        let jobs = cfg.jobs()?;
        if jobs > 1 {
            // Best effort: the global pool can only be sized once per process.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
        }
    }

    let out = &cli.out;
    match cli.command {
        Command::Synth => commands::cmd_synth(&cfg, out),
        Command::Train => commands::cmd_train(&cfg, out),
        Command::Filters => commands::cmd_filters(&cfg, out),
        Command::Transform => commands::cmd_transform(&cfg, out),
        Command::Ses => commands::cmd_ses(&cfg, out),
        Command::DepthSweep => commands::cmd_depth_sweep(&cfg, out),
        Command::HyperSweep => commands::cmd_hyper_sweep(&cfg, out),
        Command::NoiseSweep => commands::cmd_noise_sweep(&cfg, out),
    }
}
