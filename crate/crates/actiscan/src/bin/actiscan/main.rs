//! Command-line front end.
//!
//! Exit status: 0 on success, 1 when experiment cells or checks fail (or on
//! IO and data errors), 2 for invalid configuration or arguments.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "actiscan", version, about = "Active sinogram sampling for sparse-view CT")]
pub struct Cli {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = one per core). Never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the configured phantoms as raw images and PGM previews.
    Phantom(commands::PhantomArgs),
    /// Forward-project an image over all angles, optionally with noise.
    Scan(commands::ScanArgs),
    /// Reconstruct an image from a sinogram file.
    Reconstruct(commands::ReconstructArgs),
    /// Train the post-filter and the scorer by alternating updates.
    Train(commands::TrainArgs),
    /// Run one sampling episode and write its trace.
    RunPolicy(commands::RunPolicyArgs),
    /// Run the full phantom x policy x noise grid.
    Compare,
    /// Check analytic gradients against central finite differences.
    Gradcheck(commands::GradcheckArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_config_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn is_config_error(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        cause
            .downcast_ref::<actiscan::Error>()
            .is_some_and(actiscan::Error::is_config)
            || matches!(
                cause.downcast_ref::<actiscan_core::Error>(),
                Some(actiscan_core::Error::Config(_))
            )
            || cause.downcast_ref::<commands::UsageError>().is_some()
    })
}
