//! `cwp`: experiment driver for the Curie-Weiss-Potts lab.
//!
//! Exit status: 0 on success, 1 on a numerical failure, 2 on a usage or
//! config error.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use cwp_core::CwpError;

use crate::commands::Output;
use crate::config::{ConfigError, Sources};
use crate::output::{Format, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "cwp", version, about = "Curie-Weiss-Potts experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config, or a run manifest to reproduce.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for the artifact and its manifest; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,

    /// Config override `KEY=JSON`, dotted keys for nested fields.
    #[arg(long = "set", global = true, value_name = "KEY=JSON")]
    sets: Vec<String>,

    /// Print the effective config and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Minimizers, Hessians and limiting covariances over a (beta, h) grid.
    PhaseReport,
    /// Exact law of the count vector by enumeration.
    ExactLaw,
    /// Heat-bath samples of the fluctuation vector.
    Sample,
    /// Kolmogorov distances to the Gaussian limit against n.
    CltRate,
    /// Exchangeable-pair bound terms and their scaling in n.
    SteinBounds,
    /// Distances and fourth moments at the extremity.
    CriticalRate,
    /// Gaussian-smoothing identity on a grid.
    HsCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::PhaseReport => "phase-report",
            Command::ExactLaw => "exact-law",
            Command::Sample => "sample",
            Command::CltRate => "clt-rate",
            Command::SteinBounds => "stein-bounds",
            Command::CriticalRate => "critical-rate",
            Command::HsCheck => "hs-check",
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<CwpError>() {
        Some(
            CwpError::InvalidParameter(_)
            | CwpError::CountMismatch { .. }
            | CwpError::CapacityExceeded { .. }
            | CwpError::InsufficientSamples { .. }
            | CwpError::EmptyRegion(_)
            | CwpError::InsufficientCoverage { .. }
            | CwpError::GridMismatch(_),
        ) => 2,
        _ => 1,
    }
}

fn execute<T, F>(cli: &Cli, run: F) -> anyhow::Result<()>
where
    T: Default + Serialize + DeserializeOwned,
    F: FnOnce(&T) -> anyhow::Result<Output>,
{
    let name = cli.command.name();
    let sources = Sources {
        file: cli.config.as_deref(),
        sets: &cli.sets,
        seed: cli.seed,
    };
    let config: T = config::assemble(name, &sources)?;
    let config_value = serde_json::to_value(&config)?;
    if cli.print_config {
        println!("{}", serde_json::to_string_pretty(&config_value)?);
        return Ok(());
    }

    let started_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let result = run(&config)?;
    let wall_clock_seconds = clock.elapsed().as_secs_f64();

    match &cli.out {
        None => {
            let bytes = output::render(&result, cli.format, None)?;
            std::io::stdout().lock().write_all(&bytes)?;
        }
        Some(dir) => {
            let manifest = RunManifest {
                schema_version: output::SCHEMA_VERSION,
                tool: "cwp",
                version: env!("CARGO_PKG_VERSION"),
                subcommand: name.to_string(),
                seed: config_value.pointer("/mc/seed").and_then(|v| v.as_u64()),
                config: config_value,
                threads: rayon::current_num_threads(),
                format: cli.format,
                started_at,
                wall_clock_seconds,
                outputs: Vec::new(),
                summary: result.summary.clone(),
            };
            let (data, manifest) = output::write_run(dir, &result, manifest)?;
            eprintln!("wrote {} and {}", data.display(), manifest.display());
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(ConfigError("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| ConfigError(e.to_string()))?;
    }
    match cli.command {
        Command::PhaseReport => execute(cli, commands::phase_report),
        Command::ExactLaw => execute(cli, commands::exact_law_cmd),
        Command::Sample => execute(cli, commands::sample),
        Command::CltRate => execute(cli, commands::clt_rate_cmd),
        Command::SteinBounds => execute(cli, commands::stein_bounds_cmd),
        Command::CriticalRate => execute(cli, commands::critical_rate_cmd),
        Command::HsCheck => execute(cli, commands::hs_check_cmd),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors by itself.
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
