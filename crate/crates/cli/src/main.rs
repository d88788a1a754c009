//! `xpmcap`: reproducible XPM phase-noise experiments.
//!
//! Exit status is 0 when every check passes, 1 when a validation fails,
//! 2 for usage errors and 3 for any other failure. Errors are printed to
//! stderr as a single tab-separated record `error<TAB>kind<TAB>message`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CapacityArgs, Mode, PropagateArgs, Units, UsageError, ValidateArgs};

#[derive(Debug, Parser)]
#[command(name = "xpmcap", version, about = "XPM phase-noise simulation and capacity analysis")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Link and grid config (TOML). Defaults to the built-in nominal link.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "XPM_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Propagate channel envelopes through the link.
    Propagate {
        /// Directory holding `channel_<k>.sig.txt` inputs; missing
        /// neighbour channels are taken as zero.
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Coupled)]
        mode: Mode,
        /// Potential file for surrogate mode; sampled from the seed if absent.
        #[arg(long, conflicts_with = "zero_potential")]
        potential: Option<PathBuf>,
        /// Run surrogate mode with a vanishing potential.
        #[arg(long)]
        zero_potential: bool,
    },
    /// Monte Carlo check of the phase process statistics.
    ValidateU {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Time separation t - t', ps.
        #[arg(long, default_value_t = 1.0)]
        interval: f64,
        /// Allowed relative deviation of the variance ratio from 1.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        /// Gaussianity rejection level.
        #[arg(long, default_value_t = 0.01)]
        level: f64,
    },
    /// Evaluate the capacity bound over a parameter sweep.
    Capacity {
        /// `name=v1,v2,...`, `name=lin:a:b:n`, `name=geom:a:b:n`, or `@file`.
        #[arg(long)]
        sweep: Option<String>,
        /// Additive noise variance σ²_N per symbol, W.
        #[arg(long)]
        sigma_n: f64,
        /// Add a Monte Carlo mutual-information estimate per row.
        #[arg(long)]
        with_mi: bool,
        /// Ring constellation `RINGSxPHASES`.
        #[arg(long, default_value = "1x4")]
        constellation: String,
        #[arg(long, default_value_t = 10_000)]
        mi_samples: usize,
        #[arg(long, value_enum, default_value_t = Units::Nats)]
        units: Units,
        /// Also report the bound with the exact harmonic channel sum.
        #[arg(long)]
        harmonic: bool,
    },
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if e.downcast_ref::<UsageError>().is_some() {
        return "usage";
    }
    match e.downcast_ref::<xpmcap::Error>() {
        Some(xpmcap::Error::InvalidConfig(_)) => "invalid_config",
        Some(xpmcap::Error::GridMismatch(_)) => "grid_mismatch",
        Some(xpmcap::Error::PowerConstraint { .. }) => "power_constraint",
        Some(xpmcap::Error::InvalidArgument(_)) => "invalid_argument",
        Some(xpmcap::Error::InvalidSweepPoint { .. }) => "invalid_sweep_point",
        Some(xpmcap::Error::Parse(_)) => "parse",
        Some(xpmcap::Error::Io(_)) => "io",
        None if e.downcast_ref::<std::io::Error>().is_some() => "io",
        None => "error",
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.common.workers {
        if n == 0 {
            return Err(UsageError("worker count must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let Common { config, seed, out, .. } = cli.common;
    let cfg = config.as_deref();
    match cli.command {
        Command::Propagate {
            inputs,
            mode,
            potential,
            zero_potential,
        } => commands::propagate(
            cfg,
            seed,
            &out,
            &PropagateArgs {
                inputs,
                mode,
                potential,
                zero_potential,
            },
        ),
        Command::ValidateU {
            trials,
            interval,
            tolerance,
            level,
        } => commands::validate_u(
            cfg,
            seed,
            &out,
            &ValidateArgs {
                trials,
                interval,
                tolerance,
                level,
            },
        ),
        Command::Capacity {
            sweep,
            sigma_n,
            with_mi,
            constellation,
            mi_samples,
            units,
            harmonic,
        } => commands::capacity(
            cfg,
            seed,
            &out,
            &CapacityArgs {
                sweep,
                sigma_n,
                with_mi,
                constellation,
                mi_samples,
                units,
                harmonic,
            },
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let kind = error_kind(&e);
            let msg = format!("{e:#}").replace(['\t', '\n'], " ");
            eprintln!("error\t{kind}\t{msg}");
            ExitCode::from(if kind == "usage" { 2 } else { 3 })
        }
    }
}
