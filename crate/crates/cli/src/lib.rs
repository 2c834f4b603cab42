//! `hmc-tune`: batch experiments on HMC step-size scaling.
//!
//! Each subcommand reads one TOML config (flags override file values, file
//! values override defaults), writes CSV tables with a commented provenance
//! header into the output directory and, with `--plot`, an SVG next to each.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;

use std::fs;
use std::path::PathBuf;

use clap::builder::PossibleValuesParser;
use clap::Parser;

use crate::commands::SUBCOMMANDS;
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{write_csv, Provenance};

#[derive(Debug, Clone, Parser)]
#[command(name = "hmc-tune", version, about = "Experiments on HMC step-size scaling and tuning")]
pub struct Args {
    /// Experiment to run.
    #[arg(value_parser = PossibleValuesParser::new(SUBCOMMANDS))]
    pub subcommand: String,
    /// TOML config file; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Leave the timestamp out of CSV headers.
    #[arg(long)]
    pub deterministic: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write SVG plots.
    #[arg(long)]
    pub plot: bool,
}

/// Config file (or defaults) with command-line overrides applied.
pub fn resolve_config(args: &Args) -> Result<ExperimentConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out = out.clone();
    }
    if let Some(threads) = args.threads {
        config.threads = Some(threads);
    }
    Ok(config)
}

/// Runs one subcommand end to end and returns the lines to print.
pub fn execute(args: &Args) -> Result<Vec<String>, CliError> {
    let config = resolve_config(args)?;
    if let Some(threads) = config.threads {
        if threads == 0 {
            return Err(CliError::Config("threads must be >= 1".into()));
        }
        // Only the first pool configuration in a process takes effect.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let report = commands::run(&args.subcommand, &config)?;
    let provenance = Provenance {
        subcommand: args.subcommand.clone(),
        seed: config.seed,
        config_toml: config.to_toml()?,
        deterministic: args.deterministic,
    };
    let mut lines = report.messages;
    for (stem, table) in &report.tables {
        let path = write_csv(&config.out, stem, table, &provenance)?;
        lines.push(format!("wrote {}", path.display()));
    }
    if args.plot {
        for (stem, svg) in &report.plots {
            let path = config.out.join(format!("{stem}.svg"));
            fs::write(&path, svg).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
            lines.push(format!("wrote {}", path.display()));
        }
    }
    Ok(lines)
}
