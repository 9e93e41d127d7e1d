use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use stf_cli::commands;
use stf_cli::config::{self, parse};
use stf_cli::output::{write_output, Format};

/// State-transition-field analysis and simulation of cache replacement schemes.
#[derive(Debug, Parser)]
#[command(name = "stfcache", version)]
struct Cli {
    /// JSON config file for the command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Config override `dotted.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List cache states, their neighbours and the state matrix.
    States,
    /// Evaluate the state transition field at sample points.
    Field {
        /// Add per-content field columns.
        #[arg(long)]
        decompose: bool,
    },
    /// Steady state by power iteration, cross-checked analytically.
    Steady,
    /// Eigenvalues, closed-form second eigenvalue and convergence bound.
    Spectrum,
    /// Traces, empirical fields and empirical transition matrices.
    Simulate,
    /// Instantaneous content caching probabilities from an empty cache.
    Ccp,
    /// RR versus LRU steady states.
    Compare,
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    let mut doc = config::load(cli.config.as_deref(), &cli.overrides)?;
    let config_seed = doc
        .as_object_mut()
        .and_then(|o| o.get("seed"))
        .and_then(|s| s.as_u64());
    let seed = cli.seed.or(config_seed).unwrap_or(0);
    let report = match cli.command {
        Command::States => commands::states(parse(doc, "states")?)?,
        Command::Field { decompose } => commands::field(parse(doc, "field")?, seed, decompose)?,
        Command::Steady => commands::steady(parse(doc, "steady")?)?,
        Command::Spectrum => commands::spectrum(parse(doc, "spectrum")?)?,
        Command::Simulate => commands::simulate(parse(doc, "simulate")?, seed)?,
        Command::Ccp => commands::ccp(parse(doc, "ccp")?, seed)?,
        Command::Compare => commands::compare(parse(doc, "compare")?)?,
    };
    write_output(&report.render(cli.format)?, cli.out.as_deref())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
