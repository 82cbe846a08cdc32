//! notefx: batch estimation of note-attachment effects on engagement and
//! diffusion, with a built-in simulator for end-to-end validation.
//!
//! Exit codes: 0 success, 1 usage or environment error, 2 input schema
//! violation, 3 structurally infeasible request.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::io::SchemaViolation;

#[derive(Debug, Parser)]
#[command(name = "notefx", version, about = "Note-attachment effect estimation pipeline")]
struct Cli {
    /// TOML file overriding any run option
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores); overrides config and NOTEFX_WORKERS
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Subcommand)]
enum Command {
    /// Assemble a cohort archive from raw CSV inputs
    Ingest(commands::ingest::IngestArgs),
    /// Apply eligibility rules and record exclusions
    Filter(commands::filter::FilterArgs),
    /// Attach cascade structure series from repost logs
    Cascades(commands::cascades::CascadesArgs),
    /// Fit one synthetic control per treated post
    Fit(commands::fit::FitArgs),
    /// Aggregate fits into effect reports
    Effects(commands::effects::EffectsArgs),
    /// Backdating falsification check
    Placebo(commands::placebo::PlaceboArgs),
    /// Generate a synthetic cohort with known ground truth
    Simulate(commands::simulate::SimulateArgs),
    /// Compare an effect report against simulator ground truth
    Validate(commands::validate::ValidateArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version land here with non-error kinds.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = config::load(cli.config.as_deref(), cli.workers)?;
    match &cli.command {
        Command::Ingest(args) => commands::ingest::run(args, &cfg),
        Command::Filter(args) => commands::filter::run(args, &cfg),
        Command::Cascades(args) => commands::cascades::run(args, &cfg),
        Command::Fit(args) => commands::fit::run(args, &cfg),
        Command::Effects(args) => commands::effects::run(args, &cfg),
        Command::Placebo(args) => commands::placebo::run(args, &cfg),
        Command::Simulate(args) => commands::simulate::run(args, &cfg),
        Command::Validate(args) => commands::validate::run(args, &cfg),
    }
}

/// Maps an error chain onto the documented exit codes. The first recognized
/// cause wins, so wrapping context does not change the code.
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<notefx::Error>() {
            return match e {
                notefx::Error::DataQuality(_) => 2,
                notefx::Error::InvalidConfig(_) => 1,
                notefx::Error::Infeasible(_) => 3,
            };
        }
        if cause.downcast_ref::<SchemaViolation>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<csv::Error>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    1
}
