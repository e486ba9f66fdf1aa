mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use cezanne::evalharness::Protocol;
use clap::{Args, Parser, Subcommand};

use crate::config::CliConfig;
use crate::error::{CliError, Result};

#[derive(Parser)]
#[command(name = "cezanne", version, about = "Composite toy generation, analysis, pooling checks and evaluation schedules")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; missing keys take the standard defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides CEZANNE_OUT_DIR and the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed override for generation, checks and schedules.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the toy set: manifest, STL and OBJ files.
    Generate,
    /// Grasp and print feasibility for every toy in a manifest.
    Analyze {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Run the pooling invariance, oracle and gradient checks.
    DetpoolCheck {
        /// Binary PGM object mask used for the invariance check.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Write an evaluation trial schedule.
    Schedule {
        #[arg(long, value_parser = parse_protocol)]
        protocol: Protocol,
        /// Object ids, one per line.
        #[arg(long)]
        objects: PathBuf,
    },
    /// Aggregate trial outcomes into success tables.
    Aggregate {
        /// CSV with columns object,trial_index,success.
        #[arg(long)]
        outcomes: PathBuf,
    },
    /// Format scaling-study rows into CSV and a text grid.
    Report {
        /// CSV with columns label,demos,success.
        #[arg(long)]
        rows: PathBuf,
    },
}

fn parse_protocol(s: &str) -> std::result::Result<Protocol, String> {
    s.parse().map_err(|e: cezanne::evalharness::EvalError| e.to_string())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.common.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().map_err(CliError::config)?;
    }
    let mut cfg = CliConfig::load(cli.common.config.as_deref())?;
    if let Some(seed) = cli.common.seed {
        cfg.generation.master_seed = seed;
        cfg.check_seed = seed;
    }
    let out = cfg.resolve_out(cli.common.out.as_deref());
    match cli.command {
        Command::Generate => commands::generate(&cfg, &out),
        Command::Analyze { manifest } => commands::analyze(&cfg, &manifest, &out),
        Command::DetpoolCheck { mask } => commands::detpool_check(&cfg, cfg.check_seed, mask.as_deref()),
        Command::Schedule { protocol, objects } => {
            commands::schedule(protocol, &objects, cli.common.seed.unwrap_or(0), &out)
        }
        Command::Aggregate { outcomes } => commands::aggregate_outcomes(&outcomes, &out),
        Command::Report { rows } => commands::report(&rows, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let msg = e.to_string();
            eprintln!("error[config]: {}", msg.trim_start_matches("error: ").trim_end());
            return ExitCode::from(2);
        }
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.tag());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
