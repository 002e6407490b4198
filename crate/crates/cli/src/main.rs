//! `mrsense`: synthesize, decompose, place sensors, reconstruct, report.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "mrsense", version, about = "Multiresolution DMD and QR-pivot sensor placement for gridded fields")]
struct Cli {
    /// Seed for every random draw (synthetic noise, random baselines).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent subtrees and baseline sets (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON object whose keys override the corresponding flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic series with planted events.
    Synth(commands::SynthArgs),
    /// Single-window exact DMD.
    Dmd(commands::DmdArgs),
    /// Multiresolution DMD tree and mode library.
    Mrdmd(commands::MrdmdArgs),
    /// Choose sensor sites as QR pivots of the mode library.
    Place(commands::PlaceArgs),
    /// Reconstruct full fields from sensor readings and score them.
    Reconstruct(commands::ReconstructArgs),
    /// Summary statistics and the time–frequency map of a decomposition.
    Report(commands::ReportArgs),
}

#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
    pub exit: u8,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: "invalid_config",
            message: message.into(),
            exit: 2,
        }
    }
}

impl From<mrsense::Error> for CliError {
    fn from(e: mrsense::Error) -> Self {
        CliError {
            code: e.code(),
            message: e.to_string(),
            exit: 1,
        }
    }
}

/// Settings shared by every subcommand after merging the config file.
pub struct Globals {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub overrides: serde_json::Map<String, serde_json::Value>,
}

fn globals(cli: &Cli, name: &str) -> Result<Globals, CliError> {
    let mut g = Globals {
        seed: cli.seed,
        threads: cli.threads,
        overrides: Default::default(),
    };
    if let Some(path) = &cli.config {
        let map = config::read_overrides(path)?;
        if let Some(sub) = map.get("subcommand") {
            if sub.as_str() != Some(name) {
                return Err(CliError::config(format!("config is for subcommand {sub}, not {name:?}")));
            }
        }
        let uint = |key: &str| -> Result<Option<u64>, CliError> {
            match map.get(key) {
                None | Some(serde_json::Value::Null) => Ok(None),
                Some(v) => v
                    .as_u64()
                    .map(Some)
                    .ok_or_else(|| CliError::config(format!("{key} must be a non-negative integer"))),
            }
        };
        if let Some(s) = uint("seed")? {
            g.seed = Some(s);
        }
        if let Some(t) = uint("threads")? {
            g.threads = Some(t as usize);
        }
        g.overrides = map;
    }
    Ok(g)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let name = match &cli.command {
        Command::Synth(_) => "synth",
        Command::Dmd(_) => "dmd",
        Command::Mrdmd(_) => "mrdmd",
        Command::Place(_) => "place",
        Command::Reconstruct(_) => "reconstruct",
        Command::Report(_) => "report",
    };
    let g = globals(&cli, name)?;
    // Dense kernels run sequentially so results do not depend on scheduling;
    // coarse-grained work is spread over the rayon pool instead.
    faer::set_global_parallelism(faer::Par::Seq);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = g.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => commands::synth(a, &g),
        Command::Dmd(a) => commands::dmd(a, &g),
        Command::Mrdmd(a) => commands::mrdmd(a, &g),
        Command::Place(a) => commands::place(a, &g),
        Command::Reconstruct(a) => commands::reconstruct(a, &g),
        Command::Report(a) => commands::report(a, &g),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": { "code": e.code, "message": e.message } }));
            ExitCode::from(e.exit)
        }
    }
}
