//! `rfcd`: change detection between two multi-band images.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Loaded;

#[derive(Parser)]
#[command(
    name = "rfcd",
    version,
    about = "Robust-fusion change detection between two multi-band images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the robust-fusion detector on the configured pair.
    Detect(Common),
    /// Run the worst-case baseline on the configured pair.
    Baseline(Common),
    /// Generate a synthetic pair, its latent images, and the truth map.
    Simulate(Common),
    /// Score the map and energy in a results directory against the truth map.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory holding `map` and `energy` (defaults to --out).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Print the scenario of the configured sensor pair.
    Classify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides `seed` in the configuration).
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> anyhow::Result<(Loaded, PathBuf, u64)> {
        let loaded = Loaded::read(self.config.as_deref())?;
        let out = match (&self.out, &loaded.config.out) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => loaded.resolve(o),
            (None, None) => PathBuf::from("rfcd-out"),
        };
        let seed = self.seed.unwrap_or(loaded.config.seed);
        Ok((loaded, out, seed))
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Detect(c) => {
            let (loaded, out, seed) = c.load()?;
            commands::detect(&loaded, &out, seed)
        }
        Command::Baseline(c) => {
            let (loaded, out, _) = c.load()?;
            commands::baseline(&loaded, &out)
        }
        Command::Simulate(c) => {
            let (loaded, out, seed) = c.load()?;
            commands::simulate(&loaded, &out, seed)
        }
        Command::Evaluate { common, input } => {
            let (loaded, out, _) = common.load()?;
            let input = input.unwrap_or_else(|| out.clone());
            commands::evaluate_outputs(&loaded, &input, &out)
        }
        Command::Classify(c) => {
            let (loaded, _, _) = c.load()?;
            commands::classify(&loaded)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            eprintln!("run `rfcd --help` for usage");
            ExitCode::FAILURE
        }
    }
}
