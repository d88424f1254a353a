//! `carbon-dac`: dataset generation, tuning, training and benchmarking.

mod commands;
mod exit;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};

use carbon_dac::config::Config;

#[derive(Debug, Parser)]
#[command(name = "carbon-dac", version, about = "Learned parameter control for carbon-aware flow-shop scheduling")]
struct Cli {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Root of every artifact.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the benchmark datasets and training split.
    Generate,
    /// Compute reference fitness values for the training instances.
    Ideal {
        /// Also cover every evaluation instance.
        #[arg(long)]
        all: bool,
    },
    /// Tune static parameters with the surrogate-guided search.
    Tune,
    /// Train the parameter-control policy.
    Train {
        /// Overrides the configured number of environment steps.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Run the benchmark variants; finished runs are skipped.
    Run {
        /// Comma-separated dataset names (default: every configured family).
        #[arg(long, value_delimiter = ',')]
        datasets: Vec<String>,
        /// Comma-separated subset of default,tuned,drl.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(long)]
        tuned_params: Option<PathBuf>,
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Aggregate finished runs into tables and convergence files.
    Report,
    /// Quick internal consistency checks.
    Selftest,
    /// Print the effective configuration as TOML.
    Config,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::SUCCESS };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::from(exit::SUCCESS),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::classify(&e))
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p).with_context(|| format!("configuration {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    let ctx = commands::Context {
        config,
        out: cli.out_dir,
    };
    match cli.command {
        Command::Generate => commands::generate(&ctx),
        Command::Ideal { all } => commands::ideal(&ctx, all),
        Command::Tune => commands::tune(&ctx),
        Command::Train { steps } => commands::train(&ctx, steps),
        Command::Run {
            datasets,
            variants,
            tuned_params,
            policy,
        } => commands::run(&ctx, &datasets, &variants, tuned_params, policy),
        Command::Report => commands::report(&ctx),
        Command::Selftest => selftest::run(),
        Command::Config => {
            print!("{}", ctx.config.to_toml_string());
            Ok(())
        }
    }
}
