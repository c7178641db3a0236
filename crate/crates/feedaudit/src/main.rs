use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use feedaudit::commands;
use feedaudit::config::load_config;
use feedaudit::formats::to_json_string;
use feedaudit::hash::InputHashes;

/// Regulation-testing experiment runner.
///
/// Every subcommand takes one JSON config file; the file's "command" field
/// must match the subcommand. Reports go to stdout unless --out is given.
/// Exit codes: 0 for YES or success, 1 for NO, 2 for errors.
#[derive(Parser)]
#[command(name = "feedaudit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Replace the config's root seed.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a scenario and write feeds plus ground truth.
    Simulate(CommonArgs),
    /// Run the pair tester on a samples file.
    TestIid(CommonArgs),
    /// Run the trajectory procedure on feed files.
    TestRegulatory(CommonArgs),
    /// Run the two-block composition on feed files.
    TestCounterfactual(CommonArgs),
    /// Fit threshold and budget constants on a grid.
    Calibrate(CommonArgs),
    /// Estimate joint cover times of one chain.
    CoverTime(CommonArgs),
    /// Evaluate verdict probabilities across a grid, emitting CSV.
    Sweep(CommonArgs),
}

impl Command {
    fn parts(&self) -> (&CommonArgs, &'static str) {
        match self {
            Command::Simulate(a) => (a, "simulate"),
            Command::TestIid(a) => (a, "test-iid"),
            Command::TestRegulatory(a) => (a, "test-regulatory"),
            Command::TestCounterfactual(a) => (a, "test-counterfactual"),
            Command::Calibrate(a) => (a, "calibrate"),
            Command::CoverTime(a) => (a, "cover-time"),
            Command::Sweep(a) => (a, "sweep"),
        }
    }
}

fn run(cli: &Cli) -> Result<i32> {
    let (args, subcommand) = cli.command.parts();
    let mut hashes = InputHashes::default();
    let mut config = load_config(&args.config, &mut hashes)?;
    if config.command() != subcommand {
        bail!(
            "config command `{}` does not match subcommand `{}`",
            config.command(),
            subcommand
        );
    }
    if let Some(seed) = args.seed_override {
        config.override_seed(seed);
    }
    let outcome = commands::run(&config, hashes)?;
    let text = to_json_string(&outcome.report)?;
    match &args.out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)
                        .with_context(|| format!("creating {}", parent.display()))?;
                }
            }
            std::fs::write(path, &text)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{text}"),
    }
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    match run(&cli) {
        Ok(code) => {
            // Timing stays on stderr so reports are bit-identical across runs.
            eprintln!(
                "{} finished in {:.3}s",
                cli.command.parts().1,
                started.elapsed().as_secs_f64()
            );
            ExitCode::from(u8::try_from(code).unwrap_or(2))
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
