mod centerbias;
mod common;
mod config;
mod convert;
mod density;
mod evaluate;
mod fit;
mod render;
mod report;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fixdens::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "fixdens", version, about = "Empirical fixation densities from eye-tracking data")]
struct Cli {
    /// TOML config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed of every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit kernel and mixture parameters per image (or globally).
    Fit(fit::FitArgs),
    /// Score fitted parameters: log-likelihood, information gain, AUC.
    Evaluate(evaluate::EvaluateArgs),
    /// Export per-image density grids.
    Density(density::DensityArgs),
    /// Render density grids as PNG overlays or a comparison panel.
    Render(render::RenderArgs),
    /// Sample a synthetic dataset from a known density.
    Synth(synth::SynthArgs),
    /// Improvement quantiles and parameter extremes from result files.
    Report(report::ReportArgs),
    /// Fit and export center-bias densities.
    Centerbias(centerbias::CenterBiasArgs),
    /// Convert grids between FDG1 and text.
    ConvertGrid(convert::ConvertArgs),
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config::FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    if let Some(jobs) = cli.jobs.or(cfg.jobs) {
        if jobs == 0 {
            return Err(Error::invalid("--jobs must be >= 1"));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match &cli.command {
        Command::Fit(a) => fit::run(a, &cfg, seed),
        Command::Evaluate(a) => evaluate::run(a, &cfg, seed),
        Command::Density(a) => density::run(a, &cfg),
        Command::Render(a) => render::run(a, &cfg),
        Command::Synth(a) => synth::run(a, &cfg, seed),
        Command::Report(a) => report::run(a, &cfg),
        Command::Centerbias(a) => centerbias::run(a, &cfg),
        Command::ConvertGrid(a) => convert::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "error",
        (false, 0) => "warn",
        (false, 1) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_computation() { 2 } else { 1 })
        }
    }
}
