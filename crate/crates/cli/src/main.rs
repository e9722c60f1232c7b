use std::path::PathBuf;
use std::process::ExitCode;

use abcaw_cli::config::{resolve_config, ExperimentConfig};
use abcaw_cli::experiment::{run_experiment, summarize, ExperimentOptions};
use abcaw_cli::CliError;
use clap::{Args, Parser, Subcommand};

/// Likelihood-free inference with ABC SMC and its adaptive-weights variant.
#[derive(Debug, Parser)]
#[command(name = "abcaw", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a pilot study and print discrepancy quantiles.
    Pilot(Common),
    /// Run a single repeat of every configured variant.
    Run(Common),
    /// Run every repeat of every configured variant.
    Study(Common),
    /// Aggregate trace files in a directory into tables and density grids.
    Summarize {
        /// Directory holding `trace_*.csv` and `population_*.csv` files.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs single-threaded.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Also write intermediate populations.
    #[arg(long)]
    snapshots: bool,
}

fn load(common: &Common) -> Result<String, CliError> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| CliError::Parse(format!("{}: {e}", common.config.display())))?;
    let mut config = ExperimentConfig::parse(&text)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out = Some(out.clone());
    }
    config.snapshots |= common.snapshots;
    Ok(config.to_toml())
}

fn init_threads(threads: usize) -> Result<(), CliError> {
    if threads == 0 {
        return Err(CliError::Validation("--threads must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Pilot(common) => {
            init_threads(common.threads)?;
            let text = load(&common)?;
            if ExperimentConfig::parse(&text)?.schedule.pilot.is_none() {
                return Err(CliError::Validation(
                    "pilot needs a [schedule.pilot] recipe".into(),
                ));
            }
            let (_, resolution) = resolve_config(&text, common.threads > 1)?;
            println!("quantile,epsilon");
            for (level, eps) in resolution.pilot_quantiles.unwrap_or_default() {
                println!("{level},{eps}");
            }
        }
        Command::Run(common) => experiment(common, true)?,
        Command::Study(common) => experiment(common, false)?,
        Command::Summarize { out } => {
            let files = summarize(&out)?;
            println!("{}", files.efficiency.display());
            for path in files.densities {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn experiment(common: Common, single: bool) -> Result<(), CliError> {
    init_threads(common.threads)?;
    let (mut config, resolution) = resolve_config(&load(&common)?, common.threads > 1)?;
    if single {
        config.repeats = 1;
    }
    let out = config
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("abcaw-out"));
    let opts = ExperimentOptions {
        out,
        threads: common.threads,
    };
    let outcome = run_experiment(&config, &resolution, &opts)?;
    for entry in &outcome.runs {
        println!(
            "{} r{:03}: {} simulations, {:.3} per accepted particle, {:.2}s",
            entry.variant,
            entry.repeat,
            entry.total_simulations,
            entry.total_sims_per_accepted,
            entry.seconds
        );
    }
    println!("outputs in {}", opts.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error ({}): {e}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
