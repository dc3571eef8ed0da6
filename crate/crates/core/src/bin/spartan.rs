//! Command-line front end of the experiment harness.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spartan_bo::benchmarks::list_benchmarks;
use spartan_bo::experiment::{aggregate_dir, exit_code, run_experiment, ExperimentConfig, WORKERS_ENV};
use spartan_bo::Error;

#[derive(Parser)]
#[command(name = "spartan", version, about = "Seeded Bayesian-optimization experiments")]
struct Cli {
    /// Override the base seed of the experiment.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent repeats (defaults to all cores).
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every method and repeat of an experiment config.
    Run {
        config: PathBuf,
        /// Write artifacts here instead of the config's output_dir.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Recompute aggregate CSVs from the traces in an output directory.
    Aggregate { dir: PathBuf },
    /// Print the registered benchmark names.
    ListBenchmarks,
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, output } => load(&config, cli.seed).and_then(|mut cfg| {
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            let res = run_experiment(&cfg, cli.workers)?;
            for (method, curve) in &res.curves {
                let last = curve.len() - 1;
                println!(
                    "{method}: final median {} (q25 {}, q75 {}) over {} repeats",
                    curve.median[last], curve.q25[last], curve.q75[last], cfg.repeats
                );
            }
            println!("artifacts in {}", res.output_dir.display());
            Ok(())
        }),
        Command::Aggregate { dir } => aggregate_dir(&dir).map(|curves| {
            for (method, curve) in curves {
                println!("{method}: {} evaluations, final median {}", curve.len(), curve.median[curve.len() - 1]);
            }
        }),
        Command::ListBenchmarks => {
            for (name, description) in list_benchmarks() {
                println!("{name:<18} {description}");
            }
            Ok(())
        }
        Command::Validate { config } => load(&config, cli.seed).and_then(|cfg| {
            let problem = cfg.validate()?;
            println!("ok: {} method(s) on {}, {} repeats", cfg.methods.len(), problem.name(), cfg.repeats);
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
