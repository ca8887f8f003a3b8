use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use tfot_core::experiment::preset_experiment;
use tfot_core::{run_experiment, validate_config, write_outputs, ScenarioId, ScenarioSpec};

/// Monte-Carlo tracking benchmarks.
#[derive(Parser)]
#[command(name = "tfot", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write RMSE/ARMSE files.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for trial-level parallelism.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Override the base seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the number of trials.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Built-in scenarios.
    Scenarios {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// List the scenarios with their default settings.
    List,
    /// Print a ready-to-run experiment config for a scenario.
    Config {
        /// S1, S2, S3 or S4.
        id: String,
        /// Use heavy-tailed colored noise instead of GP colored noise.
        #[arg(long)]
        heavy: bool,
    },
}

fn parse_id(s: &str) -> Result<ScenarioId> {
    ScenarioId::ALL
        .into_iter()
        .find(|id| id.name().eq_ignore_ascii_case(s))
        .with_context(|| format!("unknown scenario {s:?}, expected one of S1, S2, S3, S4"))
}

fn run(cli: Cli) -> Result<()> {
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Run {
            config,
            jobs,
            seed,
            out,
            trials,
        } => {
            let mut cfg = validate_config(&config).with_context(|| format!("invalid config {}", config.display()))?;
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(n) = trials {
                cfg.trials = n;
            }
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("results"));
            let summary = run_experiment(&cfg, jobs.max(1)).context("experiment failed")?;
            write_outputs(&summary, &dir, cfg.write_trajectories)
                .with_context(|| format!("writing results to {}", dir.display()))?;
            write!(stdout, "{}", summary.table())?;
            writeln!(stdout, "results written to {}", dir.display())?;
        }
        Command::Validate { config } => {
            let cfg = validate_config(&config).with_context(|| format!("invalid config {}", config.display()))?;
            writeln!(
                stdout,
                "{}: ok ({} / {} noise, {} trackers, {} trials)",
                config.display(),
                cfg.scenario.id.name(),
                cfg.noise.name(),
                cfg.trackers.len(),
                cfg.trials
            )?;
        }
        Command::Scenarios { action } => match action {
            ScenarioAction::List => {
                for id in ScenarioId::ALL {
                    let s = ScenarioSpec::preset(id);
                    writeln!(stdout, "{}  T={:<4} dt={:<4} {}", id.name(), s.steps, s.dt, id.description())?;
                }
            }
            ScenarioAction::Config { id, heavy } => {
                let cfg = preset_experiment(parse_id(&id)?, heavy);
                writeln!(stdout, "{}", serde_json::to_string_pretty(&cfg)?)?;
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // reader went away, e.g. `tfot scenarios list | head -1`
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
