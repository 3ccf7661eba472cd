//! Command-line entry point: `orc run` trains a configured ladder and writes
//! a metrics CSV; `orc summarize` compares finished runs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use orc::config::{self, RunConfig};
use orc::error::Error;
use orc::metrics;
use orc::trainer;

#[derive(Parser)]
#[command(name = "orc", version, about = "Group knowledge-distillation trainer with online role change")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a ladder from a config file and/or a named preset.
    Run {
        /// Key-value config file; applied on top of the preset when both are given.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Experiment preset name (see `--preset help`).
        #[arg(long)]
        preset: Option<String>,
        /// Overrides the run seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report best-epoch accuracies (and deltas) across metrics CSVs.
    Summarize {
        /// One or more metrics.csv paths; the first run is the baseline.
        #[arg(required = true)]
        csvs: Vec<PathBuf>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Spec(_) | Error::Ladder(_) => 2,
        Error::Train(_) => 3,
        _ => 1,
    }
}

/// Worker-thread cap; the reference loop is sequential, so anything >= 1 is
/// accepted and 1 is used.
fn read_thread_cap() -> Result<usize, Error> {
    match std::env::var("ORC_THREADS") {
        Ok(raw) => {
            let n: usize = raw
                .parse()
                .map_err(|_| Error::config(format!("ORC_THREADS: cannot parse '{raw}'")))?;
            if n == 0 {
                return Err(Error::config("ORC_THREADS must be at least 1"));
            }
            Ok(n)
        }
        Err(_) => Ok(1),
    }
}

fn build_config(
    config_path: Option<&PathBuf>,
    preset_name: Option<&str>,
    seed: Option<u64>,
    out: Option<&PathBuf>,
) -> Result<RunConfig, Error> {
    let base = match preset_name {
        Some(name) => Some(config::preset(name)?),
        None => None,
    };
    let mut run_config = match (config_path, base) {
        (Some(path), base) => RunConfig::parse_file(path, base)?,
        (None, Some(base)) => base,
        (None, None) => {
            return Err(Error::config(
                "provide --config <path> and/or --preset <name>",
            ))
        }
    };
    if let Some(seed) = seed {
        run_config.seed = seed;
    }
    match out {
        Some(dir) => run_config.out_dir = dir.clone(),
        None => {
            // keep unrelated runs from clobbering each other's CSVs
            let tag = preset_name.unwrap_or("config");
            run_config.out_dir = PathBuf::from("runs").join(format!("{tag}-seed{}", run_config.seed));
        }
    }
    run_config.validate()?;
    Ok(run_config)
}

fn run(command: Command) -> Result<(), Error> {
    let _threads = read_thread_cap()?;
    match command {
        Command::Run { config, preset, seed, out } => {
            let run_config = build_config(config.as_ref(), preset.as_deref(), seed, out.as_ref())?;
            eprintln!(
                "run: {} ladder of {} on {} data, {} epochs -> {}",
                run_config.mode,
                run_config.ladder.len(),
                run_config.dataset.kind,
                run_config.epochs,
                run_config.out_dir.display()
            );
            let outcome = trainer::run_experiment(&run_config, |row| {
                let accs: Vec<String> = row
                    .test_accuracy
                    .iter()
                    .map(|a| format!("{:.2}", a * 100.0))
                    .collect();
                eprintln!(
                    "epoch {:>3}: lr {:.6}, test acc [{}]",
                    row.epoch,
                    row.lr,
                    accs.join(", ")
                );
            })?;
            if let Some(acc) = outcome.pivot_pretrain_accuracy {
                match &outcome.pivot_loaded_from {
                    Some(path) => eprintln!(
                        "pivot restored from {} (test acc {:.2})",
                        path.display(),
                        acc * 100.0
                    ),
                    None => eprintln!("pivot pretrained to test acc {:.2}", acc * 100.0),
                }
            }
            println!("{}", outcome.csv_path.display());
            Ok(())
        }
        Command::Summarize { csvs } => {
            let report = metrics::summarize(&csvs)?;
            print!("{report}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
