//! `lhcc`: generate instances, train the selection agent, run, ablate and report.

mod commands;
mod failure;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use lhcc_core::runner::SelectionMode;

use commands::{InstanceSource, TrainOverrides};
use failure::Failure;
use manifest::{ExperimentArgs, ExperimentManifest};

#[derive(Parser)]
#[command(name = "lhcc", version, about = "Learned optimizer selection for cooperative coevolution")]
struct Cli {
    /// Worker threads for parallel episodes (default: all cores).
    #[arg(long, global = true, env = "LHCC_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// The 18-instance suite (Ackley, AttractiveSector, Katsuura, He).
    #[value(name = "appendix-b")]
    AppendixB,
}

#[derive(Subcommand)]
enum Command {
    /// Write instance documents and their checksum sidecars.
    #[command(group(ArgGroup::new("source").required(true).args(["preset", "dims"])))]
    Gen {
        #[arg(long, value_enum, conflicts_with_all = ["dims", "functions", "degree", "name"])]
        preset: Option<Preset>,
        /// Subproblem dimensions, comma separated.
        #[arg(long, value_delimiter = ',', requires = "functions")]
        dims: Vec<usize>,
        /// Basic function ids (1 Sphere, 2 Elliptic, 3 Rastrigin, 4 Ackley,
        /// 5 Schwefel 1.2, 6 Katsuura, 7 AttractiveSector); one id applies to all.
        #[arg(long, value_delimiter = ',')]
        functions: Vec<u8>,
        /// Separability degree 1..5.
        #[arg(long)]
        degree: Option<u8>,
        /// Document name for a custom instance.
        #[arg(long)]
        name: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Divide every subproblem dimension by this.
        #[arg(long, default_value_t = 1)]
        scale: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Train the agent; writes the checkpoint and train_log.csv.
    Train {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Environments collected in parallel per iteration.
        #[arg(long)]
        envs: Option<usize>,
    },
    /// Run one selection mode; writes traces/, runs.csv, summary.csv and timings.json.
    Run {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// learned | greedy | random | fixed:<l> (l from 1).
        #[arg(long, default_value = "learned")]
        mode: String,
    },
    /// Learned against random and every fixed optimizer; writes runs.csv and ablation.csv.
    Ablate {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Also evaluate the argmax policy.
        #[arg(long)]
        greedy: bool,
    },
    /// Compare result tables (first is the reference); writes report.csv and curves/.
    Report {
        /// runs.csv files; each becomes a column named by its file stem.
        #[arg(required = true)]
        tables: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn parse_mode(text: &str) -> Result<SelectionMode, Failure> {
    Ok(text.parse::<SelectionMode>()?)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Gen {
            preset,
            dims,
            functions,
            degree,
            name,
            seed,
            scale,
            out,
        } => {
            let source = match preset {
                Some(Preset::AppendixB) => InstanceSource::AppendixB,
                None => InstanceSource::Custom {
                    name: name.unwrap_or_else(|| "instance".into()),
                    dims,
                    functions,
                    degree: degree.unwrap_or(1),
                },
            };
            for path in commands::gen(source, seed, scale, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Train {
            experiment,
            iterations,
            lr,
            envs,
        } => {
            let mut m = ExperimentManifest::resolve(&experiment)?;
            let overrides = TrainOverrides {
                iterations,
                learning_rate: lr,
                parallel_envs: envs,
            };
            let ckpt = commands::train_agent(&mut m, &overrides)?;
            println!("{}", ckpt.display());
        }
        Command::Run { experiment, mode } => {
            let mode = parse_mode(&mode)?;
            let m = ExperimentManifest::resolve(&experiment)?;
            let records = commands::run(&m, mode)?;
            println!("{} runs written to {}", records.len(), m.out.display());
        }
        Command::Ablate { experiment, greedy } => {
            let m = ExperimentManifest::resolve(&experiment)?;
            let modes = commands::ablation_modes(m.pool_config()?.len(), greedy);
            let records = commands::ablation(&m, &modes)?;
            println!("{} runs written to {}", records.len(), m.out.display());
        }
        Command::Report { tables, out } => {
            let columns = commands::report(&tables, &out)?;
            println!("{}", columns.join(","));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", Failure::Usage(e.to_string()));
            return ExitCode::from(2);
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
