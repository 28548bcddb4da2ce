//! `geocomm`: reproducible dynamic community detection experiments from one
//! JSON config. Exit codes: 0 success, 1 method failure, 2 input/config
//! problem.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use geocomm::{Error, Result};

#[derive(Parser)]
#[command(
    name = "geocomm",
    version,
    about = "Dynamic community detection via geodesic subspace tracking"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a synthetic benchmark; writes the sequence and ground truth.
    Generate(RunArgs),
    /// Run detection; writes the partition, fit report and benefit table.
    Detect(RunArgs),
    /// Score a predicted partition against ground truth; prints CSV.
    Score(RunArgs),
    /// Trajectory diagnostic: singular spectrum and planar projections.
    Geocheck(RunArgs),
    /// Seeded repetitions with per-method score and timing summaries.
    Bench(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment file (JSON, schema "experiment/1").
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to the config's out_dir, then $GEOCOMM_OUT,
    /// then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single-seed override for the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel sections (parallel builds only).
    #[arg(long)]
    jobs: Option<usize>,
}

impl Cmd {
    fn args(&self) -> &RunArgs {
        match self {
            Cmd::Generate(a) | Cmd::Detect(a) | Cmd::Score(a) | Cmd::Geocheck(a) | Cmd::Bench(a) => a,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.cmd.args().jobs {
        configure_pool(jobs);
    }
    match run(&cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run(cmd: &Cmd) -> Result<()> {
    let args = cmd.args();
    let config = ExperimentConfig::load(&args.config)?;
    let out = commands::resolve_out_dir(args.out.as_deref(), &config)?;
    match cmd {
        Cmd::Generate(_) => commands::generate(&config, &out, args.seed),
        Cmd::Detect(_) => commands::detect(&config, &out, args.seed),
        Cmd::Score(_) => commands::score(&config, &out, args.seed),
        Cmd::Geocheck(_) => commands::geocheck(&config, &out, args.seed),
        Cmd::Bench(_) => commands::bench(&config, &out, args.seed),
    }
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::Config(_)
        | Error::Parse(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::InvalidGraph(_) => 2,
        Error::Dimension(_) | Error::NotApplicable(_) | Error::Numerical(_) => 1,
    }
}

#[cfg(feature = "parallel")]
fn configure_pool(jobs: usize) {
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global();
}

#[cfg(not(feature = "parallel"))]
fn configure_pool(_jobs: usize) {}
