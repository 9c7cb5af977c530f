//! Command-line driver for the nuclei mask pipeline: synthetic corpora,
//! training targets, prediction cleanup, fuser training, mask fusion, and
//! scoring, all exchanged through PNG and CSV files.

mod commands;
mod inputs;
mod run_manifest;

use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use maskfuse_core::{EvalError, FileError, GbmError, MaskError, SynthError, TrainError};

use commands::{
    AnalyzeArgs, ApCurveArgs, EvaluateArgs, FeaturesArgs, FuseArgs, MakeTargetsArgs,
    PostprocessArgs, SynthArgs, TrainFuserArgs,
};

#[derive(Debug, Parser)]
#[command(
    name = "maskfuse",
    version,
    about = "Nuclei instance-mask pipeline: synthetic corpora, training targets, \
             watershed cleanup, model fusion, and scoring"
)]
struct Cli {
    /// Master random seed.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Worker threads; MASKFUSE_THREADS is the fallback, then all cores.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic two-source corpus with ground truth.
    Synth(SynthArgs),
    /// Rasterize nuclei and border channels from ground-truth label maps.
    MakeTargets(MakeTargetsArgs),
    /// Clean raw predictions: fill holes, split clumps, drop specks.
    Postprocess(PostprocessArgs),
    /// Extract per-instance shape features, with IoU targets when GT is given.
    Features(FeaturesArgs),
    /// Train the IoU-regression fuser with out-of-fold validation.
    TrainFuser(TrainFuserArgs),
    /// Fuse two candidate sets into one non-overlapping instance map.
    Fuse(FuseArgs),
    /// Score prediction sets against ground truth.
    Evaluate(EvaluateArgs),
    /// Break recall down by a ground-truth property.
    Analyze(AnalyzeArgs),
    /// Write the average-precision curve for one prediction set.
    ApCurve(ApCurveArgs),
}

/// The two failure classes promised to callers: validation problems exit 1,
/// anything that went wrong touching a file exits 2.
#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    File(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(msg) | CliError::File(msg) => f.write_str(msg),
        }
    }
}

impl From<FileError> for CliError {
    fn from(e: FileError) -> Self {
        CliError::File(e.to_string())
    }
}

impl From<MaskError> for CliError {
    fn from(e: MaskError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<GbmError> for CliError {
    fn from(e: GbmError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::File(f) => f.into(),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

/// Per-invocation facts every command records in its run manifest.
pub struct RunContext {
    pub argv: Vec<String>,
    pub seed: u64,
    pub started: Instant,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let clean = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if clean { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Invalid(_) => ExitCode::from(1),
                CliError::File(_) => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    init_thread_pool(cli.threads)?;
    let ctx = RunContext { argv, seed: cli.seed, started: Instant::now() };
    match &cli.command {
        Command::Synth(args) => commands::synth(args, &ctx),
        Command::MakeTargets(args) => commands::make_targets(args, &ctx),
        Command::Postprocess(args) => commands::postprocess(args, &ctx),
        Command::Features(args) => commands::features(args, &ctx),
        Command::TrainFuser(args) => commands::train_fuser(args, &ctx),
        Command::Fuse(args) => commands::fuse(args, &ctx),
        Command::Evaluate(args) => commands::evaluate(args, &ctx),
        Command::Analyze(args) => commands::analyze(args, &ctx),
        Command::ApCurve(args) => commands::ap_curve(args, &ctx),
    }
}

/// Sizes the global rayon pool from `--threads`, falling back to the
/// MASKFUSE_THREADS variable; leaves the rayon default when neither is set.
fn init_thread_pool(flag: Option<usize>) -> Result<(), CliError> {
    let requested = match flag {
        Some(n) => Some(n),
        None => match std::env::var("MASKFUSE_THREADS") {
            Ok(s) => Some(s.trim().parse::<usize>().map_err(|_| {
                CliError::Invalid(format!(
                    "MASKFUSE_THREADS must be a positive integer, got {s:?}"
                ))
            })?),
            Err(_) => None,
        },
    };
    match requested {
        Some(0) => Err(CliError::Invalid("thread count must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Invalid(format!("thread pool setup failed: {e}"))),
        None => Ok(()),
    }
}
