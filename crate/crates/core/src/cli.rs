//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on any usage or validation error, 2 when
//! `compare` finds different totals. Reports and results go to stdout,
//! diagnostics to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config_io::{
    append_report, load_report, load_scenario, load_scene, read_detections, write_detections,
    ConfigError,
};
use crate::orchestrator::{
    compare, default_workers, run_pipeline, run_single, OrchestratorError, PipelineOptions,
    WORKERS_ENV,
};
use crate::simulator;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_MISMATCH: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "chunkcount",
    version,
    about = "Count vehicles crossing a line, chunk by chunk"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scenario into a detection stream and print its true count.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Count with the chunked pipeline.
    Run {
        #[command(flatten)]
        input: InputArgs,
        /// Number of chunks; defaults to the worker count.
        #[arg(long)]
        chunks: Option<usize>,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
        /// Count every track seen past the line, without boundary deduplication.
        #[arg(long)]
        no_dedup: bool,
        /// Video length in frames; defaults to one past the last detection.
        #[arg(long)]
        total_frames: Option<u64>,
    },
    /// Count in a single pass over the whole stream.
    Oracle {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        total_frames: Option<u64>,
    },
    /// Compare two reports; each is PATH or PATH#RUN_ID into a store.
    Compare {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    /// Check scene and scenario files without running anything.
    ValidateConfig {
        #[arg(long, required_unless_present = "scenario")]
        scene: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    /// Results store to append the report to.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Seed recorded in the report.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] OrchestratorError),
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_INVALID
                }
            };
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INVALID
        }
    }
}

fn label(path: &std::path::Path) -> String {
    path.display().to_string()
}

fn report_run(
    input: &InputArgs,
    opts: PipelineOptions,
    oracle: bool,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let scene = load_scene(&input.scene)?;
    let detections = read_detections(&input.detections)?;
    let opts = PipelineOptions {
        scene_label: label(&input.scene),
        seed: input.seed,
        ..opts
    };
    let report = if oracle {
        run_single(&detections, &scene, &opts)?
    } else {
        run_pipeline(&detections, &scene, &opts)?
    };
    if let Some(store) = &input.store {
        append_report(store, &report)?;
    }
    out.write_all(report.to_canonical_line().as_bytes())?;
    Ok(EXIT_OK)
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Simulate {
            scenario,
            scene,
            out: path,
            seed,
        } => {
            let mut spec = load_scenario(&scenario)?;
            let scene = load_scene(&scene)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let stream = simulator::generate(&spec, &scene);
            write_detections(&path, &stream.detections)?;
            let _ = writeln!(
                err,
                "wrote {} detections over {} frames to {}",
                stream.detections.len(),
                spec.total_frames,
                path.display()
            );
            writeln!(out, "truth: {}", stream.truth.count)?;
            Ok(EXIT_OK)
        }
        Command::Run {
            input,
            chunks,
            workers,
            no_dedup,
            total_frames,
        } => {
            let workers = match workers {
                Some(w) => w,
                None => default_workers()?,
            };
            let opts = PipelineOptions {
                workers,
                dedup: !no_dedup,
                total_frames,
                ..PipelineOptions::new(chunks.unwrap_or(workers))
            };
            report_run(&input, opts, false, out)
        }
        Command::Oracle {
            input,
            total_frames,
        } => {
            let opts = PipelineOptions {
                total_frames,
                ..PipelineOptions::new(1)
            };
            report_run(&input, opts, true, out)
        }
        Command::Compare { a, b } => {
            let ra = load_report(&a)?;
            let rb = load_report(&b)?;
            let diff = compare(&ra, &rb)?;
            write!(out, "{diff}")?;
            Ok(if diff.totals_equal() {
                EXIT_OK
            } else {
                EXIT_MISMATCH
            })
        }
        Command::ValidateConfig { scene, scenario } => {
            if let Some(path) = scene {
                load_scene(&path)?;
                writeln!(out, "scene ok: {}", path.display())?;
            }
            if let Some(path) = scenario {
                load_scenario(&path)?;
                writeln!(out, "scenario ok: {}", path.display())?;
            }
            Ok(EXIT_OK)
        }
    }
}
