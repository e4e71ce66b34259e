//! `masort`: filter proposals, track, evaluate and generate synthetic data.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 input or schema
//! error, 4 undefined metric (e.g. empty ground truth).

mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Environment variable that overrides the default output directory.
pub const OUT_ENV: &str = "MASORT_OUT";

#[derive(Debug, Parser)]
#[command(name = "masort", version, about = "Multi-object tracking toolkit")]
pub struct Cli {
    /// Flat key = value configuration file (flags take precedence).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Keep proposals that resemble the top specific-prompt matches.
    Filter {
        /// Proposal file (`D=<dim> count=<n>` header).
        proposals: PathBuf,
        /// Number of query proposals per frame.
        #[arg(long)]
        kappa: Option<usize>,
        /// General-prompt score threshold for candidates.
        #[arg(long)]
        t_gen: Option<f64>,
        /// Cosine similarity a candidate needs to some query.
        #[arg(long)]
        tau_sim: Option<f64>,
    },
    /// Track detections and write MOT results.
    Track {
        /// MOT detection file.
        detections: PathBuf,
        /// Feature sidecar; without it tracking is motion-only.
        features: Option<PathBuf>,
        /// Appearance angle threshold in degrees.
        #[arg(long)]
        theta: Option<f64>,
        /// Weight of the direction-consistency term.
        #[arg(long)]
        lambda: Option<f64>,
        /// Minimum fused score for a match.
        #[arg(long)]
        gate: Option<f64>,
        /// Consecutive hits before a track is reported
        #[arg(long)]
        min_hits: Option<u32>,
        /// Frames a lost track survives
        #[arg(long)]
        max_age: Option<u32>,
        /// Frame span for motion direction
        #[arg(long)]
        delta_t: Option<u32>,
        /// Appearance feature smoothing factor.
        #[arg(long)]
        alpha_ema: Option<f64>,
    },
    /// Score results against ground truth (HOTA, MOTA, IDF1).
    Eval {
        gt: PathBuf,
        results: PathBuf,
        /// IoU threshold for MOTA and IDF1.
        #[arg(long)]
        iou_thresh: Option<f64>,
    },
    /// Generate a synthetic dataset from a JSON scenario description.
    Synth { scenario: PathBuf },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(masort::Error),
}

impl From<masort::Error> for CliError {
    fn from(e: masort::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(masort::Error::Config(_)) => 2,
            CliError::Core(masort::Error::UndefinedMetric(_)) => 4,
            CliError::Core(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Warn).init();
    let cli = Cli::parse();
    let started = std::time::Instant::now();
    match commands::run(cli) {
        Ok(()) => {
            eprintln!("done in {:.3}s", started.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
