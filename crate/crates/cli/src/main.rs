//! `ktnext`: masks, simulated acquisitions, training, reconstruction,
//! scoring and figures.

mod checkpoint;
mod commands;
mod error;
mod manifest;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ktnext", version, about = "Dynamic MRI reconstruction from undersampled k-t data")]
pub struct Cli {
    /// Fixed manifest timestamp and a single worker thread.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a shear-lattice sampling mask (CKM1).
    Mask(MaskArgs),
    /// Generate phantoms and their undersampled k-space.
    Simulate(SimulateArgs),
    /// Train a model on fully sampled sequences.
    Train(TrainArgs),
    /// Reconstruct sequences from undersampled k-space.
    Reconstruct(ReconstructArgs),
    /// Score reconstructions against ground truth (CSV).
    Evaluate(EvaluateArgs),
    /// Write magnitude frames, error maps, an x-t profile and an x-f plane.
    Render(RenderArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MaskArgs {
    #[arg(long, default_value_t = 4)]
    pub accel: usize,
    #[arg(long, default_value_t = 4)]
    pub center: usize,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    #[arg(long, default_value_t = 32)]
    pub cols: usize,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of phantoms, seeded `seed, seed+1, ...`.
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    #[arg(long, default_value_t = 32)]
    pub rows: usize,
    #[arg(long, default_value_t = 32)]
    pub cols: usize,
    /// Sampling mask; when absent one is built from --accel/--center.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub accel: usize,
    #[arg(long, default_value_t = 4)]
    pub center: usize,
    /// Output directory.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// A `*_gt.ckt` file or a directory of them.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 2)]
    pub cascades: usize,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// DC weight: a non-negative number or "inf".
    #[arg(long, default_value = "inf")]
    pub lambda: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Training history CSV.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReconstructArgs {
    /// A `*_kspace.ckt` file or a directory of them.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Overrides the DC weight stored in the checkpoint.
    #[arg(long)]
    pub lambda: Option<String>,
    /// Output file (file input) or directory (directory input).
    #[arg(long)]
    pub output: PathBuf,
    /// Also write every cascade's image and x-f estimate.
    #[arg(long)]
    pub intermediates: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    /// Directory of `*_recon.ckt` files.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory holding the matching `*_gt.ckt` and `*_kspace.ckt`;
    /// defaults to --input.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Metrics CSV.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RenderArgs {
    /// Image sequence (CKT1).
    #[arg(long)]
    pub input: PathBuf,
    /// Ground truth for error maps and a shared grey scale.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    /// A `*.manifest.json` written by an earlier run.
    #[arg(long)]
    pub input: PathBuf,
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match commands::run_args(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprint!("{msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
