//! Command-line surface for the resampling toolkit.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or format error. Detector
//! failures inside `pipeline` are recorded per frame and leave exit 0 with
//! the failed-frame count in the summary.

mod commands;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "zoomgrid", version, about = "Saliency-guided non-uniform downsampling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize detections into a saliency map (16-bit PGM).
    Saliency(commands::SaliencyArgs),
    /// Fit a sampling grid to a saliency map and write it as a grid file.
    Grid(commands::GridArgs),
    /// Resample an image through a grid file.
    Warp(commands::WarpArgs),
    /// Map detections from resampled coordinates back to the original image.
    Invert(commands::InvertArgs),
    /// Run the keyframe-scheduled pipeline over a frame directory.
    Pipeline(commands::PipelineArgs),
    /// Render deformation-field lines and/or detection boxes onto an image.
    Overlay(commands::OverlayArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Saliency(args) => commands::saliency(args),
        Command::Grid(args) => commands::grid(args),
        Command::Warp(args) => commands::warp(args),
        Command::Invert(args) => commands::invert(args),
        Command::Pipeline(args) => commands::pipeline(args),
        Command::Overlay(args) => commands::overlay(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}
