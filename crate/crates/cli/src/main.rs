//! `gmt-aniso`: sample surfaces, run the density / flatness / moment /
//! blow-up analyses on a measure file, classify points, and run the
//! verification suites.
//!
//! Exit status: 0 on success, 1 when an analysis fails or a suite is
//! violated, 2 on a usage or configuration error.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "gmt-aniso",
    version,
    about = "Anisotropic density, flatness and blow-up diagnostics"
)]
struct Cli {
    /// Progress messages on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a surface described by a JSON spec into a measure CSV.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Density ratios and doubling defects at one centre.
    Density(Analysis),
    /// β, bβ, anisotropic bβ and β₂ at one centre.
    Flatness(Analysis),
    /// Moments b, Q and the quadratic residuals after the tilde transform.
    Moments(Analysis),
    /// Blow-ups at one centre: flatness functional and F₁ between scales.
    Blowup(Analysis),
    /// Regular / singular verdicts from bβ profiles.
    Classify {
        #[command(flatten)]
        common: Analysis,
        #[arg(long, default_value_t = 0.35)]
        threshold: f64,
        /// Atoms sampled from the annulus around the centre, besides the centre itself.
        #[arg(long, default_value_t = 16)]
        points: usize,
    },
    /// Run verification suites (comma list or "all").
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
pub struct Analysis {
    /// Measure CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory for the reports.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Field JSON; Euclidean when absent.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Scale ladder as min:max:per_octave.
    #[arg(long)]
    scales: Option<String>,
    /// Centre, snapped to the nearest atom; defaults to the origin.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    center: Option<Vec<f64>>,
    /// Intrinsic dimension; defaults to codimension one.
    #[arg(long)]
    dim: Option<usize>,
    /// Seed for the plane searches.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Analysis { kind: String, message: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = cli.verbose;
    match config::threads_from_env().and_then(|_| commands::run(cli.command, verbose)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let (code, kind, message) = match e {
                CliError::Usage(m) => (2, "usage".to_string(), m),
                CliError::Analysis { kind, message } => (1, kind, message),
            };
            let record = json!({
                "tool": "gmt-aniso",
                "version": report::VERSION,
                "error": { "kind": kind, "message": message },
                "exit_code": code,
            });
            eprintln!("{record}");
            ExitCode::from(code)
        }
    }
}
