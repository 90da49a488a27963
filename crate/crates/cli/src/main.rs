#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use chirp_ranging::experiments::Scale;
use chirp_ranging::Detector;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const OUT_ENV: &str = "CHIRP_RANGING_OUT";

#[derive(Debug, Parser)]
#[command(name = "chirp-ranging", version, about = "Hybrid RF-acoustic chirp ranging simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the broadcast chirp and simulated wake-up snippets.
    Synth,
    /// Write the room impulse response between source and receiver.
    Rir,
    /// Estimate distances from recorded snippets.
    Range {
        /// `paper-chirp` for the configured broadcast, or a waveform file.
        #[arg(long, default_value = "paper-chirp")]
        template: String,
    },
    /// Monte Carlo trials at a single receiver.
    Mc,
    /// Noiseless or noisy sweep over the receiver grid.
    Grid,
    /// Prominence factor sweep over the grid.
    Ppf,
    /// All estimators over the grid at several SNRs.
    Compare,
    /// Duty-cycled power budget and battery life.
    Power,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = ScaleArg::Desk)]
    pub scale: ScaleArg,
    /// Wall absorption coefficient.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// SNR levels in dB; `inf` for noiseless.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub snr: Vec<f64>,
    /// Estimators such as `maximum`, `quadratic_pos`, `linear:-0.5`, `exponential:0.003`, `prominence:65`, `delta_peak` or `all`.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub estimator: Vec<String>,
    /// Peak prominence factor; several values define the `ppf` sweep.
    #[arg(long, global = true, value_delimiter = ',')]
    pub ppf: Vec<f64>,
    /// Input waveform file for `range`.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Waveform file format; inferred from the extension when omitted.
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub detector: Option<DetectorArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Desk,
    Paper,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Desk => Scale::Desk,
            ScaleArg::Paper => Scale::Paper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Wav,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorArg {
    Coherent,
    Envelope,
    Hybrid,
}

impl From<DetectorArg> for Detector {
    fn from(d: DetectorArg) -> Self {
        match d {
            DetectorArg::Coherent => Detector::Coherent,
            DetectorArg::Envelope => Detector::Envelope,
            DetectorArg::Hybrid => Detector::Hybrid,
        }
    }
}

/// Failure classes mapped onto process exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(Vec<String>),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<chirp_ranging::Error> for Failure {
    fn from(e: chirp_ranging::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(problems)) => {
            eprintln!("configuration error:");
            for p in problems {
                eprintln!("  - {p}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
