//! `segmic`: decompose, bias-correct and segment MRI slices or synthetic
//! phantoms, evaluate label maps and run experiment grids.
//!
//! Exit codes: 0 success, 1 output failure, 2 input error, 3 evaluation
//! mismatch, 4 solver divergence.

mod config;
mod matrix;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use segmic_core::pipeline::Mode;
use thiserror::Error;

use config::{ConfigFile, Overrides, Preset, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Output(_) => 1,
            CliError::Input(_) => 2,
            CliError::Mismatch(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum ModeArg {
    Segmict2t,
    MicoBaseline,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Segmict2t => Mode::Segmict2t,
            ModeArg::MicoBaseline => Mode::MicoBaseline,
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Phantom noise level in percent of the brightest tissue
    #[arg(long, global = true)]
    np: Option<f64>,
    /// Phantom bias level in percent (peak to peak)
    #[arg(long, global = true)]
    bl: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of ADMM iterations
    #[arg(long, global = true)]
    iters: Option<usize>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[arg(long, global = true)]
    rho: Option<f64>,
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
}

#[derive(Debug, Parser)]
#[command(
    name = "segmic",
    version,
    about = "MRI bias correction, denoising and tissue segmentation"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic slice with ground truth
    Phantom,
    /// Split an image into cartoon and texture
    Decompose {
        /// Input PGM/PNG; a phantom is generated when omitted
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run the bias-correction solver
    Correct {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// K-means segmentation of a corrected image
    Segment {
        #[arg(long)]
        input: PathBuf,
        /// Number of tissue classes
        #[arg(long, default_value_t = 3)]
        classes: usize,
    },
    /// Compare a predicted label image against ground truth
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        /// Count background pixels too
        #[arg(long)]
        all_pixels: bool,
    },
    /// Decompose, correct and segment, writing every artifact
    Pipeline {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Ground-truth label image for `--input`
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Run both methods over a grid of phantoms
    Matrix {
        #[arg(long, value_delimiter = ',', default_value = "5,7,9")]
        nps: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,20,40")]
        bls: Vec<f64>,
        /// Phantom seeds, one instance per seed
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
        seeds: Vec<u64>,
    },
}

fn resolve(common: &Common, input: Option<PathBuf>) -> Result<RunConfig, CliError> {
    let file = common.config.as_deref().map(ConfigFile::load).transpose()?;
    let flags = Overrides {
        np: common.np,
        bl: common.bl,
        seed: common.seed,
        mode: common.mode.map(Mode::from),
        out: common.out.clone(),
        iters: common.iters,
        mu: common.mu,
        eps: common.eps,
        rho: common.rho,
        preset: common.preset,
        input,
    };
    RunConfig::resolve(file, &flags)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let common = &cli.common;
    match cli.command {
        Command::Phantom => run::cmd_phantom(&resolve(common, None)?),
        Command::Decompose { input } => run::cmd_decompose(&resolve(common, input)?),
        Command::Correct { input } => run::cmd_correct(&resolve(common, input)?),
        Command::Segment { input, classes } => {
            run::cmd_segment(&resolve(common, Some(input))?, classes)
        }
        Command::Evaluate {
            pred,
            gt,
            classes,
            all_pixels,
        } => {
            let out = common.out.clone();
            run::cmd_evaluate(&pred, &gt, classes, all_pixels, out.as_deref())
        }
        Command::Pipeline { input, gt } => {
            run::cmd_pipeline(&resolve(common, input)?, gt.as_deref())
        }
        Command::Matrix { nps, bls, seeds } => {
            if nps.is_empty() || bls.is_empty() || seeds.is_empty() {
                return Err(CliError::Input("matrix lists must be nonempty".into()));
            }
            matrix::cmd_matrix(&resolve(common, None)?, &nps, &bls, &seeds)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
