//! `fasttab` command-line tool.

mod bench;
mod eval;
mod gradcheck;
mod infer;
mod io;
mod synth;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fasttab_core::data::AnonymMethod;
use fasttab_core::metrics::Metric;
use fasttab_core::{Error, HeadVariant};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Core(e) => match e.root() {
                Error::Config(_) => 2,
                Error::NonFinite(_) => 4,
                _ => 3,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "fasttab", version, about = "Grid-centric table structure recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset.
    Synth(SynthArgs),
    /// Train a model on a dataset.
    TrainToy(TrainArgs),
    /// Predict the structure of one image.
    Infer(InferArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Measure per-image latency.
    Bench(BenchArgs),
    /// Compare analytic and finite-difference gradients of every loss term.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    /// Dataset preset name or "R,C,RS,CS".
    #[arg(long, default_value = "8,8,4,4")]
    pub caps: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_rows: Option<usize>,
    #[arg(long)]
    pub max_cols: Option<usize>,
    #[arg(long)]
    pub max_span: Option<usize>,
    /// Render without separator rules.
    #[arg(long)]
    pub borderless: bool,
    /// black, mean, median, blur, pixelation or noise.
    #[arg(long)]
    pub anonymise: Option<AnonymMethod>,
    /// Rotate each sample by an angle drawn from [-ALPHA, ALPHA] degrees.
    #[arg(long)]
    pub rotate: Option<f64>,
    /// Points per ground-truth polyline for rotated samples.
    #[arg(long, default_value_t = 128)]
    pub samples: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training configuration (JSON); the toy configuration if omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Where to write the weights.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the number of refinement iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Per-epoch loss log (JSON).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// PPM or PNG image.
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub curved: bool,
    /// Expected separator head; must match the weights.
    #[arg(long)]
    pub head: Option<HeadVariant>,
    /// Include per-stage timings in the output.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory of `<id>.html` predictions.
    #[arg(long, conflicts_with_all = ["model", "data"])]
    pub pred_dir: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub model: Option<PathBuf>,
    /// Dataset to run the model on.
    #[arg(long, requires = "model")]
    pub data: Option<PathBuf>,
    /// Ground-truth dataset; defaults to --data.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// One or more of steds, grits, car.
    #[arg(long, value_delimiter = ',', default_value = "steds")]
    pub metric: Vec<Metric>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub curved: bool,
    /// Also write model predictions as `<id>.html` here.
    #[arg(long)]
    pub save_pred: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    /// Untimed passes over the first image before measuring.
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    /// Overrides the number of refinement iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub curved: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Model configuration (JSON); the smallest configuration if omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    io::init_threads();
    let result = match cli.command {
        Command::Synth(a) => synth::run(&a),
        Command::TrainToy(a) => train::run(&a),
        Command::Infer(a) => infer::run(&a),
        Command::Eval(a) => eval::run(&a),
        Command::Bench(a) => bench::run(&a),
        Command::Gradcheck(a) => gradcheck::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
