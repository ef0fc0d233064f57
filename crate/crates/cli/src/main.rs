//! `lccount`: generate datasets, train, evaluate, predict and inspect splits.

mod commands;
mod config;
mod inspect;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use lccount::{LossTerms, SplitMethod};

#[derive(Parser, Debug)]
#[command(
    name = "lccount",
    version,
    about = "Object counting by localization from point annotations"
)]
#[command(args_override_self = true)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dot-scatter dataset and its manifest.
    Generate(GenerateArgs),
    /// Train a counting network; writes a checkpoint and a CSV log.
    Train(TrainCmd),
    /// Score a checkpoint (or given predictions) on one split.
    Eval(EvalArgs),
    /// Count objects in images.
    Predict(PredictArgs),
    /// Render blobs and split boundaries for one image.
    InspectSplits(InspectArgs),
    /// Train once per loss configuration and tabulate MAE and F-score.
    Ablate(AblateArgs),
}

const SUBCOMMANDS: &[&str] = &["generate", "train", "eval", "predict", "inspect-splits", "ablate"];

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 280)]
    pub images: usize,
    /// Square image side; overridden by --height / --width.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    #[arg(long, default_value_t = 8)]
    pub max_count: usize,
    #[arg(long, default_value_t = 2.5)]
    pub min_radius: f64,
    #[arg(long, default_value_t = 3.5)]
    pub max_radius: f64,
    #[arg(long, default_value_t = 0.04)]
    pub noise: f64,
    /// Probability that a dot touches an earlier one.
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
    #[arg(long, default_value_t = 1)]
    pub classes: usize,
    /// Relative train:val:test sizes.
    #[arg(long, default_value = "5:1:1")]
    pub split_ratio: String,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = SplitMethod::Watershed)]
    pub split_method: SplitMethod,
    #[arg(long, default_value_t = 1e-5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 5e-5)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Do not add mirrored copies of the training images.
    #[arg(long)]
    pub no_flip: bool,
    /// Divide the point, split and false-positive terms by their weight.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Args, Debug)]
pub struct TrainCmd {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Loss terms: `full`, or a `+`-joined subset of li, lp, ls, lf.
    #[arg(long, default_value_t = LossTerms::FULL)]
    pub loss: LossTerms,
    /// Directory for `model.ckpt` and `train_log.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, required_unless_present = "predictions", conflicts_with = "predictions")]
    pub checkpoint: Option<PathBuf>,
    /// Manifest of predicted object locations, scored instead of a network.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: lccount::data::Split,
    /// Highest GAME level reported; levels 0 through this one are emitted.
    #[arg(long, default_value_t = 3)]
    pub game_level: u32,
    /// Directory for `metrics.txt` and `metrics.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    /// Where overlays go; defaults to each image's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_overlay: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Panels {
    Watershed,
    Line,
    Both,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long, required_unless_present = "probmap", conflicts_with = "probmap")]
    pub checkpoint: Option<PathBuf>,
    /// Grayscale PNG read as the foreground probability.
    #[arg(long)]
    pub probmap: Option<PathBuf>,
    /// Image to run the network on, or to draw under a probability map.
    #[arg(long, required_unless_present_any = ["probmap", "manifest"])]
    pub image: Option<PathBuf>,
    /// Annotations as `row,col[,class];...`.
    #[arg(long, conflicts_with = "manifest")]
    pub points: Option<String>,
    /// Take image and points from this manifest ...
    #[arg(long, requires = "index")]
    pub manifest: Option<PathBuf>,
    /// ... at this entry (0-based).
    #[arg(long)]
    pub index: Option<usize>,
    #[arg(long, value_enum, default_value_t = Panels::Both)]
    pub method: Panels,
    #[arg(long, default_value = "splits.png")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Directory for per-configuration checkpoints and `ablation.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let args = match config::expand_args(std::env::args().collect(), SUBCOMMANDS) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(commands::EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(commands::EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Generate(a) => commands::generate(&a).map(|()| 0),
        Command::Train(a) => commands::train_cmd(&a).map(|()| 0),
        Command::Eval(a) => commands::eval(&a).map(|()| 0),
        Command::Predict(a) => commands::predict(&a),
        Command::InspectSplits(a) => inspect::inspect_splits(&a).map(|()| 0),
        Command::Ablate(a) => commands::ablate(&a).map(|()| 0),
    }
}
