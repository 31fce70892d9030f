use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod annotate;
mod failure;
mod inspect;
mod map;
mod train;

use failure::Failure;

/// Map urban scenes from geotagged photos: planned/unplanned status, road
/// users and capture position per image.
#[derive(Debug, Parser)]
#[command(name = "urbani", version)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the planned/unplanned classifier.
    TrainSlumsnet(TrainSlumsnetArgs),
    /// Train the object detector.
    TrainDetector(TrainDetectorArgs),
    /// Process a directory of images into CSV (and optionally GeoJSON).
    Map(MapArgs),
    /// Report classifier, detector and metadata output for one image.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClassifierPreset {
    /// 200×200 input, published layer widths and schedule.
    Full,
    /// 32×32 input with narrow layers.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DetectorPreset {
    /// 300×300 input with six feature maps.
    Full,
    /// 64×64 input with four feature maps.
    Desk,
    /// Desk model without patch sampling, for memorizing a small set.
    Overfit,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct DataSource {
    /// Dataset root directory.
    #[arg(long, env = "URBANI_DATA")]
    data: Option<PathBuf>,
    /// Generate this many synthetic images instead of reading a dataset.
    #[arg(long, env = "URBANI_SYNTHETIC")]
    synthetic: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainSlumsnetArgs {
    #[command(flatten)]
    source: DataSource,
    /// Checkpoint output path.
    #[arg(long, env = "URBANI_OUT")]
    out: PathBuf,
    /// Step/loss log; defaults to the checkpoint path with `.metrics` appended.
    #[arg(long, env = "URBANI_METRICS")]
    metrics: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "full", env = "URBANI_PRESET")]
    preset: ClassifierPreset,
    #[arg(long, env = "URBANI_EPOCHS")]
    epochs: Option<usize>,
    #[arg(long, env = "URBANI_STEPS_PER_EPOCH")]
    steps_per_epoch: Option<usize>,
    #[arg(long, env = "URBANI_BATCH_SIZE")]
    batch_size: Option<usize>,
    #[arg(long, env = "URBANI_LEARNING_RATE")]
    learning_rate: Option<f64>,
    /// Fraction of the data used for training; the rest validates.
    #[arg(long, default_value_t = 0.8, env = "URBANI_TRAIN_FRACTION")]
    train_fraction: f64,
    #[arg(long, default_value_t = 0, env = "URBANI_SEED")]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainDetectorArgs {
    #[command(flatten)]
    source: DataSource,
    #[arg(long, env = "URBANI_OUT")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "full", env = "URBANI_PRESET")]
    preset: DetectorPreset,
    #[arg(long, env = "URBANI_STEPS")]
    steps: Option<usize>,
    #[arg(long, env = "URBANI_BATCH_SIZE")]
    batch_size: Option<usize>,
    #[arg(long, env = "URBANI_LEARNING_RATE")]
    learning_rate: Option<f64>,
    /// SGD with learning rate 0.1 and momentum 0.9 instead of Adam.
    #[arg(long, env = "URBANI_PUBLISHED_SCHEDULE")]
    published_schedule: bool,
    /// Comma-separated object classes (background is implicit).
    #[arg(long, value_delimiter = ',', env = "URBANI_CLASSES")]
    classes: Option<Vec<String>>,
    #[arg(long, default_value_t = 0, env = "URBANI_SEED")]
    seed: u64,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Classifier checkpoint.
    #[arg(long, env = "URBANI_CLASSIFIER")]
    classifier: PathBuf,
    /// Detector checkpoint.
    #[arg(long, env = "URBANI_DETECTOR")]
    detector: PathBuf,
    /// Minimum class confidence for a detection.
    #[arg(long, default_value_t = 0.5, env = "URBANI_SCORE_THRESHOLD")]
    score_threshold: f64,
    /// Probability at or above which an image is unplanned.
    #[arg(long, default_value_t = 0.5, env = "URBANI_CLASS_THRESHOLD")]
    class_threshold: f64,
}

#[derive(Debug, Args)]
struct MapArgs {
    /// Directory of images.
    input: PathBuf,
    #[command(flatten)]
    models: ModelArgs,
    /// CSV output path.
    #[arg(long, env = "URBANI_OUT")]
    out: PathBuf,
    #[arg(long, env = "URBANI_GEOJSON")]
    geojson: Option<PathBuf>,
    /// Write rows without position as empty cells instead of skipping them.
    #[arg(long, env = "URBANI_KEEP_MISSING_GEO")]
    keep_missing_geo: bool,
    #[arg(long, default_value_t = 1, env = "URBANI_WORKERS")]
    workers: usize,
    #[arg(long, default_value_t = 0, env = "URBANI_SEED")]
    seed: u64,
}

#[derive(Debug, Args)]
struct InspectArgs {
    image: PathBuf,
    #[command(flatten)]
    models: ModelArgs,
    /// Write a copy with drawn boxes and a status banner; defaults to
    /// `<image stem>_annotated.png` beside the input.
    #[arg(long, num_args = 0..=1, env = "URBANI_ANNOTATE")]
    annotate: Option<Option<PathBuf>>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::TrainSlumsnet(a) => train::slumsnet(a),
        Command::TrainDetector(a) => train::detector(a),
        Command::Map(a) => map::run(a),
        Command::Inspect(a) => inspect::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(failure::USAGE),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
