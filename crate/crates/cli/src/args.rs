use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "gazedpm",
    version,
    about = "Deformable part models with fixation density channels"
)]
pub struct Cli {
    /// Seed for every random draw (overrides seeds in --config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "GAZEDPM_THREADS")]
    pub threads: Option<usize>,

    /// YAML or JSON file with the configuration of the subcommand
    /// (training config for `train`, experiment spec for `experiment`,
    /// synthetic spec for `synth`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Print a machine-readable JSON summary on stdout.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fixation log transforms and density-map rendering.
    #[command(subcommand)]
    Fixmap(Fixmap),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train a detector for one class.
    Train(TrainArgs),
    /// Run a trained detector over a split.
    Detect(DetectArgs),
    /// Score detections against the ground truth.
    Eval(EvalArgs),
    /// Train and evaluate every class under one gaze variant.
    Experiment(ExperimentArgs),
    /// Render model filters, or dump a feature pyramid.
    Viz(VizArgs),
}

#[derive(Debug, Subcommand)]
pub enum Fixmap {
    /// Write one density map per image.
    Build(BuildArgs),
    /// Write the fixation log with gaze noise applied.
    Noise(NoiseArgs),
    /// Write a subset of the fixation log. Time-based strategies write
    /// viewing-time normalized onsets and durations.
    Subsample(SubsampleArgs),
    /// Write duration-binned density maps, one channel per bin.
    Softbin(SoftbinArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MapFormat {
    /// 16-bit grayscale PNG per channel.
    Png,
    /// Raw little-endian float32 grid holding all channels.
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = MapFormat::Png)]
    pub format: MapFormat,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
    /// Gaze variant, see `experiment --help`.
    #[arg(long, default_value = "gazedpm")]
    pub variant: String,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Noise standard deviation in multiples of the base sigma.
    #[arg(long)]
    pub sigma_scale: f64,
    /// Output fixation CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SubsampleArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// One of random-n:N, first-n:N, last-n:N, observer:ID, before-time:T,
    /// after-time:T.
    #[arg(long)]
    pub strategy: String,
    /// Output fixation CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SoftbinArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Number of duration bins.
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = MapFormat::Grid)]
    pub format: MapFormat,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Start from the single-class variant with look-alike distractors and
    /// spurious fixations.
    #[arg(long)]
    pub hard: bool,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub class: String,
    /// Gaze variant, see `experiment --help`.
    #[arg(long, default_value = "gazedpm")]
    pub variant: String,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-round training telemetry as JSON lines.
    #[arg(long)]
    pub telemetry: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Report detections scoring above this value (`inf` reports none).
    #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
    pub threshold: f64,
    /// Output JSON-lines detection file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Classes to score; every annotated class by default.
    #[arg(long = "class")]
    pub classes: Vec<String>,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Use the 11-point interpolated AP.
    #[arg(long)]
    pub eleven_point: bool,
}

#[derive(Debug, Args)]
#[command(
    after_help = "Variants: baseline, gazedpm, noise:SCALE, softbins:K, saliency[:DIR], \
observer:ID, random-n:N, first-n:N, last-n:N, before-time:T, after-time:T"
)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for models, detections and reports.
    #[arg(long)]
    pub out: PathBuf,
    /// Gaze variant; overrides the one in --config.
    #[arg(long)]
    pub variant: Option<String>,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    /// Model whose filters are rendered, or whose feature settings and gaze
    /// recipe shape the dumped pyramid.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dump the detection feature pyramid of one image instead of
    /// rendering filters.
    #[arg(long, requires_all = ["manifest", "id"])]
    pub dump_pyramid: bool,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Image id for --dump-pyramid.
    #[arg(long)]
    pub id: Option<String>,
    /// Output directory (filters) or file (pyramid dump).
    #[arg(long)]
    pub out: PathBuf,
}
