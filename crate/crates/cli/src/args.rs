use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "handsynth", version, about = "Synthetic-to-real hand data toolkit")]
pub struct Cli {
    /// Global seed; per-record streams are derived from it and the record id.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Directory for all outputs.
    #[arg(long, global = true, env = "HANDSYNTH_OUT_DIR", default_value = "out")]
    pub out_dir: PathBuf,

    /// Worker threads for batch work (default: all cores).
    #[arg(long, global = true, env = "HANDSYNTH_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the procedurally built desk-scale hand model.
    BuildAsset(BuildAssetArgs),
    /// Generate a toy dataset: targets, masks, images, cameras and a manifest.
    ToyData(ToyDataArgs),
    /// Fit the hand model to the target meshes of a manifest.
    Fit(FitArgs),
    /// Amplitude-spectrum augmentation of images.
    Augment(AugmentArgs),
    /// Radial band statistics of an image corpus.
    AnalyzeSpectrum(AnalyzeSpectrumArgs),
    /// Paste real arm and object pixels into synthetic images.
    Compose(ComposeArgs),
    /// Per-frame occlusion levels and joint visibility.
    LabelOcclusion(LabelOcclusionArgs),
    /// Train the pose prior.
    TrainPrior(TrainPriorArgs),
    /// Reconstruct hidden joints of predicted poses with the prior.
    Refine(RefineArgs),
    /// Aligned and unaligned joint and vertex errors, per occlusion level.
    Evaluate(EvaluateArgs),
    /// Check a manifest without running anything.
    ValidateManifest(ValidateManifestArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::BuildAsset(_) => "build-asset",
            Command::ToyData(_) => "toy-data",
            Command::Fit(_) => "fit",
            Command::Augment(_) => "augment",
            Command::AnalyzeSpectrum(_) => "analyze-spectrum",
            Command::Compose(_) => "compose",
            Command::LabelOcclusion(_) => "label-occlusion",
            Command::TrainPrior(_) => "train-prior",
            Command::Refine(_) => "refine",
            Command::Evaluate(_) => "evaluate",
            Command::ValidateManifest(_) => "validate-manifest",
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildAssetArgs {
    /// Add a carpometacarpal joint per finger (25 joints instead of 21).
    #[arg(long)]
    pub carpal: bool,
    /// Number of shape components, at most 10.
    #[arg(long, default_value_t = 10)]
    pub shape_components: usize,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "model.json")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct ToyDataArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Number of frames.
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    /// Number of training poses for the prior.
    #[arg(long, default_value_t = 512)]
    pub prior_poses: usize,
    #[arg(long, default_value_t = 224)]
    pub image_size: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Fitting configuration (JSON); defaults to the two-stage schedule.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(id = "images", required = true, multiple = false)]
pub struct ImageSource {
    /// Manifest whose records carry an `image`.
    #[arg(long, group = "images")]
    pub manifest: Option<PathBuf>,
    /// Directory of PNG files, taken in name order with the file stem as id.
    #[arg(long, group = "images")]
    pub input_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub source: ImageSource,
    /// Parameters (JSON); the flags below override individual fields.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Allow negative amplitude multipliers.
    #[arg(long)]
    pub no_clamp: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeSpectrumArgs {
    #[command(flatten)]
    pub source: ImageSource,
    #[arg(long, default_value_t = handsynth_core::spectrum::DEFAULT_BANDS)]
    pub bands: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Segmented,
    RandomFill,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Mode for records that do not name one.
    #[arg(long, value_enum, default_value = "segmented")]
    pub mode: ModeArg,
}

#[derive(Debug, Args)]
pub struct LabelOcclusionArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = handsynth_core::occlusion::DEFAULT_THRESHOLD)]
    pub threshold: usize,
    /// Scale the threshold with the mesh's vertex count.
    #[arg(long)]
    pub auto_scale: bool,
    #[arg(long, default_value_t = 0.005)]
    pub depth_tolerance: f64,
}

#[derive(Debug, Args)]
pub struct TrainPriorArgs {
    /// Line-delimited poses (`id`, `joints`).
    #[arg(long)]
    pub poses: PathBuf,
    /// Training configuration (JSON). Its seed is replaced by `--seed`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub prior: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Occlusion labels providing per-joint visibility.
    #[arg(long)]
    pub labels: PathBuf,
    /// Model whose topology map picks the prior's joints out of larger
    /// predicted skeletons.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// JSON array mapping each prior joint to a predicted joint.
    #[arg(long, conflicts_with = "model")]
    pub topology_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub ground_truth: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Model whose topology map reduces predicted skeletons.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// JSON array mapping each ground-truth joint to a predicted joint.
    #[arg(long, conflicts_with = "model")]
    pub topology_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateManifestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}
