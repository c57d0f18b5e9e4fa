use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[serde(rename_all = "kebab-case")]
#[command(name = "cfm", version, about = "Conformal failure masks for super-resolution", args_override_self = true)]
pub struct Cli {
    /// Master seed; required by every randomized subcommand.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving machine-readable outputs.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// JSON object of flag values; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Render a synthetic video dataset with LR and SR frames.
    Synth(SynthArgs),
    /// Bicubic downsample plus Gaussian noise.
    Degrade(DegradeArgs),
    /// Bicubic SR stand-in.
    Sr(SrArgs),
    /// Squared-error, PSNR or failure-mask map of a reconstruction.
    Errmap(ErrmapArgs),
    /// Fit the error network on train-tagged videos.
    Train(TrainArgs),
    /// Predict error-score maps.
    Predict(PredictArgs),
    /// Calibrate the mask threshold.
    Calibrate(CalibrateArgs),
    /// Apply a calibrated threshold to a score map.
    Mask(MaskArgs),
    /// AUROC / FPR95 of scores, and FNR / mask size for a threshold.
    Eval(EvalArgs),
    /// Repeated calibration/test splits.
    Trials(TrialsArgs),
    /// Risk versus mask-size curve.
    Curve(CurveArgs),
    /// Detection quality across model and data sizes.
    Ablate(AblateArgs),
    /// Full synthetic pipeline.
    Demo(DemoArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Degrade(_) => "degrade",
            Command::Sr(_) => "sr",
            Command::Errmap(_) => "errmap",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Calibrate(_) => "calibrate",
            Command::Mask(_) => "mask",
            Command::Eval(_) => "eval",
            Command::Trials(_) => "trials",
            Command::Curve(_) => "curve",
            Command::Ablate(_) => "ablate",
            Command::Demo(_) => "demo",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SrModeArg {
    Plain,
    Sharpen,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderArg {
    ConvReluBn,
    ConvBnRelu,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureArg {
    Identity,
    Handcrafted,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchUnitArg {
    Image,
    Video,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitUnitArg {
    Video,
    Image,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceArg {
    Oracle,
    Noisy,
    Errnet,
    Precomputed,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    Se,
    Psnr,
    Mask,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisArg {
    NBlocks,
    Width,
    NTrainVideos,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SceneArgs {
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 10)]
    pub n_videos: usize,
    #[arg(long, default_value_t = 5)]
    pub frames: usize,
    #[arg(long, default_value_t = 6)]
    pub n_ellipses: usize,
    #[arg(long, default_value_t = 0.12)]
    pub vessel_density: f64,
    #[arg(long, default_value_t = 5)]
    pub specular_count: usize,
    #[arg(long, default_value_t = 0.12)]
    pub texture_amplitude: f64,
    #[arg(long, default_value_t = 3, allow_hyphen_values = true)]
    pub translation_px: i64,
    #[arg(long, default_value_t = 2)]
    pub scale: u32,
    #[arg(long, default_value_t = 0.01)]
    pub noise_sigma: f64,
    #[arg(long, value_enum, default_value_t = SrModeArg::Plain)]
    pub sr_mode: SrModeArg,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SynthArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scene: SceneArgs,
    /// Tag the first N videos as train and the rest as test.
    #[arg(long)]
    pub n_train_videos: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DegradeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub scale: u32,
    #[arg(long, default_value_t = 0.01)]
    pub noise_sigma: f64,
    #[arg(long, default_value = "lr.ppm")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SrArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub scale: u32,
    #[arg(long, value_enum, default_value_t = SrModeArg::Plain)]
    pub mode: SrModeArg,
    #[arg(long, default_value = "sr.ppm")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ErrmapArgs {
    /// Reconstruction (PPM/PGM or EMAP).
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, value_enum, default_value_t = MapKind::Se)]
    pub kind: MapKind,
    /// Failure level for `--kind mask`.
    #[arg(long)]
    pub tau_fail: Option<f64>,
    /// Odd box window for windowed PSNR.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value = "errmap.emap")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ArchArgs {
    #[arg(long, default_value_t = 2)]
    pub n_blocks: usize,
    #[arg(long, default_value_t = 64)]
    pub net_width: usize,
    #[arg(long, value_enum, default_value_t = OrderArg::ConvReluBn)]
    pub order: OrderArg,
    #[arg(long, value_enum, default_value_t = FeatureArg::Handcrafted)]
    pub feature_mode: FeatureArg,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct OptimArgs {
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value_t = BatchUnitArg::Image)]
    pub batch_unit: BatchUnitArg,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Fit raw squared errors instead of RMS-normalized ones.
    #[arg(long)]
    pub raw_targets: bool,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub arch: ArchArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value = "errnet.enet")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PredictArgs {
    #[arg(long)]
    pub params: PathBuf,
    /// Single LR image; writes one score map.
    #[arg(long, conflicts_with = "manifest")]
    pub input: Option<PathBuf>,
    /// Scores every frame of the non-train videos and writes `scores.emap-list`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FeatureArg::Handcrafted)]
    pub feature_mode: FeatureArg,
    #[arg(long, default_value = "scores.emap")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CalibrateArgs {
    /// `.emap-list` of score maps.
    #[arg(long)]
    pub scores: PathBuf,
    /// `.emap-list` of oracle failure masks at `--tau-fail`.
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub tau_fail: f64,
    #[arg(long, default_value = "calibration.json")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct MaskArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// CalibrationResult JSON.
    #[arg(long)]
    pub tau_tilde: PathBuf,
    #[arg(long, default_value = "mask.emap")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub masks: PathBuf,
    /// CalibrationResult JSON; adds FNR and mask size.
    #[arg(long)]
    pub tau_tilde: Option<PathBuf>,
    /// Use the 2^16-bin histogram AUROC.
    #[arg(long)]
    pub histogram: bool,
    /// Average AUROC / FPR95 over images instead of pooling.
    #[arg(long)]
    pub per_image: bool,
    #[arg(long, default_value = "eval.json")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SourceArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = SourceArg::Oracle)]
    pub source: SourceArg,
    /// Error-network container for `--source errnet`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// `.emap-list` of scores for `--source precomputed`, one per evaluation frame.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Log-normal noise level for `--source noisy`.
    #[arg(long, default_value_t = 0.5)]
    pub score_noise: f64,
    #[arg(long, value_enum, default_value_t = FeatureArg::Handcrafted)]
    pub feature_mode: FeatureArg,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SplitArgs {
    #[arg(long, default_value_t = 100)]
    pub n_trials: usize,
    #[arg(long, default_value_t = 0.7)]
    pub cal_fraction: f64,
    #[arg(long, value_enum, default_value_t = SplitUnitArg::Video)]
    pub split_unit: SplitUnitArg,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrialsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub split: SplitArgs,
    #[arg(long, action = clap::ArgAction::Set, value_delimiter = ',', default_values_t = [0.10, 0.05])]
    pub alphas: Vec<f64>,
    #[arg(long, action = clap::ArgAction::Set, value_delimiter = ',', default_values_t = [22.0, 24.0, 26.0])]
    pub tau_fails: Vec<f64>,
    #[arg(long, default_value = "trials.json")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CurveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub split: SplitArgs,
    #[arg(long, default_value_t = 22.0)]
    pub tau_fail: f64,
    #[arg(long, action = clap::ArgAction::Set, value_delimiter = ',', default_values_t = [0.001, 0.005, 0.01, 0.025, 0.05, 0.10])]
    pub alphas: Vec<f64>,
    #[arg(long, action = clap::ArgAction::Set, value_delimiter = ',', default_values_t = [13.0, 14.0, 15.0, 16.0, 17.0, 18.0, 19.0, 20.0, 21.0, 22.0, 23.0, 24.0, 25.0, 26.0])]
    pub baseline_levels: Vec<f64>,
    #[arg(long, default_value = "curve.csv")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub axis: AxisArg,
    #[arg(long, action = clap::ArgAction::Set, value_delimiter = ',', required = true)]
    pub values: Vec<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub arch: ArchArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: OptimArgs,
    /// Train videos for the model-size axes (0 = all train-tagged).
    #[arg(long, default_value_t = 0)]
    pub n_train_videos: usize,
    #[arg(long, default_value_t = 22.0)]
    pub tau_fail: f64,
    #[arg(long)]
    pub per_image: bool,
    #[arg(long, default_value = "ablation.csv")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DemoArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scene: SceneArgs,
    #[arg(long, default_value_t = 3)]
    pub n_train_videos: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub arch: ArchArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value_t = 100)]
    pub n_trials: usize,
}
