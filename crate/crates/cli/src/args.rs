use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "roixai",
    version,
    about = "ROI-gated perturbation explanations for segmentation models"
)]
pub struct Cli {
    /// Flat key=value file supplying defaults for any flag.
    #[arg(long, global = true, env = "XAICLIP_CONFIG")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Enhance an image or every image in a directory.
    Preprocess(PreprocessArgs),
    /// Turn an importance map into a binary ROI mask.
    Roi(RoiArgs),
    /// Explain one prediction.
    Explain(ExplainArgs),
    /// Run traditional and ROI-gated explanations back to back.
    Compare(ExplainArgs),
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Image file or directory of images.
    pub input: PathBuf,
    /// Output file (single input) or directory.
    #[arg(long, env = "XAICLIP_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "XAICLIP_T_BG", default_value_t = 20)]
    pub t_bg: u8,
    #[arg(long, env = "XAICLIP_PCT_LOW", default_value_t = 5.0)]
    pub pct_low: f64,
    #[arg(long, env = "XAICLIP_PCT_HIGH", default_value_t = 95.0)]
    pub pct_high: f64,
    #[arg(long, env = "XAICLIP_CLAHE_CLIP", default_value_t = 2.0)]
    pub clahe_clip: f64,
    /// CLAHE tiles as ROWSxCOLS.
    #[arg(long, env = "XAICLIP_TILE_GRID", default_value = "8x8")]
    pub tile_grid: String,
    #[arg(long, env = "XAICLIP_TARGET_SIZE", default_value_t = 224)]
    pub target_size: usize,
    /// Worker threads, 0 for one per logical CPU.
    #[arg(long, env = "XAICLIP_JOBS", default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct RoiArgs {
    /// Importance map: grayscale PNG/PGM or raw XIMP float file.
    pub importance: PathBuf,
    /// Output mask (.png or .pgm).
    #[arg(long, env = "XAICLIP_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "XAICLIP_GAUSS_SIGMA", default_value_t = 2.0)]
    pub gauss_sigma: f64,
    #[arg(long, env = "XAICLIP_THRESHOLD", default_value_t = 0.5)]
    pub threshold: f64,
    /// Keep this fraction of the most important pixels; overrides --threshold.
    #[arg(long, env = "XAICLIP_TOP_FRACTION")]
    pub top_fraction: Option<f64>,
    /// Nearest-neighbor resize of the mask, WIDTHxHEIGHT.
    #[arg(long, env = "XAICLIP_RESIZE")]
    pub resize: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Occlusion,
    Rise,
    Lime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LimeScoreArg {
    Dice,
    Mean,
}

#[derive(Args, Debug, Clone)]
pub struct ExplainArgs {
    /// Input image (converted to grayscale).
    pub image: PathBuf,
    #[arg(long, value_enum, env = "XAICLIP_METHOD", default_value = "occlusion")]
    pub method: MethodArg,
    /// Binary ROI mask; required by `compare`.
    #[arg(long, env = "XAICLIP_ROI")]
    pub roi: Option<PathBuf>,
    /// `region:<mask>[:<sensitivity>]`, `linear:<file>`, `constant:<mask>`,
    /// `slow:<ms>:<spec>` or an http:// model server URL.
    #[arg(long, env = "XAICLIP_PREDICTOR")]
    pub predictor: String,
    /// Request timeout for model servers, in seconds.
    #[arg(long, env = "XAICLIP_TIMEOUT_SECS", default_value_t = 30.0)]
    pub timeout_secs: f64,
    /// Run the enhancement pipeline (default settings) before explaining.
    #[arg(long, env = "XAICLIP_ENHANCE")]
    pub enhance: bool,
    #[arg(long, env = "XAICLIP_OUT", default_value = ".")]
    pub out: PathBuf,
    #[arg(long, env = "XAICLIP_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads, 0 for one per logical CPU.
    #[arg(long, env = "XAICLIP_JOBS", default_value_t = 0)]
    pub jobs: usize,
    /// FLOPs spent deriving the ROI, charged to the report.
    #[arg(long, env = "XAICLIP_ROI_FLOPS", default_value_t = 0)]
    pub roi_flops: u64,
    /// `zero`, `mean` (foreground mean) or an intensity 0-255.
    #[arg(long, env = "XAICLIP_FILL", default_value = "mean")]
    pub fill: String,
    #[arg(long, env = "XAICLIP_T_BG", default_value_t = 20)]
    pub t_bg: u8,

    #[arg(long, env = "XAICLIP_PATCH", default_value_t = 64)]
    pub patch: usize,
    #[arg(long, env = "XAICLIP_STRIDE", default_value_t = 32)]
    pub stride: usize,

    #[arg(long, env = "XAICLIP_N_MASKS", default_value_t = 2000)]
    pub n_masks: usize,
    #[arg(long, env = "XAICLIP_P1", default_value_t = 0.5)]
    pub p1: f64,
    /// RISE cell grid as ROWSxCOLS.
    #[arg(long, env = "XAICLIP_BASE_GRID", default_value = "7x7")]
    pub base_grid: String,
    #[arg(long, env = "XAICLIP_NO_SHIFT")]
    pub no_shift: bool,

    #[arg(long, env = "XAICLIP_N_SAMPLES", default_value_t = 300)]
    pub n_samples: usize,
    /// Comma-separated superpixel scales.
    #[arg(long, env = "XAICLIP_SCALES", default_value = "50,100,200")]
    pub scales: String,
    #[arg(long, env = "XAICLIP_KERNEL_WIDTH", default_value_t = 0.25)]
    pub kernel_width: f64,
    #[arg(long, env = "XAICLIP_RIDGE_LAMBDA", default_value_t = 0.01)]
    pub ridge_lambda: f64,
    #[arg(long, value_enum, env = "XAICLIP_LIME_SCORE", default_value = "dice")]
    pub lime_score: LimeScoreArg,
    /// Also write one heatmap per LIME scale.
    #[arg(long, env = "XAICLIP_DEBUG_SCALES")]
    pub debug_scales: bool,
}
