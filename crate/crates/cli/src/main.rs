//! `dsr`: prior building, mask cleaning, rendering, fitting and gradient
//! checks from the command line.
//!
//! Exit codes: 0 success, 2 bad input, 3 numerical failure, 4 every sample
//! was skipped.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "dsr", version, about = "Differentiable semantic rendering toolkit")]
pub struct Cli {
    /// Worker threads for data-parallel loops [default: all cores]
    #[arg(long, global = true, env = "DSR_THREADS")]
    pub threads: Option<usize>,
    /// Seed for every random draw [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file of flag defaults, keyed by long flag name
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log progress to stderr
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Count labels over a scan set and write the per-vertex prior
    BuildPrior(BuildPriorArgs),
    /// Crop and filter a label mask into MC and C targets
    CleanMask(CleanMaskArgs),
    /// Render a posed body to PFM
    Render(RenderArgs),
    /// Fit body parameters to joints and semantic masks
    Fit(FitArgs),
    /// Compare every analytic gradient against finite differences
    Gradcheck(GradcheckArgs),
    /// Write a synthetic template, scan set and fitting sample
    GenFixture(GenFixtureArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct RasterArgs {
    /// Coverage sharpness [default: 1e-5]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Depth-softmax temperature [default: 0.1]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Skip exterior fragments with d^2/sigma above this [default: off]
    #[arg(long)]
    pub cutoff: Option<f64>,
}

#[derive(Args, Debug)]
pub struct BuildPriorArgs {
    /// Directory of <name>.obj, <name>.camera.json, <name>.png triples
    #[arg(long)]
    pub scans: PathBuf,
    /// Background probability floor [default: 0.05]
    #[arg(long)]
    pub eps_bg: Option<f64>,
    /// Template whose part labels drive incompatibility cleaning [default: no cleaning]
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// JSON incompatibility table replacing the shipped one
    #[arg(long, requires = "template")]
    pub incompatibility: Option<PathBuf>,
    /// Also write the prior as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CleanMaskArgs {
    /// Indexed label PNG (palette index = label)
    #[arg(long)]
    pub mask: PathBuf,
    /// Keypoints JSON (x, y, confidence triplets)
    #[arg(long)]
    pub keypoints: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Output file stem [default: mask file stem]
    #[arg(long)]
    pub name: Option<String>,
    /// Pixels added around the keypoint box [default: 30]
    #[arg(long)]
    pub offset: Option<usize>,
    /// Minimum pixels for a minimal-clothing label [default: 60]
    #[arg(long)]
    pub min_pixels: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderMode {
    /// Minimal-clothing probability, one channel
    Mc,
    /// Four coarse clothing classes, one PFM per channel
    C,
    /// Hard face index (-1 where uncovered)
    Hard,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Body template (.dsrt)
    #[arg(long)]
    pub template: PathBuf,
    /// Body parameters JSON
    #[arg(long)]
    pub params: PathBuf,
    /// Vertex label prior (.dsrt), required for mc and c
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: RenderMode,
    /// Square image side in pixels [default: 128]
    #[arg(long)]
    pub size: Option<usize>,
    #[command(flatten)]
    pub raster: RasterArgs,
    /// Also write 8-bit PNG previews next to each PFM
    #[arg(long)]
    pub png: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerArg {
    Adam,
    Gd,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum McLossArg {
    SoftIou,
    SoftDistm,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReductionArg {
    Mean,
    Sum,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Body template (.dsrt)
    #[arg(long)]
    pub template: PathBuf,
    /// Initial parameters JSON
    #[arg(long)]
    pub init: PathBuf,
    /// 2D keypoints in pixels (x, y, confidence)
    #[arg(long)]
    pub joints: Option<PathBuf>,
    /// 3D joints JSON, one [x, y, z] per joint
    #[arg(long)]
    pub joints3d: Option<PathBuf>,
    /// Parameters JSON supervising theta and beta directly
    #[arg(long)]
    pub params_target: Option<PathBuf>,
    /// Binary minimal-clothing mask PNG
    #[arg(long)]
    pub mc: Option<PathBuf>,
    /// Coarse clothing class PNG (255 = ignore)
    #[arg(long)]
    pub c: Option<PathBuf>,
    /// Sample metadata from clean-mask; its valid labels shape the rendered MC channel
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Vertex label prior (.dsrt), required with --mc or --c
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Reference mesh (.obj) for error metrics
    #[arg(long)]
    pub gt_mesh: Option<PathBuf>,
    /// Optimiser iterations [default: 100]
    #[arg(long)]
    pub iters: Option<usize>,
    /// Iterations before the semantic terms switch on [default: iters / 10]
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Step size [default: 0.01]
    #[arg(long)]
    pub lr: Option<f64>,
    /// [default: adam]
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    /// Minimal-clothing loss [default: soft-iou]
    #[arg(long, value_enum)]
    pub mc_loss: Option<McLossArg>,
    /// Clothing NLL reduction over pixels [default: mean]
    #[arg(long, value_enum)]
    pub reduction: Option<ReductionArg>,
    /// 2D joint weight [default: 1]
    #[arg(long)]
    pub w_2d: Option<f64>,
    /// 3D joint weight [default: 1]
    #[arg(long)]
    pub w_3d: Option<f64>,
    /// Parameter weight [default: 1]
    #[arg(long)]
    pub w_theta: Option<f64>,
    /// Minimal-clothing weight [default: 0.01]
    #[arg(long)]
    pub w_mc: Option<f64>,
    /// Clothing weight [default: 0.01]
    #[arg(long)]
    pub w_c: Option<f64>,
    /// Square image side when no mask fixes it [default: 128]
    #[arg(long)]
    pub size: Option<usize>,
    #[command(flatten)]
    pub raster: RasterArgs,
    /// Dump renders every N iterations
    #[arg(long)]
    pub render_every: Option<usize>,
    /// Directory for --render-every output [default: <out dir>/renders]
    #[arg(long)]
    pub render_dir: Option<PathBuf>,
    /// Per-iteration losses as JSON lines
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecisionArg {
    Double,
    Single,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Fixture image side, at most 64 [default: 16]
    #[arg(long)]
    pub size: Option<usize>,
    /// [default: double]
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
    /// Finite-difference step [default: 1e-6 double, 1e-3 single]
    #[arg(long)]
    pub step: Option<f64>,
    /// Coverage sharpness of the fixtures [default: 2e-3]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Depth-softmax temperature [default: 0.1]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Write the report as JSON
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResolutionArg {
    Small,
    Desk,
}

#[derive(Args, Debug)]
pub struct GenFixtureArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Template level of detail [default: desk]
    #[arg(long, value_enum)]
    pub resolution: Option<ResolutionArg>,
    /// Dressed subjects in the scan set [default: 4]
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Views per subject [default: 4]
    #[arg(long)]
    pub views: Option<usize>,
    /// Image side of scans and sample [default: 128]
    #[arg(long)]
    pub size: Option<usize>,
    /// Pose noise of the sample initialisation, radians [default: 0.1]
    #[arg(long)]
    pub pose_noise: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
