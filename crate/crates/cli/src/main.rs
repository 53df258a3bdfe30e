//! `tv4`: total-variation denoising and upscaling from the command line.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or input error.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tv4::interp::Stencil;
use tv4::io::Fixture;
use tv4::Model;

#[derive(Parser, Debug)]
#[command(name = "tv4", version, about = "Discrete total variation models and primal-dual solvers for grayscale images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Denoise an image: min 1/2 |x - y|^2 + lambda TV(x).
    Denoise(DenoiseArgs),
    /// Upscale a low-resolution image: min TV(x) subject to block-mean(x) = y.
    Upscale(UpscaleArgs),
    /// Sweep lambda for denoising and report the relative error per value.
    Sweep(SweepArgs),
    /// Verify adjoint and Moreau identities; report published-formula mismatches.
    Selfcheck(SelfcheckArgs),
    /// Evaluate a TV model on an image.
    Tv(TvArgs),
    /// Write a synthetic fixture image.
    Synth(SynthArgs),
    /// Block-average downscale an image.
    Downscale(DownscaleArgs),
    /// Rhombus upscaling comparison across TV models.
    Rhombus(RhombusArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ModelArg {
    Iso,
    Aniso,
    Upwind,
    Prn,
    Condat,
    New,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Model {
        match m {
            ModelArg::Iso => Model::Iso,
            ModelArg::Aniso => Model::Aniso,
            ModelArg::Upwind => Model::Upwind,
            ModelArg::Prn => Model::Prn,
            ModelArg::Condat => Model::Condat,
            ModelArg::New => Model::New,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Default)]
pub enum StencilArg {
    /// Published interpolation tables.
    #[default]
    Printed,
    /// Published tables with the corner operator reading u4(i, j).
    Unshifted,
    /// Diagonal-channel tables rebuilt from sample positions.
    Geometric,
}

impl From<StencilArg> for Stencil {
    fn from(s: StencilArg) -> Stencil {
        match s {
            StencilArg::Printed => Stencil::AsPrinted,
            StencilArg::Unshifted => Stencil::Unshifted,
            StencilArg::Geometric => Stencil::Geometric,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum FixtureArg {
    Rhombus,
    Stripes,
    Checker,
    Piecewise,
}

impl FixtureArg {
    pub fn with_size(self, n: usize) -> Fixture {
        match self {
            FixtureArg::Rhombus => Fixture::Rhombus(n),
            FixtureArg::Stripes => Fixture::Stripes(n),
            FixtureArg::Checker => Fixture::Checker(n),
            FixtureArg::Piecewise => Fixture::Piecewise(n),
        }
    }
}

/// Step-size overrides shared by the solver commands.
#[derive(Args, Debug, Clone, Default)]
pub struct StepArgs {
    /// Primal step [default: per model, see below]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Dual step [default: per model]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Over-relaxation for iso/aniso/upwind/prn, in (0, 2) [default: per model]
    #[arg(long)]
    pub rho: Option<f64>,
    /// Relaxation for condat/new, in (0, 2) [default: 1]
    #[arg(long)]
    pub mu: Option<f64>,
    /// Iteration budget [default: 1000 denoise, 5000 upscale]
    #[arg(long)]
    pub iters: Option<usize>,
    /// Stop early once the relative primal change (and, for condat/new, the
    /// constraint residual) falls below this value
    #[arg(long)]
    pub residual_tol: Option<f64>,
    /// Use sigma = 16/tau (upwind, prn) or 8/tau (iso, aniso) as tabulated
    /// verbatim; violates tau*sigma*|K|^2 <= 1 and warns at startup
    #[arg(long)]
    pub printed_steps: bool,
    /// Interpolation tables for the new TV
    #[arg(long, value_enum, default_value_t = StencilArg::Printed)]
    pub stencil: StencilArg,
}

const DENOISE_DEFAULTS: &str = "\
Per-model denoising defaults (lambda; tau, sigma, rho/mu):
  upwind  0.155; tau 0.01, sigma 1/(16 tau), rho 1.9
  iso     0.12;  tau 0.01, sigma 1/(8 tau),  rho 1.9
  aniso   0.12;  tau 0.01, sigma 1/(8 tau),  rho 1.9
  prn     0.12;  tau 0.01, sigma 1/(16 tau), rho 1.9
  condat  0.12;  tau 0.99/8,  sigma 0.99/3,  mu 1
  new     0.075; tau 0.99/10, sigma 0.99/10, mu 1
Budget N = 1000. --printed-steps uses sigma = 16/tau (upwind, prn) or 8/tau (iso, aniso).

Metrics JSON on stdout: model, lambda, iterations, residual, runtime_s,
objective, step_product, and when a reference is known rel_err_clean_denom
(|ref - x| / |ref|) and rel_err_denoised_denom (|ref - x| / |x|).";

#[derive(Args, Debug)]
#[command(after_help = DENOISE_DEFAULTS)]
pub struct DenoiseArgs {
    /// Input image (PGM or PNG)
    #[arg(long = "in")]
    pub input: std::path::PathBuf,
    /// Output image (.pgm or .png)
    #[arg(long)]
    pub out: std::path::PathBuf,
    #[arg(long = "tv", value_enum, default_value_t = ModelArg::New)]
    pub model: ModelArg,
    /// Regularisation weight [default: per model]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Clean reference image for error metrics
    #[arg(long = "ref")]
    pub reference: Option<std::path::PathBuf>,
    /// Add Gaussian noise of this standard deviation to the input first; the
    /// clean input then serves as reference unless --ref is given
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Seed for --noise-sigma
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the noisy image here
    #[arg(long)]
    pub noisy_out: Option<std::path::PathBuf>,
    #[command(flatten)]
    pub steps: StepArgs,
}

const UPSCALE_DEFAULTS: &str = "\
Per-model upscaling defaults (tau, sigma, rho/mu), lambda fixed at 1:
  upwind  tau 0.02,    sigma 1/(16 tau), rho 1.9
  iso     tau 1/8,     sigma 0.1,        rho 1
  aniso   tau 1/8,     sigma 0.1,        rho 1
  prn     tau 1/16,    sigma 0.1,        rho 1
  condat  tau 0.9/8,   sigma 0.9/3,      mu 1
  new     tau 0.9/30,  sigma 0.9/6,      mu 1
Budget N = 5000. The output is projected onto {x : A x = y}; exit status 1 if
|A x - y|_F > 1e-6.

Metrics JSON on stdout: model, scale, iterations, residual, feasibility,
runtime_s, and abs_err (|ref - x|_F) when --ref is given.";

#[derive(Args, Debug)]
#[command(after_help = UPSCALE_DEFAULTS)]
pub struct UpscaleArgs {
    /// Low-resolution input image
    #[arg(long = "in")]
    pub input: std::path::PathBuf,
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Upscaling factor m (each low-resolution pixel becomes an m x m block)
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    #[arg(long = "tv", value_enum, default_value_t = ModelArg::New)]
    pub model: ModelArg,
    /// High-resolution reference for the absolute error
    #[arg(long = "ref")]
    pub reference: Option<std::path::PathBuf>,
    #[command(flatten)]
    pub steps: StepArgs,
}

#[derive(Args, Debug)]
#[command(after_help = "CSV on stdout (or --csv): header `lambda,rel_err`, one row per lambda in \
the given order, then a comment line `# argmin lambda=<l> rel_err=<e>`.")]
pub struct SweepArgs {
    /// Noisy input image (or clean, with --noise-sigma)
    #[arg(long = "in")]
    pub input: std::path::PathBuf,
    /// Clean reference image
    #[arg(long = "ref")]
    pub reference: std::path::PathBuf,
    #[arg(long = "tv", value_enum, default_value_t = ModelArg::New)]
    pub model: ModelArg,
    /// Comma-separated lambda values
    #[arg(long, value_delimiter = ',', conflicts_with = "grid")]
    pub lambdas: Vec<f64>,
    /// Log-spaced grid `lo:hi:n`
    #[arg(long, default_value = "0.01:1:10")]
    pub grid: String,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    pub csv: Option<std::path::PathBuf>,
    #[command(flatten)]
    pub steps: StepArgs,
}

#[derive(Args, Debug)]
pub struct SelfcheckArgs {
    /// Scale one adjoint by 1 + eps to demonstrate a failing check
    #[arg(long, hide = true)]
    pub perturb: Option<f64>,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TvArgs {
    #[arg(long = "in")]
    pub input: std::path::PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Tolerance of the iterative evaluation (condat, new)
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = StencilArg::Printed)]
    pub stencil: StencilArg,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: FixtureArg,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add Gaussian noise (not clamped before quantisation to the file)
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Args, Debug)]
pub struct DownscaleArgs {
    #[arg(long = "in")]
    pub input: std::path::PathBuf,
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Args, Debug)]
#[command(after_help = "CSV on stdout: model,abs_err,feasibility,residual,iterations,runtime_s")]
pub struct RhombusArgs {
    #[arg(long, default_value_t = 92)]
    pub size: usize,
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    /// Iteration budget for every model
    #[arg(long, default_value_t = 20000)]
    pub iters: usize,
    /// Models to compare
    #[arg(long, value_enum, value_delimiter = ',', default_value = "upwind,iso,condat,new")]
    pub models: Vec<ModelArg>,
    #[arg(long, value_enum, default_value_t = StencilArg::Printed)]
    pub stencil: StencilArg,
    /// Directory for the reference, low-resolution and upscaled images
    #[arg(long)]
    pub out_dir: Option<std::path::PathBuf>,
}

fn init_threads() {
    if let Some(n) = std::env::var("TV4_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // fails only if a pool already exists, which is harmless
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    init_threads();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
