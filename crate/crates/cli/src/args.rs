use std::fmt::Display;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nwidth::dimension::{FitMethod, Window};
use nwidth::KernelSpec;
use serde::{Serialize, Serializer};

fn as_text<T: Display, S: Serializer>(value: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(value)
}

fn opt_as_text<T: Display, S: Serializer>(value: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
    match value {
        Some(v) => s.collect_str(v),
        None => s.serialize_none(),
    }
}

/// Kolmogorov n-widths, effective and metric dimensions of point sets under
/// a kernel.
#[derive(Debug, Parser)]
#[command(name = "nwidth", version, about, propagate_version = true)]
pub struct Cli {
    /// Worker threads (0 = all cores). Falls back to NWIDTH_THREADS.
    #[arg(long, global = true, env = "NWIDTH_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Generate a point set.
    Gen(GenArgs),
    /// Greedy width upper bounds w_0 >= w_1 >= ... (and optionally the cover curve).
    Widths(WidthsArgs),
    /// Eigenvalues of the normalised Gram matrix and tail lower bounds.
    Spectrum(SpectrumArgs),
    /// Fit a log-log slope to a widths, cover, spectrum or KRR curve.
    Dim(DimArgs),
    /// Constrained kernel ridge regression excess-risk experiment.
    Krr(KrrArgs),
    /// Run the invariant suite on a named preset.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[command(subcommand)]
    pub domain: Domain,

    /// Output CSV ("-" for stdout).
    #[arg(long, short, global = true, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "domain", rename_all = "lowercase")]
pub enum Domain {
    /// Middle-thirds Cantor set, 2^level points.
    Cantor {
        #[arg(long)]
        level: u32,
    },
    /// Sierpinski carpet, 8^level points.
    Carpet {
        #[arg(long)]
        level: u32,
    },
    /// Menger sponge, 20^level points.
    Menger {
        #[arg(long)]
        level: u32,
    },
    /// Graph of the Weierstrass function on an equispaced grid of [0, 1].
    Weierstrass {
        #[arg(long, short)]
        n: usize,
        /// Amplitude ratio in (0, 1); default b^(-1/2).
        #[arg(long)]
        a: Option<f64>,
        #[arg(long, default_value_t = 7)]
        b: u64,
        /// Series length; default the smallest with a^terms < 1e-12.
        #[arg(long)]
        terms: Option<u32>,
    },
    /// Uniform sample of the unit sphere in R^d.
    Sphere {
        #[arg(long, short)]
        n: usize,
        #[arg(long, short)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Lorenz attractor trajectory, RK4, rescaled to [0, 1]^3.
    Lorenz {
        #[arg(long, short)]
        n: usize,
        #[arg(long, default_value_t = 0.005)]
        dt: f64,
        #[arg(long, default_value_t = 10_000)]
        burn_in: usize,
        /// Initial state "x,y,z".
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [1.0, 1.0, 1.0])]
        init: Vec<f64>,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct WidthsArgs {
    /// Kernel, e.g. "family=exp gamma=1.0 a=1.0" or "family=laplace,gamma=1".
    #[arg(long, short)]
    #[serde(serialize_with = "as_text")]
    pub kernel: KernelSpec,

    /// Point set CSV.
    #[arg(long, short)]
    pub points: PathBuf,

    /// Number of greedy steps.
    #[arg(short = 'T', long = "steps")]
    pub steps: usize,

    /// Stop once the largest residual falls below pivot_tol^2 (default 1e-6 w_0).
    #[arg(long)]
    pub pivot_tol: Option<f64>,

    /// Output CSV with columns t,w_t,selected_index ("-" for stdout).
    #[arg(long, short, default_value = "-")]
    pub out: PathBuf,

    /// Also write the farthest-point cover curve (columns n,eps).
    #[arg(long)]
    pub cover_out: Option<PathBuf>,

    /// Centers in the cover curve (default: the number of steps).
    #[arg(long)]
    pub cover_centers: Option<usize>,

    /// Also write "ln t  -ln w_t" columns for plotting.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SpectrumArgs {
    #[arg(long, short)]
    #[serde(serialize_with = "as_text")]
    pub kernel: KernelSpec,

    #[arg(long, short)]
    pub points: PathBuf,

    /// Largest index reported (default: all).
    #[arg(long)]
    pub nmax: Option<usize>,

    /// Output CSV with columns i,lambda_i,wL_i ("-" for stdout).
    #[arg(long, short, default_value = "-")]
    pub out: PathBuf,

    /// Also write "ln i  -ln wL_i" columns for plotting.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Ransac,
    Ols,
}

impl From<MethodArg> for FitMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ransac => FitMethod::Ransac,
            MethodArg::Ols => FitMethod::Ols,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct DimArgs {
    /// Curve CSV written by `widths`, `widths --cover-out`, `spectrum` or
    /// `krr` ("-" for stdin).
    #[arg(long, short)]
    pub widths: PathBuf,

    /// Inclusive index window "A:B" (default depends on the curve).
    #[arg(long)]
    #[serde(serialize_with = "opt_as_text")]
    pub window: Option<WindowArg>,

    /// Fit method (default: ransac for width/cover/spectrum curves, ols for KRR curves).
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// RANSAC inlier band on the log ordinate.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,

    /// RANSAC hypotheses.
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,

    /// Output JSON ("-" for stdout).
    #[arg(long, short, default_value = "-")]
    pub out: PathBuf,
}

/// `Window` with a `Display` matching its parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowArg(pub Window);

impl std::str::FromStr for WindowArg {
    type Err = nwidth::Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(WindowArg)
    }
}

impl Display for WindowArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.0.start, self.0.end)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct KrrArgs {
    #[arg(long, short)]
    #[serde(serialize_with = "as_text")]
    pub kernel: KernelSpec,

    /// Ambient dimension; inputs lie on the unit sphere of R^d.
    #[arg(long, short)]
    pub d: usize,

    /// Training sizes, strictly increasing.
    #[arg(long, value_delimiter = ',', default_values_t = [32, 64, 128, 256, 512, 1024, 2048])]
    pub sizes: Vec<usize>,

    #[arg(long, default_value_t = 10)]
    pub trials: usize,

    #[arg(long, default_value_t = 10_000)]
    pub ntest: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Targets are noise * U[-1, 1].
    #[arg(long, default_value_t = 0.2)]
    pub noise: f64,

    /// Bisection iterations on ln lambda.
    #[arg(long, default_value_t = nwidth::krr::DEFAULT_BISECTION_ITERS)]
    pub iters: usize,

    #[arg(long, default_value_t = nwidth::krr::DEFAULT_NORM_TOL)]
    pub norm_tol: f64,

    #[arg(long, default_value_t = nwidth::krr::LAMBDA_MIN)]
    pub lambda_min: f64,

    #[arg(long, default_value_t = nwidth::krr::LAMBDA_MAX)]
    pub lambda_max: f64,

    /// Output CSV with columns n,mean_excess,std_excess,trials ("-" for stdout).
    #[arg(long, short, default_value = "-")]
    pub out: PathBuf,

    /// Also write "ln n  ln mean_excess" columns for plotting.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, default_value = "sphere-laplace-small")]
    pub preset: String,

    /// Seed for the random Lipschitz pairs.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// List the presets and exit.
    #[arg(long)]
    pub list: bool,
}
