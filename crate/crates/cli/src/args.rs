use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Kernels on particle configurations and probability measures, with
/// mean-field limit experiments.
///
/// Exit codes: 0 success, 1 invalid input, 2 numerical or I/O failure.
/// Diagnostics go to standard error as `error[TAG]: message`.
#[derive(Debug, Parser)]
#[command(name = "mfk", version, propagate_version = true)]
pub struct Cli {
    /// Worker threads (default: all available cores)
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Print progress information to standard error
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kantorovich-Rubinstein (Wasserstein-1) distance between two measures
    W1(W1Args),
    /// Kernel evaluation on measures
    #[command(subcommand)]
    Kernel(KernelCommand),
    /// Gram matrix over the configurations of a dataset, as CSV
    Gram(GramArgs),
    /// Fit kernel ridge regression to a labelled dataset
    Fit(FitArgs),
    /// Evaluate a fitted model on the configurations of a dataset
    Predict(PredictArgs),
    /// Maximum mean discrepancy between two measures
    Mmd(MmdArgs),
    /// Simulate an interacting particle system
    Simulate(SimulateArgs),
    /// Label the configurations of a dataset with an observable
    Label(LabelArgs),
    /// Estimate a modulus of continuity for a kernel from random draws
    Modulus(ModulusArgs),
    /// Check that the McShane extension reproduces kernel values
    #[command(name = "mcshane-check")]
    McshaneCheck(ReportArgs),
    /// Kernel convergence study over a grid of particle counts
    Converge(ConvergeArgs),
    /// Train at one particle count, test at others
    Transfer(ReportArgs),
    /// Run the embedded invariant suite; exits 2 if any check fails
    Selftest(SelftestArgs),
    /// Print version, build information and, optionally, a config hash
    Version(VersionArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Solver {
    /// Transportation simplex
    Exact,
    /// Closed form for one-dimensional measures
    #[value(name = "1d")]
    OneD,
    /// Entropic approximation (log-domain Sinkhorn)
    Sinkhorn,
}

#[derive(Debug, Args)]
pub struct W1Args {
    /// First measure (JSON, or CSV with one point per row)
    #[arg(long, value_name = "FILE")]
    pub mu: PathBuf,
    /// Second measure
    #[arg(long, value_name = "FILE")]
    pub nu: PathBuf,
    /// Ground metric: euclidean, kernel:gaussian:GAMMA or kernel:imq:C
    #[arg(long, default_value = "euclidean", value_name = "METRIC")]
    pub metric: String,
    /// Solver
    #[arg(long, value_enum, default_value = "exact")]
    pub solver: Solver,
    /// Entropic regularisation for the sinkhorn solver
    #[arg(long, default_value_t = 0.01, value_name = "E")]
    pub eps: f64,
    /// Iteration cap for the sinkhorn solver
    #[arg(long, default_value_t = 10_000, value_name = "N")]
    pub max_iters: usize,
    /// Write the optimal coupling as CSV (exact solver only)
    #[arg(long, value_name = "FILE")]
    pub plan: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum KernelCommand {
    /// Evaluate k(mu, nu) for a kernel spec file
    Eval(KernelEvalArgs),
}

#[derive(Debug, Args)]
pub struct KernelEvalArgs {
    /// Kernel spec (JSON with family, base and optional feature_map)
    #[arg(long, value_name = "FILE")]
    pub kernel: PathBuf,
    /// First measure
    #[arg(long, value_name = "FILE")]
    pub mu: PathBuf,
    /// Second measure
    #[arg(long, value_name = "FILE")]
    pub nu: PathBuf,
}

#[derive(Debug, Args)]
pub struct GramArgs {
    /// Kernel spec file
    #[arg(long, value_name = "FILE")]
    pub kernel: PathBuf,
    /// Dataset (JSON lines) whose empirical measures are the centers
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Tolerance of the positive semidefiniteness check, reported on standard error
    #[arg(long, default_value_t = 1e-8, value_name = "TOL")]
    pub psd_tol: f64,
    /// Output file (default: standard output)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Kernel spec file
    #[arg(long, value_name = "FILE")]
    pub kernel: PathBuf,
    /// Labelled dataset (JSON lines)
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Ridge parameter; the system solved is (K + lambda N I) alpha = y
    #[arg(long, value_name = "L")]
    pub lambda: f64,
    /// Model file to write (default: standard output)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file written by `fit`
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Dataset (JSON lines); labels, if present, are ignored
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Output file, one prediction per line (default: standard output)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MmdArgs {
    /// First measure
    #[arg(long, value_name = "FILE")]
    pub mu: PathBuf,
    /// Second measure
    #[arg(long, value_name = "FILE")]
    pub nu: PathBuf,
    /// Base kernel: gaussian:GAMMA or imq:C
    #[arg(long, value_name = "KERNEL")]
    pub base: String,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Dynamics spec (JSON with domain, initial, dt and model)
    #[arg(long, value_name = "FILE")]
    pub dynamics: PathBuf,
    /// Number of particles
    #[arg(long, value_name = "M")]
    pub m: usize,
    /// Number of time steps
    #[arg(long, default_value_t = 100, value_name = "N")]
    pub steps: usize,
    /// Keep every K-th state (the initial state is always kept)
    #[arg(long, default_value_t = 1, value_name = "K")]
    pub every: usize,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset file to write (default: standard output)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Dataset (JSON lines) to label
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Observable spec (JSON)
    #[arg(long, value_name = "FILE")]
    pub observable: PathBuf,
    /// Labelled dataset to write (default: standard output)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModulusArgs {
    /// Kernel spec file
    #[arg(long, value_name = "FILE")]
    pub kernel: PathBuf,
    /// Sampler spec (JSON) the particles are drawn from
    #[arg(long, value_name = "FILE")]
    pub sampler: PathBuf,
    /// Number of particles per configuration
    #[arg(long, value_name = "M")]
    pub m: usize,
    /// Ground metric: euclidean, kernel:gaussian:GAMMA or kernel:imq:C
    #[arg(long, default_value = "euclidean", value_name = "METRIC")]
    pub metric: String,
    /// Number of random quadruples (at least 10)
    #[arg(long, default_value_t = 200, value_name = "N")]
    pub trials: usize,
    /// Domain box (JSON with lower and upper), used for the analytic modulus
    #[arg(long, value_name = "FILE")]
    pub domain: Option<PathBuf>,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (default: standard output)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Experiment config (JSON)
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Report file (default: standard output)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Report format
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub report: ReportArgs,
    /// Also write a gnuplot data file with columns M, median, q25, q75
    #[arg(long, value_name = "FILE")]
    pub dat: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct VersionArgs {
    /// Config file whose hash to print, as embedded in reports
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}
