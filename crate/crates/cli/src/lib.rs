//! Command-line front end for `csib-core`: estimators on CSV files,
//! training with checkpoints, β sweeps, attacks, verification suites and
//! the particle demos.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod checkpoint;
pub mod commands;
pub mod error;
pub mod io;

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "csib", version, about = "Cauchy-Schwarz divergence estimators and CS-IB training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one estimator on CSV samples and print JSON.
    Estimate(EstimateArgs),
    /// Write the synthetic regression dataset as CSV.
    Generate(GenerateArgs),
    /// Train one model, checkpointing after every epoch.
    Train(TrainArgs),
    /// Train one model per β and write the information-plane points.
    Sweep(SweepArgs),
    /// Attack a checkpointed model and report clean and attacked RMSE.
    Attack(AttackArgs),
    /// Run randomized verification suites.
    Verify(VerifyArgs),
    /// Run the particle-cloud demos.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Measure {
    /// CS divergence between the rows of two files.
    Cs,
    /// Squared MMD between the rows of two files.
    Mmd,
    /// Biased HSIC between paired rows of x and t.
    Hsic,
    /// CS-QMI between paired rows of x and t.
    Csqmi,
    /// CS-QMI divided by the geometric mean of the self terms.
    NormalizedCsqmi,
    /// Conditional CS between p(y|x) and p(ŷ|x).
    ConditionalCs,
    /// Conditional MMD between p(y|x) and p(ŷ|x).
    ConditionalMmd,
    /// KDE upper bound on I(x;t) for Gaussian noise around the centers.
    NibBound,
}

impl Measure {
    pub fn inputs(self) -> usize {
        match self {
            Self::NibBound => 1,
            Self::Cs | Self::Mmd | Self::Hsic | Self::Csqmi | Self::NormalizedCsqmi => 2,
            Self::ConditionalCs | Self::ConditionalMmd => 3,
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long, value_enum)]
    pub measure: Measure,
    /// CSV files with a header row: `a b` for cs and mmd, `x t` for the
    /// dependence measures, `x y ŷ` for the conditional ones, `t` for
    /// nib-bound.
    #[arg(required = true, num_args = 1..=3)]
    pub files: Vec<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_x: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_y: f64,
    /// Width for t; for nib-bound, the noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub sigma_t: f64,
    /// Ridge for conditional-mmd.
    #[arg(long, default_value_t = 1e-3)]
    pub ridge: f64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 30)]
    pub d: usize,
    #[arg(long, env = "CSIB_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizationArg {
    Minmax,
    None,
}

/// Flags that override the config file's `train` section.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "batch")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub sigma_x: Option<f64>,
    #[arg(long)]
    pub sigma_y: Option<f64>,
    #[arg(long)]
    pub sigma_t: Option<f64>,
    #[arg(long, env = "CSIB_SEED")]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub normalization: Option<NormalizationArg>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Target column; defaults to the last one.
    #[arg(long)]
    pub target: Option<String>,
    /// JSON run file with optional `train`, `model`, `split`, `target` and
    /// `betas` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub split: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    /// Output directory for checkpoint.json, log.jsonl, log.csv and
    /// summary.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from `OUT/checkpoint.json` with its settings; only
    /// `--epochs` may extend the run.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    /// Points trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackArg {
    Fgsm,
    Pgd,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV in original units; the checkpoint's scaling is applied.
    #[arg(long)]
    pub data: PathBuf,
    /// Target column; defaults to the checkpoint's.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long = "attack", value_enum, default_value_t = AttackArg::Pgd)]
    pub kind: AttackArg,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.3)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5)]
    pub steps: usize,
    /// Clip attacked inputs to [0, 1].
    #[arg(long)]
    pub clip_attack: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Theorem1,
    Corollary1,
    Prop5,
    Discrete,
    Quadrature,
    Consistency,
    Conditional,
    Ranking,
    Cloud,
    Modes,
    Gradcheck,
    Forms,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_value = "all")]
    pub suite: Vec<Suite>,
    /// Overrides each suite's trial count (seeds, steps or models where
    /// that is the unit).
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, env = "CSIB_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Also write the result lines to this JSONL file.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DemoKind {
    Cloud,
    Modes,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, value_enum)]
    pub kind: DemoKind,
    #[arg(long, default_value_t = csib_core::oracle::demos::DEFAULT_CLOUD_STEPS)]
    pub steps: usize,
    #[arg(long, env = "CSIB_SEED", default_value_t = 0)]
    pub seed: u64,
    /// For cloud, the trajectory CSV (stdout when absent); for modes, a
    /// copy of the summary JSON.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parses the process arguments, runs the command and maps failures to
/// exit codes.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("csib: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
