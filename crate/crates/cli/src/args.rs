use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "dropreg", version, about = "Dropout regularizer experiments for logistic regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Directory for output files.
    #[arg(long, global = true, default_value = "./out")]
    #[serde(skip)]
    pub out: PathBuf,

    /// Master seed for data generation and sampling.
    #[arg(long, global = true, default_value_t = dropreg::DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Log-partition derivatives from the closed form, checked against the
    /// polynomial recurrence.
    Derivatives(DerivativesArgs),
    /// Taylor-series diagnostics over a (z, delta) grid and root-test radius
    /// estimates.
    Radius(RadiusArgs),
    /// Train one regime and write its per-epoch trace.
    Train(TrainArgs),
    /// Train several regimes on the same data and compare the weights.
    Compare(CompareArgs),
    /// Weight-capped versus unconstrained training on features scaled by the
    /// 2 pi / d rule.
    Bounded(BoundedArgs),
    /// Re-run a manifest and verify its outputs byte for byte.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Derivatives(_) => "derivatives",
            Command::Radius(_) => "radius",
            Command::Train(_) => "train",
            Command::Compare(_) => "compare",
            Command::Bounded(_) => "bounded",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct DerivativesArgs {
    /// Derivative orders (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
    pub k: Vec<usize>,

    /// Evaluation points (comma separated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    pub z: Vec<f64>,

    /// Exit with status 1 if any value differs from the recurrence by more
    /// than 1e-6 relative.
    #[arg(long)]
    pub check_oracle: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalarLaw {
    ScalarCoupling,
    ScalarDropAll,
}

#[derive(Debug, Args, Serialize)]
pub struct RadiusArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,1,3,10")]
    pub z_grid: Vec<f64>,

    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.5")]
    pub delta_grid: Vec<f64>,

    /// Highest Taylor order; the radius check also runs at twice this.
    #[arg(long, default_value_t = 80)]
    pub max_order: usize,

    #[arg(long, value_enum, default_value_t = ScalarLaw::ScalarCoupling)]
    pub model: ScalarLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyArg {
    None,
    L2,
    R2,
    Rk,
    Exact,
    McDropout,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    ScalarCoupling,
    ScalarDropAll,
    IndependentCoordinates,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    Logistic,
    Linear,
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// CSV file with header x1,...,xd,y.
    #[arg(long, conflicts_with = "synthetic")]
    pub dataset: Option<PathBuf>,

    /// Synthetic data with D features and N examples.
    #[arg(long, num_args = 2, value_names = ["D", "N"])]
    pub synthetic: Option<Vec<usize>>,

    /// Make synthetic data separable with this normalized margin.
    #[arg(long)]
    pub separable: Option<f64>,

    /// Classes for synthetic data (2 is binary).
    #[arg(long, default_value_t = 2)]
    pub classes: usize,

    /// Multiply every feature by this factor.
    #[arg(long, default_value_t = 1.0)]
    pub feature_scale: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct RegimeArgs {
    /// Drop probability.
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,

    #[arg(long, value_enum, default_value_t = ModelArg::IndependentCoordinates)]
    pub model: ModelArg,

    #[arg(long, value_enum, default_value_t = FamilyArg::Logistic)]
    pub family: FamilyArg,

    /// L2 strength.
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,

    /// Order of the R_k penalty.
    #[arg(long, default_value_t = 4)]
    pub k: usize,

    /// Masks per example and epoch for Monte Carlo dropout.
    #[arg(long, default_value_t = 8)]
    pub samples: usize,

    #[arg(long, default_value_t = 500)]
    pub epochs: usize,

    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,

    /// Sum instead of average over examples.
    #[arg(long)]
    pub no_normalize: bool,

    /// One dropout mask per example for softmax data instead of one per class.
    #[arg(long)]
    pub shared_masks: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value_t = PenaltyArg::None)]
    pub penalty: PenaltyArg,

    /// Hard bound on every weight's magnitude.
    #[arg(long)]
    pub cap: Option<f64>,

    #[command(flatten)]
    pub regime: RegimeArgs,

    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "none,l2,r2,rk,exact,mc-dropout"
    )]
    pub regimes: Vec<PenaltyArg>,

    #[arg(long)]
    pub cap: Option<f64>,

    #[command(flatten)]
    pub regime: RegimeArgs,

    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BoundedArgs {
    /// Weight cap; features are rescaled so that |x.beta| <= 2 pi under it.
    #[arg(long, default_value_t = 1.0)]
    pub cap: f64,

    #[arg(long, value_enum, default_value_t = PenaltyArg::None)]
    pub penalty: PenaltyArg,

    #[command(flatten)]
    pub regime: RegimeArgs,

    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
}
