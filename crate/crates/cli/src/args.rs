use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Clone, Parser)]
#[command(
    name = "ordid",
    version,
    about = "Difference-in-differences for ordinal outcomes"
)]
pub struct Cli {
    /// Worker threads for bootstrap and Monte Carlo loops (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Estimate distributional effects on the treated.
    Fit(FitArgs),
    /// Equivalence test of parallel trends on two pre-treatment periods.
    Equivtest(EquivArgs),
    /// Bounds on the share of treated units that benefit.
    Bounds(BoundsArgs),
    /// Monte Carlo study from a TOML config.
    Simulate(SimulateArgs),
}

/// Input file, column mapping and output shared by the data commands.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "unit")]
    pub unit: String,
    #[arg(long, default_value = "outcome")]
    pub outcome: String,
    #[arg(long, default_value = "period")]
    pub time: String,
    #[arg(long, default_value = "treated")]
    pub treat: String,
    /// Cluster column; required whenever `--boot` is positive.
    #[arg(long)]
    pub cluster: Option<String>,
    /// Keep only rows with `column=value`; repeatable.
    #[arg(long = "filter", value_name = "COL=VAL")]
    pub filters: Vec<String>,
    /// The two anchored cutoffs.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,1",
        allow_negative_numbers = true
    )]
    pub cut: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Result document path; CSVs are written next to it. Stdout if absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Pre-treatment period label (default: first period in the file).
    #[arg(long, allow_negative_numbers = true)]
    pub pre: Option<i64>,
    /// Post-treatment period label (default: second period in the file).
    #[arg(long, allow_negative_numbers = true)]
    pub post: Option<i64>,
    /// Bootstrap replicates; 0 disables intervals.
    #[arg(long, default_value_t = 2000)]
    pub boot: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.10")]
    pub alpha: Vec<f64>,
    /// Also fit the covariate-adjusted model with these columns.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct EquivArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// The two pre-treatment period labels, `a,b`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub pre: Vec<i64>,
    /// Bootstrap replicates for the covariance; 0 uses the information matrix.
    #[arg(long, default_value_t = 2000)]
    pub boot: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Equivalence threshold, or `auto` for the sample-size default.
    #[arg(long, default_value = "auto")]
    pub delta: String,
    /// `start:stop:step` over (0, 1).
    #[arg(long, default_value = "0.001:0.999:0.01")]
    pub grid: String,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub pre: Option<i64>,
    #[arg(long, allow_negative_numbers = true)]
    pub post: Option<i64>,
    #[arg(long, default_value_t = 2000)]
    pub boot: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.10")]
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Study description (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the master seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the repetition count in the config.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}
