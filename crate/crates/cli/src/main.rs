//! `mixgraph` command line: analyze, transform, train, ablate, make-splits,
//! gen-synthetic.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mixgraph::compgraph::{BuildMode, RelationSet};
use mixgraph::mixing::Weighting;
use mixgraph::wrgnn::Variant;

#[derive(Debug, Parser)]
#[command(
    name = "mixgraph",
    version,
    about = "Local assortativity, computation graphs and WRGNN training"
)]
pub struct Cli {
    /// Master seed; splits, initialization and dropout use named sub-streams.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Local assortativity profile, smoothness and global summary.
    Analyze(AnalyzeArgs),
    /// Build and serialize the computation graph.
    Transform(TransformArgs),
    /// Train and evaluate one model configuration.
    Train(TrainArgs),
    /// Run the {wrgcn, wrgat} x {proximity, structure, all} grid.
    Ablate(AblateArgs),
    /// Stratified random train/validation/test splits.
    MakeSplits(SplitArgs),
    /// Write a synthetic labeled graph.
    GenSynthetic(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingKind {
    Totalrank,
    Ppr,
    Stationary,
}

#[derive(Debug, Args, Serialize)]
pub struct WeightingArgs {
    #[arg(long, value_enum, default_value = "totalrank")]
    pub weighting: WeightingKind,
    /// Restart complement for `--weighting ppr`.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Truncation tolerance for `--weighting totalrank`.
    #[arg(long, default_value_t = mixgraph::mixing::DEFAULT_TOTALRANK_TOL)]
    pub tol: f64,
}

impl WeightingArgs {
    pub fn weighting(&self) -> Weighting {
        match self.weighting {
            WeightingKind::Totalrank => Weighting::TotalRank { tol: self.tol },
            WeightingKind::Ppr => Weighting::Ppr { alpha: self.alpha },
            WeightingKind::Stationary => Weighting::Stationary,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub edges: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Enables the feature-smoothness column.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[command(flatten)]
    pub weighting: WeightingArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct TransformArgs {
    #[arg(long)]
    pub edges: PathBuf,
    /// Required by `--shift-report`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Highest structural relation.
    #[arg(long = "T", default_value_t = 2)]
    pub max_tau: usize,
    #[arg(long, default_value = "practical")]
    pub mode: BuildMode,
    /// Candidates per side in practical mode (default ceil(log2 n)).
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub weight_floor: f64,
    /// Recompute r_local on the computation graph for nodes with r_local < 0.
    #[arg(long)]
    pub shift_report: bool,
    /// Write f_tau for every structural edge.
    #[arg(long)]
    pub dump_distances: bool,
    #[command(flatten)]
    pub weighting: WeightingArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 0.005)]
    pub lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    /// One attention vector shared by all relations.
    #[arg(long)]
    pub shared_attention: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Computation graph written by `transform`.
    #[arg(long)]
    pub comp: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Node features; one-hot degree buckets when omitted.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// A split object or an array of them, as written by `make-splits`.
    #[arg(long)]
    pub splits: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub split_index: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "wrgat")]
    pub variant: Variant,
    #[arg(long, default_value = "all")]
    pub relations: RelationSet,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Also write the trained parameters as JSON.
    #[arg(long)]
    pub save_model: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Bins over [-1, 1] for the accuracy-vs-r_local curves.
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub labels: PathBuf,
    /// Node count when the label file does not mention the last node.
    #[arg(long)]
    pub num_nodes: Option<usize>,
    #[arg(long, default_value_t = 0.6)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0.2)]
    pub val_frac: f64,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Planted,
    Twins,
    Barbell,
    DegreeLabel,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum, conflicts_with = "spec")]
    pub preset: Option<Preset>,
    /// Generator JSON (file path or inline), e.g. `{"generator":"barbell-family","clique_size":5,"path_len":2}`.
    #[arg(long)]
    pub spec: Option<String>,
}

/// Usage problems detected after argument parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<mixgraph::Error>() {
        Some(e) if e.is_numerical() => 3,
        Some(e) if e.is_data_error() => 2,
        Some(mixgraph::Error::InvalidArgument(_)) => 1,
        _ => 2,
    }
}

fn configure_threads(threads: Option<usize>) -> anyhow::Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(UsageError("--threads must be positive".into()).into());
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = configure_threads(cli.threads).and_then(|()| commands::dispatch(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
