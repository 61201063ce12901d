mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use balclust::ErrorClass;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Balanced, fault-tolerant clustering and data-dependent dispatch.
#[derive(Debug, Parser)]
#[command(name = "balclust", version, about)]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format; `gen` and `dispatch route` default to csv, everything else to json.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,
    /// Caps every thread pool.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic instance.
    Gen(GenArgs),
    /// Cluster an instance under balance constraints.
    Cluster(ClusterArgs),
    /// Exact optimum by enumerating center sets.
    Oracle(OracleArgs),
    /// Fit or apply a dispatcher.
    #[command(subcommand)]
    Dispatch(DispatchCommand),
    /// Run a simulated distributed-learning experiment.
    Simulate(SimulateArgs),
    /// Check that a CSV instance is a metric.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(subcommand)]
    pub kind: GenKind,
}

#[derive(Debug, Subcommand, serde::Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GenKind {
    /// Star graph: one hub and 10·nl leaves.
    Star {
        #[arg(long)]
        nl: usize,
    },
    /// k′ groups of 2·nl − 1 coincident points.
    Groups {
        #[arg(long)]
        k_prime: usize,
        #[arg(long)]
        nl: usize,
        /// Replace zero distances within a group by a tiny positive value.
        #[arg(long)]
        perturb: bool,
    },
    /// Labeled Gaussian mixture.
    Gmm {
        #[arg(long, default_value_t = 20)]
        components: usize,
        #[arg(long, default_value_t = 5)]
        dims: usize,
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        labels: usize,
    },
    /// Uniform rectangle labeled by a 4×4 grid on the first two coordinates.
    Grid {
        #[arg(long, default_value_t = 20_000)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        dims: usize,
    },
    /// Two Gaussians at (0,0) and (10,0) with mixing weight 0.08 on the far one.
    Twogauss {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    LpRound,
    Kmeanspp,
    KcenterExact,
    Bbg,
    KcenterStable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveArg {
    KMedian,
    KMeans,
    KCenter,
}

impl From<ObjectiveArg> for balclust::Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::KMedian => balclust::Objective::KMedian,
            ObjectiveArg::KMeans => balclust::Objective::KMeans,
            ObjectiveArg::KCenter => balclust::Objective::KCenter,
        }
    }
}

/// Constraint flags; values missing here are taken from `--config`.
#[derive(Debug, Clone, Args, Default)]
pub struct ConstraintArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub ell: Option<f64>,
    #[arg(long)]
    pub cap_l: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Points CSV or distance-matrix CSV.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub algo: Option<Algo>,
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    #[command(flatten)]
    pub constraints: ConstraintArgs,
    /// Carving threshold for `bbg`; swept over all distances when absent.
    #[arg(long)]
    pub tau: Option<f64>,
    /// JSON file with defaults for any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    #[command(flatten)]
    pub constraints: ConstraintArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DispatchCommand {
    /// Fit a dispatcher and write it as a BDSP1 binary file to `--out`.
    Fit(FitArgs),
    /// Route points with a fitted dispatcher.
    Route(RouteArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitAlgoArg {
    Kmeanspp,
    LpRound,
    Random,
    Bpt,
    Lsh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendArg {
    Auto,
    Exact,
    RpTree,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training points CSV.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub sample_size: usize,
    /// Second sample for weight estimation, drawn from the points outside the
    /// subsample; all of them when absent.
    #[arg(long)]
    pub second_sample_size: Option<usize>,
    #[arg(long, value_enum, default_value = "kmeanspp")]
    pub algo: FitAlgoArg,
    #[arg(long, value_enum, default_value = "k-means")]
    pub objective: ObjectiveArg,
    #[command(flatten)]
    pub constraints: ConstraintArgs,
    #[arg(long, value_enum, default_value = "auto")]
    pub backend: BackendArg,
    #[arg(long, default_value_t = balclust::dispatch::DEFAULT_LEAF_SIZE)]
    pub leaf_size: usize,
    /// Fit summary JSON; stdout when absent.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    /// BDSP1 dispatcher file.
    #[arg(long)]
    pub dispatcher: PathBuf,
    /// Points CSV to route.
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment config JSON; defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Writes `k,accuracy,...` rows for external plotting.
    #[arg(long)]
    pub emit_plot_data: Option<PathBuf>,
    /// Values of k for the plot series; the config's k when absent.
    #[arg(long, value_delimiter = ',')]
    pub ks: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err
        .downcast_ref::<balclust::Error>()
        .map(balclust::Error::class)
    {
        Some(ErrorClass::Infeasible) => 2,
        Some(ErrorClass::Internal) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .init();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
