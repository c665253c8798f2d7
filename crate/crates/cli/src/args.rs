//! Command-line interface definition.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use timely_core::eval::Method;
use timely_core::pseudotime::{EmbedMethod, TrajectoryKind};

#[derive(Debug, Parser)]
#[command(name = "timely", version, about = "Find inconsistent cell labels along a developmental trajectory")]
pub struct Cli {
    /// Seed for every random choice (simulation, k-means starts, folds).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Log filter, e.g. `warn`, `info`, `debug` or `timely_core=debug`.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled chain of cells with known label noise.
    Simulate(SimulateArgs),
    /// Embed cells, fit a trajectory and order the cells by pseudotime.
    Order(OrderArgs),
    /// Fit the label model on ordered cells and flag inconsistent labels.
    Infer(InferArgs),
    /// Run an order-agnostic label-noise filter.
    Baseline(BaselineArgs),
    /// Compare all methods on simulated data over several noise levels and seeds.
    Bench(BenchArgs),
    /// Order and infer in one go.
    Pipeline(PipelineArgs),
    /// Serve a report to the review tool and record the reviewer's decisions.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 250)]
    pub n: usize,
    /// Number of states (consecutive blocks of n/k cells).
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Feature dimension.
    #[arg(long, default_value_t = 50)]
    pub d: usize,
    /// Percentage of labels replaced by a different label.
    #[arg(long, default_value_t = 0)]
    pub noise: u32,
    /// Spread of the latent coordinate orthogonal to the ordering.
    #[arg(long, default_value_t = timely_core::simulate::DEFAULT_MINOR_SD)]
    pub minor_sd: f64,
    /// Cells CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth CSV (`id,true_label,flipped`).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Chain topology `S1 -> .. -> Sk` as JSON.
    #[arg(long)]
    pub topology_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TopologyArg {
    /// Lineage topology JSON; defaults to the five-stage granulopoiesis chain.
    #[arg(long)]
    pub topology: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OrderingArgs {
    /// Trajectory shape.
    #[arg(long, default_value = "curve")]
    pub method: TrajectoryKind,
    /// Embedding method: `mds` or `diffusion`.
    #[arg(long, default_value = "mds")]
    pub embed: EmbedMethod,
    /// Embedding dimension.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Number of k-means centres (default: number of states).
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Diffusion-map kernel width (default: median pairwise distance).
    #[arg(long)]
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Emission matrix JSON (rows: true state, columns: expert label).
    #[arg(long)]
    pub emission: Option<PathBuf>,
    /// Diagonal of the uniform emission matrix used when no file is given.
    #[arg(long, default_value_t = 0.8)]
    pub accuracy: f64,
    /// Start probabilities JSON.
    #[arg(long)]
    pub pi: Option<PathBuf>,
    /// Start mass on the root state when no file is given.
    #[arg(long, default_value_t = timely_core::params::DEFAULT_PI_ROOT_MASS)]
    pub pi_root_mass: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Stop once the log-likelihood improves by less than this.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Also re-estimate the emission matrix.
    #[arg(long)]
    pub reestimate_emission: bool,
}

#[derive(Debug, Args)]
pub struct OrderArgs {
    /// Cells CSV (`id,label,f0..f{d-1}[,image_ref]`).
    #[arg(long)]
    pub cells: PathBuf,
    #[command(flatten)]
    pub topology: TopologyArg,
    #[command(flatten)]
    pub ordering: OrderingArgs,
    /// Ordered dataset JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Ordered dataset JSON from `order`.
    #[arg(long)]
    pub ordered: PathBuf,
    #[command(flatten)]
    pub topology: TopologyArg,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Report JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub cells: PathBuf,
    #[command(flatten)]
    pub topology: TopologyArg,
    #[command(flatten)]
    pub ordering: OrderingArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Report JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the ordered dataset.
    #[arg(long)]
    pub ordered_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// One of knn, knn-edit, kncn, kncn-edit, confident.
    #[arg(long)]
    pub method: Method,
    #[arg(long)]
    pub cells: PathBuf,
    #[command(flatten)]
    pub topology: TopologyArg,
    /// Neighbourhood size.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Votes needed to relabel in the editing variants.
    #[arg(long, default_value_t = 2)]
    pub k_prime: usize,
    /// Cross-validation folds for confident learning.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Result JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Noise levels in percent.
    #[arg(long, value_delimiter = ',', default_value = "10,20,30")]
    pub noise: Vec<u32>,
    /// Number of seeds per noise level, starting at `--seed`.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// Methods to run (default: all).
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 250)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 50)]
    pub d: usize,
    /// Metrics CSV to write (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full JSON report including every run.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Report JSON from `infer` or `pipeline`.
    #[arg(long)]
    pub report: PathBuf,
    /// Cells CSV, for image references and features in the detail view.
    #[arg(long)]
    pub cells: Option<PathBuf>,
    #[command(flatten)]
    pub topology: TopologyArg,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Port to listen on; 0 picks a free one.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory holding session logs.
    #[arg(long, env = "TIMELY_SESSION_DIR", default_value = "sessions")]
    pub session_dir: PathBuf,
    /// Session name (default: the report file stem).
    #[arg(long)]
    pub session: Option<String>,
    /// Directory of the built review UI to serve at `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}
