//! Command-line arguments. Every argument struct is also the serialized form
//! of a run manifest, so a manifest echoed by one run can be replayed with
//! `pcv run --manifest`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use pcv_core::cv::{Method, SearchConfig};
use pcv_core::pcv::DEFAULT_MIN_GROUP;

use crate::output::SCHEMA_VERSION;

/// Prefix of every environment variable that overrides a flag.
pub const ENV_PREFIX: &str = "PCV_";

pub const DEFAULT_CN: f64 = 5.51;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum KernelTag {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Cv,
    Pcv,
    Pcvp,
    Ma,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Cv => Method::Cv,
            MethodArg::Pcv => Method::Pcv,
            MethodArg::Pcvp => Method::Pcvp,
            MethodArg::Ma => Method::Ma,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "pcv",
    version,
    about = "Bandwidth selection for kernel density estimation by partitioned cross-validation"
)]
pub struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true, env = "PCV_THREADS")]
    pub threads: Option<usize>,

    /// Write the result here instead of standard output.
    #[arg(long, global = true, env = "PCV_OUT")]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, env = "PCV_FORMAT")]
    pub format: Option<Format>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Select a bandwidth for a data file or a directory of chunks.
    Select(SelectArgs),
    /// Exact and asymptotic bandwidths of a known mixture.
    Oracle(OracleArgs),
    /// Asymptotic constants, predicted variances and variance factors.
    Asymptotics(AsymptoticsArgs),
    /// Replicated Monte Carlo over a known mixture.
    Simulate(SimulateArgs),
    /// Time CV against PCV.
    Bench(BenchArgs),
    /// Kernel density estimate on a grid.
    Density(DensityArgs),
    /// Replay a run manifest.
    #[serde(skip)]
    Run(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Select(_) => "select",
            Command::Oracle(_) => "oracle",
            Command::Asymptotics(_) => "asymptotics",
            Command::Simulate(_) => "simulate",
            Command::Bench(_) => "bench",
            Command::Density(_) => "density",
            Command::Run(_) => "run",
        }
    }

    pub fn default_format(&self) -> Format {
        match self {
            Command::Simulate(_) | Command::Bench(_) | Command::Density(_) => Format::Csv,
            _ => Format::Json,
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
    #[serde(flatten)]
    pub command: Command,
}

impl RunManifest {
    pub fn from_cli(cli: &Cli) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            threads: cli.threads,
            out: cli.out.clone(),
            format: cli.format,
            command: cli.command.clone(),
        }
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_else(|| self.command.default_format())
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RunArgs {
    #[arg(long, env = "PCV_MANIFEST")]
    pub manifest: PathBuf,
}

/// Where observations come from.
#[derive(Debug, Clone, PartialEq, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct DataArgs {
    /// Data file: one value per line, or CSV with --column.
    #[arg(long, env = "PCV_INPUT", value_delimiter = ',')]
    pub input: Vec<PathBuf>,

    /// Directory whose files are processed as chunks, in name order.
    #[arg(long, env = "PCV_CHUNKS_DIR", conflicts_with = "input")]
    pub chunks_dir: Option<PathBuf>,

    /// 1-based CSV column holding the values.
    #[arg(long, env = "PCV_COLUMN")]
    pub column: Option<usize>,

    /// Skip the first line of every input.
    #[arg(long, env = "PCV_HEADER")]
    pub header: bool,

    /// 1-based CSV column used with --label to keep matching rows only.
    #[arg(long, env = "PCV_LABEL_COLUMN", requires = "label")]
    pub label_column: Option<usize>,

    #[arg(long, env = "PCV_LABEL", requires = "label_column")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchArgs {
    /// Lower end of a fixed search bracket (default: data-driven).
    #[arg(long, env = "PCV_SEARCH_LO", requires = "search_hi")]
    pub search_lo: Option<f64>,

    #[arg(long, env = "PCV_SEARCH_HI", requires = "search_lo")]
    pub search_hi: Option<f64>,

    /// Relative tolerance of the bandwidth search.
    #[arg(long, env = "PCV_TOL", default_value_t = SearchConfig::DEFAULT_REL_TOL)]
    pub tol: f64,

    /// Times the bracket may grow when the minimum sits on its edge.
    #[arg(long, env = "PCV_MAX_EXPANSIONS", default_value_t = SearchConfig::DEFAULT_MAX_EXPANSIONS)]
    pub max_expansions: u32,

    /// Skip pairs further apart than a fixed multiple of the bandwidth.
    #[arg(long, env = "PCV_CUTOFF")]
    pub cutoff: bool,
}

impl Default for SearchArgs {
    fn default() -> Self {
        SearchArgs {
            search_lo: None,
            search_hi: None,
            tol: SearchConfig::DEFAULT_REL_TOL,
            max_expansions: SearchConfig::DEFAULT_MAX_EXPANSIONS,
            cutoff: false,
        }
    }
}

/// Prior over the constant `C` for model averaging.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorArgs {
    /// Two-column CSV "c,density"; without it the prior is a histogram of
    /// the optimal constants of random normal mixtures.
    #[arg(long, env = "PCV_PRIOR")]
    pub prior: Option<PathBuf>,

    #[arg(long, env = "PCV_PRIOR_MIXTURES", default_value_t = 2000)]
    pub prior_mixtures: usize,

    #[arg(long, env = "PCV_PRIOR_SEED", default_value_t = 0)]
    pub prior_seed: u64,

    #[arg(long, env = "PCV_PRIOR_BINS", default_value_t = 40)]
    pub prior_bins: usize,

    #[arg(long, env = "PCV_PRIOR_HI", default_value_t = 40.0)]
    pub prior_hi: f64,
}

impl Default for PriorArgs {
    fn default() -> Self {
        PriorArgs {
            prior: None,
            prior_mixtures: 2000,
            prior_seed: 0,
            prior_bins: 40,
            prior_hi: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,

    #[arg(long, value_enum, env = "PCV_METHOD", default_value = "pcv")]
    pub method: MethodArg,

    /// Number of groups; a list for model averaging; groups per chunk with
    /// --chunks-dir. Chosen from --cn when omitted.
    #[arg(long, env = "PCV_P", value_delimiter = ',')]
    pub p: Vec<usize>,

    /// Constant in p = C n^{1/6}.
    #[arg(long, env = "PCV_CN", default_value_t = DEFAULT_CN)]
    pub cn: f64,

    /// Constant in p = C n^{1/11} for permuted PCV (default: normal value).
    #[arg(long, env = "PCV_CN_PERM")]
    pub cn_perm: Option<f64>,

    /// Partitions averaged by permuted PCV.
    #[arg(long, env = "PCV_PERMUTATIONS", default_value_t = 5)]
    pub permutations: usize,

    #[arg(long, env = "PCV_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long, env = "PCV_MIN_GROUP", default_value_t = DEFAULT_MIN_GROUP)]
    pub min_group: usize,

    /// Largest group that fits in memory.
    #[arg(long, env = "PCV_MAX_GROUP")]
    pub max_group: Option<usize>,

    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,

    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorArgs,

    #[arg(long, value_enum, env = "PCV_KERNEL", default_value = "gaussian")]
    pub kernel: KernelTag,
}

impl Default for SelectArgs {
    fn default() -> Self {
        SelectArgs {
            data: DataArgs::default(),
            method: MethodArg::Pcv,
            p: Vec::new(),
            cn: DEFAULT_CN,
            cn_perm: None,
            permutations: 5,
            seed: 0,
            min_group: DEFAULT_MIN_GROUP,
            max_group: None,
            search: SearchArgs::default(),
            prior: PriorArgs::default(),
            kernel: KernelTag::Gaussian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct OracleArgs {
    /// Preset tag (MW1, MW2, MW8) or a mixture file of "weight,mean,sd" lines.
    #[arg(long, env = "PCV_MIXTURE", default_value = "MW1")]
    pub mixture: String,

    /// Sample sizes.
    #[arg(long, env = "PCV_N", value_delimiter = ',', required = true)]
    pub n: Vec<usize>,

    /// Number of groups for the predictions (default: real-valued C n^{1/6}).
    #[arg(long, env = "PCV_P")]
    pub p: Option<f64>,

    #[arg(long, value_enum, env = "PCV_KERNEL", default_value = "gaussian")]
    #[serde(default)]
    pub kernel: KernelTag,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AsymptoticsArgs {
    #[arg(long, env = "PCV_MIXTURE", default_value = "MW1")]
    pub mixture: String,

    #[arg(long, env = "PCV_N", value_delimiter = ',', required = true)]
    pub n: Vec<usize>,

    /// Group counts to predict for (default: the real-valued optimum).
    #[arg(long, env = "PCV_P", value_delimiter = ',')]
    #[serde(default)]
    pub p: Vec<f64>,

    /// Permutation counts for the permuted-PCV variance factor.
    #[arg(
        long,
        env = "PCV_PERMUTATIONS",
        value_delimiter = ',',
        default_value = "1,2,5,10"
    )]
    pub permutations: Vec<usize>,

    /// Multiples k of the optimal p for the MSE inflation ratio.
    #[arg(long, env = "PCV_K", value_delimiter = ',', default_value = "0.5,1,2")]
    pub k: Vec<f64>,

    /// Observed group sizes for the unequal-size factor.
    #[arg(long, env = "PCV_SIZES", value_delimiter = ',')]
    #[serde(default)]
    pub sizes: Vec<usize>,

    #[arg(long, value_enum, env = "PCV_KERNEL", default_value = "gaussian")]
    #[serde(default)]
    pub kernel: KernelTag,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, env = "PCV_MIXTURE", default_value = "MW1")]
    pub mixture: String,

    #[arg(long, env = "PCV_N")]
    pub n: usize,

    #[arg(long, env = "PCV_REPLICATES", default_value_t = 300)]
    pub replicates: usize,

    #[arg(
        long,
        value_enum,
        env = "PCV_METHODS",
        value_delimiter = ',',
        default_value = "cv"
    )]
    pub methods: Vec<MethodArg>,

    #[arg(long, env = "PCV_P", value_delimiter = ',')]
    #[serde(default)]
    pub p: Vec<usize>,

    /// Permutation counts reported for PCVP.
    #[arg(
        long,
        env = "PCV_PERMUTATIONS",
        value_delimiter = ',',
        default_value = "2,5"
    )]
    pub permutations: Vec<usize>,

    #[arg(long, env = "PCV_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long, env = "PCV_TOL", default_value_t = 1e-3)]
    pub tol: f64,

    #[arg(long, env = "PCV_MAX_EXPANSIONS", default_value_t = SearchConfig::DEFAULT_MAX_EXPANSIONS)]
    pub max_expansions: u32,

    #[arg(long, env = "PCV_MIN_GROUP", default_value_t = DEFAULT_MIN_GROUP)]
    pub min_group: usize,

    #[arg(long, env = "PCV_CUTOFF")]
    #[serde(default)]
    pub cutoff: bool,

    /// Also write every replicate's bandwidths to this CSV file.
    #[arg(long, env = "PCV_DRAWS_OUT")]
    #[serde(default)]
    pub draws_out: Option<PathBuf>,

    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[arg(long, env = "PCV_MIXTURE", default_value = "MW1")]
    pub mixture: String,

    #[arg(
        long,
        env = "PCV_SIZES",
        value_delimiter = ',',
        default_value = "1000,2500,5000"
    )]
    pub sizes: Vec<usize>,

    /// Datasets timed per size.
    #[arg(long, env = "PCV_DATASETS", default_value_t = 10)]
    pub datasets: usize,

    #[arg(long, env = "PCV_CN", default_value_t = DEFAULT_CN)]
    pub cn: f64,

    #[arg(long, env = "PCV_MIN_GROUP", default_value_t = DEFAULT_MIN_GROUP)]
    pub min_group: usize,

    #[arg(long, env = "PCV_MAX_GROUP")]
    #[serde(default)]
    pub max_group: Option<usize>,

    #[arg(long, env = "PCV_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long, env = "PCV_TOL", default_value_t = SearchConfig::DEFAULT_REL_TOL)]
    pub tol: f64,

    /// Also time PCV with groups spread over this many threads.
    #[arg(long, env = "PCV_PARALLEL_THREADS")]
    #[serde(default)]
    pub parallel_threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DensityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub select: SelectArgs,

    /// Bandwidth; selected with --method when omitted.
    #[arg(long, env = "PCV_H")]
    #[serde(default)]
    pub h: Option<f64>,

    /// "min,max,points"; default is the data range widened by 6h on 512 points.
    #[arg(long, env = "PCV_GRID", allow_hyphen_values = true)]
    #[serde(default)]
    pub grid: Option<String>,
}
