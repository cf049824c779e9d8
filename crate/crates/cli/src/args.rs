//! Flag definitions and the small parsers behind them.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use memplan_core::{StrategySpec, DEFAULT_BATCH_CAP};

/// Analytical peak-memory estimates and distributed-training plans for
/// fine-tuning transformer decoders.
#[derive(Debug, Parser)]
#[command(name = "memplan", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the peak memory of one strategy at a fixed batch size.
    Estimate(EstimateArgs),
    /// Search the max batch size per strategy, score them, and pick one.
    Plan(PlanArgs),
    /// Run the planner over a seq-len x GPU-count grid; emits CSV.
    Sweep(SweepArgs),
}

/// Flags shared by every subcommand: the model and the memory geometry.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model manifest (JSON).
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,

    /// Per-GPU memory: plain bytes, or a value with an `MB` suffix
    /// (1 MB = 2^20 bytes, e.g. `16384MB`).
    #[arg(long, value_name = "BYTES|MB", value_parser = parse_byte_size)]
    pub gpu_mem: u64,

    /// Chunk size in parameter elements; chosen automatically when omitted.
    #[arg(long, value_name = "ELEMENTS")]
    pub chunk_size: Option<u64>,

    /// Baseline memory consumed before any training tensor (CUDA context,
    /// allocator reserve). Bytes or `MB` suffix. Defaults to a documented
    /// placeholder; pass a measured value to calibrate.
    #[arg(long, value_name = "BYTES|MB", value_parser = parse_byte_size)]
    pub m_base: Option<u64>,

    /// Allocation page size (bytes or `MB` suffix). Falls back to the
    /// MEMPLAN_PAGE_SIZE environment variable, then to the built-in 2 MB.
    #[arg(long, value_name = "BYTES|MB", value_parser = parse_byte_size)]
    pub page_size: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Number of identical GPUs.
    #[arg(long, default_value_t = 1)]
    pub gpus: u64,

    /// Sequence length of every sample.
    #[arg(long, default_value_t = 512)]
    pub seq_len: u64,

    /// Per-GPU batch size to estimate at.
    #[arg(long)]
    pub batch_size: u64,

    /// Distributed layout: cdp, adp, tp, or hybrid:DPxTP (e.g. hybrid:2x4).
    #[arg(long, default_value = "cdp", value_parser = parse_strategy)]
    pub strategy: StrategyArg,

    /// Output format.
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Number of identical GPUs.
    #[arg(long, default_value_t = 1)]
    pub gpus: u64,

    /// Sequence length of every sample.
    #[arg(long, default_value_t = 512)]
    pub seq_len: u64,

    /// Upper bound for the batch-size search; exceeding it is an error.
    #[arg(long, default_value_t = DEFAULT_BATCH_CAP)]
    pub batch_cap: u64,

    /// Which hybrid layouts to evaluate.
    #[arg(long, value_enum, default_value = "all")]
    pub hybrid: HybridArg,

    /// Output format.
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Comma-separated sequence lengths to sweep.
    #[arg(long, value_delimiter = ',', default_value = "512")]
    pub seq_lens: Vec<u64>,

    /// Comma-separated GPU counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub gpu_counts: Vec<u64>,

    /// Upper bound for the batch-size search in every cell.
    #[arg(long, default_value_t = DEFAULT_BATCH_CAP)]
    pub batch_cap: u64,

    /// Which hybrid layouts to evaluate.
    #[arg(long, value_enum, default_value = "all")]
    pub hybrid: HybridArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HybridArg {
    /// Every dp x tp factorization of the GPU count with both sides >= 2.
    All,
    /// Only the most balanced factorization.
    Single,
}

/// A strategy flag value; resolved against the GPU count at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyArg {
    Cdp,
    Adp,
    Tp,
    Hybrid { dp: u64, tp: u64 },
}

impl StrategyArg {
    /// The concrete layout this flag means on `gpu_count` GPUs.
    pub fn spec(self, gpu_count: u64) -> StrategySpec {
        match self {
            StrategyArg::Cdp => StrategySpec::cdp(gpu_count),
            StrategyArg::Adp => StrategySpec::adp(gpu_count),
            StrategyArg::Tp => StrategySpec::tp(gpu_count),
            StrategyArg::Hybrid { dp, tp } => StrategySpec::hybrid(dp, tp),
        }
    }
}

/// Parses `cdp`, `adp`, `tp`, or `hybrid:DPxTP`.
pub fn parse_strategy(s: &str) -> Result<StrategyArg, String> {
    match s {
        "cdp" => Ok(StrategyArg::Cdp),
        "adp" => Ok(StrategyArg::Adp),
        "tp" => Ok(StrategyArg::Tp),
        _ => {
            let layout = s.strip_prefix("hybrid:").ok_or_else(|| {
                format!("unknown strategy `{s}`; expected cdp, adp, tp, or hybrid:DPxTP")
            })?;
            let (dp, tp) = layout
                .split_once('x')
                .ok_or_else(|| format!("hybrid layout `{layout}` must be DPxTP, e.g. 2x4"))?;
            let dp: u64 = dp
                .parse()
                .map_err(|_| format!("invalid data-parallel count `{dp}`"))?;
            let tp: u64 = tp
                .parse()
                .map_err(|_| format!("invalid tensor-parallel count `{tp}`"))?;
            Ok(StrategyArg::Hybrid { dp, tp })
        }
    }
}

/// Parses a byte count: a plain integer, or an integer with an `MB` suffix
/// meaning 2^20 bytes.
pub fn parse_byte_size(s: &str) -> Result<u64, String> {
    let trimmed = s.trim();
    let (digits, multiplier) = match trimmed
        .strip_suffix("MB")
        .or_else(|| trimmed.strip_suffix("mb"))
    {
        Some(prefix) => (prefix.trim_end(), 1u64 << 20),
        None => (trimmed, 1),
    };
    let value: u64 = digits
        .parse()
        .map_err(|_| format!("`{s}` is not a byte count (plain bytes or an MB suffix)"))?;
    value
        .checked_mul(multiplier)
        .ok_or_else(|| format!("`{s}` overflows a 64-bit byte count"))
}
