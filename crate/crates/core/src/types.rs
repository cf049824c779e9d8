//! Domain types: model profiles, hardware, run settings, and strategy layouts.
//!
//! All memory quantities are exact byte counts held in `u64`; parameter
//! counts are element counts. Conversion to display units happens only at
//! the output layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default CUDA allocation page: 2 MiB.
pub const DEFAULT_PAGE_BYTES: u64 = 2 * 1024 * 1024;

/// Default baseline memory charged before any tensor is allocated (CUDA
/// context, allocator reserve, framework buffers). This is a placeholder
/// calibration value; measure and override it for real hardware.
pub const DEFAULT_BASE_BYTES: u64 = 1 << 30;

/// Default upper bound for the batch-size search.
pub const DEFAULT_BATCH_CAP: u64 = 65_536;

/// Bytes per element for the numeric formats in play.
///
/// Mixed-precision training keeps working tensors in the half format and
/// optimizer master copies in the full format. `lm_head_bytes` is the element
/// size used for the output-head logits, which some setups promote to full
/// precision; it defaults to `half_bytes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecisionSpec {
    pub half_bytes: u64,
    pub full_bytes: u64,
    pub lm_head_bytes: u64,
}

impl Default for PrecisionSpec {
    fn default() -> Self {
        PrecisionSpec {
            half_bytes: 2,
            full_bytes: 4,
            lm_head_bytes: 2,
        }
    }
}

impl PrecisionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.half_bytes == 0 {
            return Err(Error::invalid("half_bytes", "must be at least 1"));
        }
        if self.full_bytes < self.half_bytes {
            return Err(Error::invalid(
                "full_bytes",
                format!(
                    "must be at least half_bytes ({} < {})",
                    self.full_bytes, self.half_bytes
                ),
            ));
        }
        if self.lm_head_bytes != self.half_bytes && self.lm_head_bytes != self.full_bytes {
            return Err(Error::invalid(
                "lm_head_bytes",
                format!(
                    "must equal half_bytes ({}) or full_bytes ({})",
                    self.half_bytes, self.full_bytes
                ),
            ));
        }
        Ok(())
    }
}

/// What a parameter tensor is, as far as memory accounting cares.
///
/// Only `Embedding` and `Linear` operators hold optimizer state and take part
/// in the chunked parameter layout; `Bias`, `LayerNorm`, and `Other` records
/// are carried for transparency but their few parameters live in the
/// fragmentation slack the baseline already covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Embedding,
    Linear,
    Bias,
    #[serde(rename = "layernorm")]
    LayerNorm,
    Other,
}

impl OperatorKind {
    /// True for the kinds that carry optimizer state and chunked storage.
    pub fn is_accounted(self) -> bool {
        matches!(self, OperatorKind::Embedding | OperatorKind::Linear)
    }
}

/// One named parameter tensor of the transformer part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorRecord {
    pub name: String,
    pub kind: OperatorKind,
    pub param_count: u64,
}

impl OperatorRecord {
    pub fn new(name: impl Into<String>, kind: OperatorKind, param_count: u64) -> Self {
        OperatorRecord {
            name: name.into(),
            kind,
            param_count,
        }
    }
}

/// Everything the estimator needs to know about one model.
///
/// `embed_params` counts embedding elements and `other_params` counts the
/// remaining chunked (linear) elements of the transformer part; the output
/// head is tracked separately as raw bytes in `lm_head_param_bytes` because it
/// is never chunked or sharded. The scalar fields (`dict_size`, `hidden_size`,
/// `layer_count`, `embedding_count`) drive the activation terms and are not
/// required to be derivable from the operator list — a degenerate profile may
/// have no operators at all.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    pub operators: Vec<OperatorRecord>,
    /// Output dictionary size (vocabulary entries in the logits).
    pub dict_size: u64,
    /// Hidden width: the per-token output features of every block.
    pub hidden_size: u64,
    /// Transformer layer count.
    pub layer_count: u64,
    /// Number of embedding operators feeding the first layer.
    pub embedding_count: u64,
    /// Embedding parameter elements (managed outside the chunk pool).
    pub embed_params: u64,
    /// Chunked parameter elements: the transformer part minus embeddings.
    pub other_params: u64,
    /// Output-head parameter storage in bytes (kept raw, never page-padded).
    pub lm_head_param_bytes: u64,
    /// Whether the output head shares storage with the input embedding.
    /// The estimate still charges it: gathered logits and their gradient
    /// dominate the head's cost either way.
    pub lm_head_tied: bool,
}

impl ModelProfile {
    /// Checks the internal consistency rules.
    ///
    /// The accounted element totals must match the operator list:
    /// `embed_params + other_params` equals the parameter sum over embedding
    /// and linear operators. Scalars must be positive.
    pub fn validate(&self) -> Result<()> {
        if self.dict_size == 0 {
            return Err(Error::invalid("dict_size", "must be at least 1"));
        }
        if self.hidden_size == 0 {
            return Err(Error::invalid("hidden_size", "must be at least 1"));
        }
        if self.layer_count == 0 {
            return Err(Error::invalid("layer_count", "must be at least 1"));
        }
        if self.embedding_count == 0 {
            return Err(Error::invalid("embedding_count", "must be at least 1"));
        }
        let accounted: u64 = self
            .operators
            .iter()
            .filter(|op| op.kind.is_accounted())
            .map(|op| op.param_count)
            .sum();
        let declared = self.embed_params + self.other_params;
        if declared != accounted {
            return Err(Error::invalid(
                "embed_params/other_params",
                format!(
                    "declared element total {declared} does not match the \
                     embedding+linear operator sum {accounted}"
                ),
            ));
        }
        Ok(())
    }

    /// Largest parameter count among chunked (linear) operators.
    pub fn largest_chunked_operator(&self) -> u64 {
        self.operators
            .iter()
            .filter(|op| op.kind == OperatorKind::Linear)
            .map(|op| op.param_count)
            .max()
            .unwrap_or(0)
    }
}

/// Chunk size used by the parameter memory pool, in elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub chunk_size: u64,
}

impl ChunkConfig {
    pub fn new(chunk_size: u64) -> Result<Self> {
        let cfg = ChunkConfig { chunk_size };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 {
            return Err(Error::invalid("chunk_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// The GPUs the plan runs on. All sizes are bytes; every GPU is identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub gpu_count: u64,
    /// Usable device memory per GPU.
    pub capacity_bytes: u64,
    /// Allocation page granularity; every pool allocation rounds up to this.
    pub page_bytes: u64,
    /// Memory already consumed before training allocates anything.
    pub base_bytes: u64,
}

impl HardwareProfile {
    pub fn new(gpu_count: u64, capacity_bytes: u64, page_bytes: u64, base_bytes: u64) -> Result<Self> {
        let hw = HardwareProfile {
            gpu_count,
            capacity_bytes,
            page_bytes,
            base_bytes,
        };
        hw.validate()?;
        Ok(hw)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gpu_count == 0 {
            return Err(Error::invalid("gpu_count", "must be at least 1"));
        }
        if !self.page_bytes.is_power_of_two() {
            return Err(Error::invalid(
                "page_bytes",
                format!("must be a positive power of two, got {}", self.page_bytes),
            ));
        }
        if self.capacity_bytes <= self.base_bytes {
            return Err(Error::invalid(
                "capacity_bytes",
                format!(
                    "must exceed base_bytes ({} <= {})",
                    self.capacity_bytes, self.base_bytes
                ),
            ));
        }
        Ok(())
    }

    /// Same hardware with a different GPU count (used by sweeps).
    pub fn with_gpu_count(&self, gpu_count: u64) -> Self {
        HardwareProfile { gpu_count, ..*self }
    }
}

/// Per-step training shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub batch_size: u64,
    pub seq_len: u64,
}

impl RunConfig {
    pub fn new(batch_size: u64, seq_len: u64) -> Result<Self> {
        let run = RunConfig { batch_size, seq_len };
        run.validate()?;
        Ok(run)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if self.seq_len < 2 {
            return Err(Error::invalid(
                "seq_len",
                "must be at least 2 (the label shift drops one position)",
            ));
        }
        Ok(())
    }
}

/// The distributed training layouts the estimator understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    /// Conventional data parallelism: every GPU holds the full replica.
    Cdp,
    /// Advanced data parallelism: parameters and optimizer state sharded,
    /// half-precision weights gathered in full during compute.
    Adp,
    /// One-dimensional tensor parallelism across all GPUs.
    Tp,
    /// Data parallelism over groups that are internally tensor parallel.
    Hybrid,
    /// Nothing fits on the GPUs; fall back to host-offloaded training.
    CpuOffload,
}

impl StrategyKind {
    /// Stable lowercase token used by the CLI and serialized records.
    pub fn token(self) -> &'static str {
        match self {
            StrategyKind::Cdp => "cdp",
            StrategyKind::Adp => "adp",
            StrategyKind::Tp => "tp",
            StrategyKind::Hybrid => "hybrid",
            StrategyKind::CpuOffload => "cpu-offload",
        }
    }
}

/// A concrete strategy instance: the kind plus its process layout.
///
/// `dp_count * tp_count` always equals the GPU count for the GPU-resident
/// kinds; `CpuOffload` carries zeros since it describes the absence of a GPU
/// layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub dp_count: u64,
    pub tp_count: u64,
}

impl StrategySpec {
    pub fn cdp(gpu_count: u64) -> Self {
        StrategySpec {
            kind: StrategyKind::Cdp,
            dp_count: gpu_count,
            tp_count: 1,
        }
    }

    pub fn adp(gpu_count: u64) -> Self {
        StrategySpec {
            kind: StrategyKind::Adp,
            dp_count: gpu_count,
            tp_count: 1,
        }
    }

    pub fn tp(gpu_count: u64) -> Self {
        StrategySpec {
            kind: StrategyKind::Tp,
            dp_count: 1,
            tp_count: gpu_count,
        }
    }

    pub fn hybrid(dp_count: u64, tp_count: u64) -> Self {
        StrategySpec {
            kind: StrategyKind::Hybrid,
            dp_count,
            tp_count,
        }
    }

    pub fn cpu_offload() -> Self {
        StrategySpec {
            kind: StrategyKind::CpuOffload,
            dp_count: 0,
            tp_count: 0,
        }
    }

    /// Checks the layout against the hardware it is meant for.
    pub fn validate(&self, hw: &HardwareProfile) -> Result<()> {
        match self.kind {
            StrategyKind::Cdp | StrategyKind::Adp => {
                if self.tp_count != 1 || self.dp_count != hw.gpu_count {
                    return Err(Error::invalid(
                        "strategy",
                        format!(
                            "{} requires dp={} tp=1, got dp={} tp={}",
                            self.kind.token(),
                            hw.gpu_count,
                            self.dp_count,
                            self.tp_count
                        ),
                    ));
                }
            }
            StrategyKind::Tp => {
                if self.dp_count != 1 || self.tp_count != hw.gpu_count {
                    return Err(Error::invalid(
                        "strategy",
                        format!(
                            "tp requires dp=1 tp={}, got dp={} tp={}",
                            hw.gpu_count, self.dp_count, self.tp_count
                        ),
                    ));
                }
            }
            StrategyKind::Hybrid => {
                if self.dp_count < 2 || self.tp_count < 2 {
                    return Err(Error::invalid(
                        "strategy",
                        format!(
                            "hybrid requires dp >= 2 and tp >= 2 (got {}x{}); \
                             use adp or tp for the degenerate layouts",
                            self.dp_count, self.tp_count
                        ),
                    ));
                }
                if self.dp_count * self.tp_count != hw.gpu_count {
                    return Err(Error::invalid(
                        "strategy",
                        format!(
                            "hybrid {}x{} needs {} GPUs, hardware has {}",
                            self.dp_count,
                            self.tp_count,
                            self.dp_count * self.tp_count,
                            hw.gpu_count
                        ),
                    ));
                }
            }
            StrategyKind::CpuOffload => {}
        }
        Ok(())
    }

    /// Display label, e.g. `cdp`, `hybrid:2x2`, `cpu-offload`.
    pub fn label(&self) -> String {
        match self.kind {
            StrategyKind::Hybrid => format!("hybrid:{}x{}", self.dp_count, self.tp_count),
            kind => kind.token().to_string(),
        }
    }
}

/// Peak-memory estimate broken into the components the model tracks.
///
/// The component fields hold the per-GPU values the chosen strategy actually
/// charges *before* any cross-GPU division, so the same breakdown shape works
/// for every strategy: `params`/`params_half`/`params_full` are the chunked
/// parameter pool (total, half-precision share, full-precision share, each
/// page-aligned independently), `optimizer_states` the per-operator optimizer
/// pages, `outputs` the saved per-layer activations, `lm_head` the output-head
/// pass, and `tp_backward_buffer` the extra gather buffer tensor parallelism
/// needs in the backward pass (zero elsewhere). `peak` applies the strategy's
/// own combination rule (which may divide the parameter and optimizer terms
/// across GPUs), so it is not always the plain sum of the fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryBreakdown {
    pub base: u64,
    pub params: u64,
    pub params_half: u64,
    pub params_full: u64,
    pub optimizer_states: u64,
    pub outputs: u64,
    pub lm_head: u64,
    pub tp_backward_buffer: u64,
    pub peak: u64,
}
