//! Peak GPU memory estimation for fine-tuning decoder transformers.
//!
//! Every quantity is an exact byte count; there is no floating point
//! anywhere in this module. Pool allocations round up to the hardware
//! allocation page, so each component is aligned with [`align_to_page`]
//! exactly where a real allocator would pad.
//!
//! Component formulas (all page-aligned unless noted):
//!
//! * parameter pool: `(embed + ceil(other/chunk)*chunk) * bytes_per_element`
//!   where embeddings sit outside the chunked region and the chunked region
//!   pads up to whole chunks;
//! * optimizer states: per embedding/linear operator,
//!   `params * 2 * full_bytes` (momentum plus variance);
//! * saved outputs: `(embeddings + layers) * batch * seq * hidden * half`;
//! * output head: gathered logits plus two shifted-label temporaries plus the
//!   head's raw (unaligned) parameter bytes;
//! * tensor-parallel backward buffer: the share of per-layer outputs a rank
//!   must regather from its peers, `layers * batch * seq * hidden *
//!   (tp-1)/tp * half`.
//!
//! Peaks combine the components per strategy; the sharded strategies divide
//! the parameter/optimizer terms across GPUs, rounding up to whole bytes so
//! the estimate never under-reports.

use crate::error::{Error, Result};
use crate::types::{
    ChunkConfig, HardwareProfile, MemoryBreakdown, ModelProfile, PrecisionSpec, RunConfig,
    StrategyKind, StrategySpec,
};

/// `ceil(a / b)` for positive `b`, wide enough for any product of inputs.
fn ceil_div(a: u128, b: u128) -> u128 {
    debug_assert!(b > 0);
    a.div_ceil(b)
}

fn to_u64(value: u128) -> u64 {
    u64::try_from(value).expect("memory estimate exceeds 2^64 bytes")
}

/// Rounds `raw` up to the next multiple of `page`.
///
/// `page` must be nonzero; zero raw bytes stay zero.
pub fn align_to_page(raw: u64, page: u64) -> u64 {
    assert!(page > 0, "page size must be nonzero");
    to_u64(ceil_div(raw as u128, page as u128) * page as u128)
}

/// Page-aligned parameter-pool sizes, split by element format.
///
/// `total` charges each element at `half + full` bytes (the working copy and
/// the master copy share the pool); `half` and `full` price the same element
/// count at one format each, aligned independently, for the strategies that
/// shard the two copies differently.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamsEstimate {
    pub total: u64,
    pub half: u64,
    pub full: u64,
}

/// Chunked parameter-pool bytes.
///
/// Embedding elements are managed outside the chunk pool and enter at their
/// exact count; the remaining elements pad up to whole chunks first. Gradients
/// reuse the half-precision parameter pages, so they add nothing here.
pub fn estimate_params(
    model: &ModelProfile,
    chunk: &ChunkConfig,
    prec: &PrecisionSpec,
    hw: &HardwareProfile,
) -> ParamsEstimate {
    let chunked = ceil_div(model.other_params as u128, chunk.chunk_size as u128)
        * chunk.chunk_size as u128;
    let elements = model.embed_params as u128 + chunked;
    let priced = |bytes_per_elem: u64| -> u64 {
        to_u64(
            ceil_div(elements * bytes_per_elem as u128, hw.page_bytes as u128)
                * hw.page_bytes as u128,
        )
    };
    ParamsEstimate {
        total: priced(prec.half_bytes + prec.full_bytes),
        half: priced(prec.half_bytes),
        full: priced(prec.full_bytes),
    }
}

/// Optimizer-state bytes: two full-precision tensors (momentum and variance)
/// per embedding or linear operator, each operator padded to pages on its
/// own. Bias, layernorm, and other records carry no optimizer state here;
/// their slack lives in the baseline.
pub fn estimate_optimizer_states(
    model: &ModelProfile,
    prec: &PrecisionSpec,
    hw: &HardwareProfile,
) -> u64 {
    let per_elem = (prec.full_bytes + prec.full_bytes) as u128;
    let total: u128 = model
        .operators
        .iter()
        .filter(|op| op.kind.is_accounted())
        .map(|op| ceil_div(op.param_count as u128 * per_elem, hw.page_bytes as u128))
        .sum::<u128>()
        * hw.page_bytes as u128;
    to_u64(total)
}

/// Saved forward outputs: one half-precision activation per embedding and per
/// layer, `batch * seq * hidden` elements each, aligned once as a whole.
pub fn estimate_outputs(
    model: &ModelProfile,
    run: &RunConfig,
    prec: &PrecisionSpec,
    hw: &HardwareProfile,
) -> u64 {
    let raw = (model.embedding_count + model.layer_count) as u128
        * run.batch_size as u128
        * run.seq_len as u128
        * model.hidden_size as u128
        * prec.half_bytes as u128;
    to_u64(ceil_div(raw, hw.page_bytes as u128) * hw.page_bytes as u128)
}

/// Output-head bytes: the gathered logits over the full dictionary, two
/// shifted-label temporaries one position shorter, and the head's parameter
/// storage. The parameter bytes are charged raw — the head tensor exists
/// outside the page pool — and the head is never sharded, whatever the
/// strategy.
///
/// Needs `seq_len >= 2`: the label shift drops one position.
pub fn estimate_lm_head(
    model: &ModelProfile,
    run: &RunConfig,
    prec: &PrecisionSpec,
    hw: &HardwareProfile,
) -> Result<u64> {
    if run.seq_len < 2 {
        return Err(Error::invalid(
            "seq_len",
            "must be at least 2 (the label shift drops one position)",
        ));
    }
    let page = hw.page_bytes as u128;
    let elem = prec.lm_head_bytes as u128;
    let logits = ceil_div(
        run.batch_size as u128 * run.seq_len as u128 * model.dict_size as u128 * elem,
        page,
    ) * page;
    let shifted = ceil_div(
        run.batch_size as u128 * (run.seq_len - 1) as u128 * model.dict_size as u128 * elem,
        page,
    ) * page;
    Ok(to_u64(logits + 2 * shifted + model.lm_head_param_bytes as u128))
}

/// Extra backward-pass buffer under tensor parallelism: each rank regathers
/// the `(tp-1)/tp` share of every layer's output it does not hold locally.
/// The fraction is applied exactly (one ceiling at the page boundary), and
/// `tp_count = 1` yields zero.
pub fn estimate_tp_backward_buffer(
    model: &ModelProfile,
    run: &RunConfig,
    prec: &PrecisionSpec,
    tp_count: u64,
    hw: &HardwareProfile,
) -> u64 {
    debug_assert!(tp_count >= 1);
    let numerator = model.layer_count as u128
        * run.batch_size as u128
        * run.seq_len as u128
        * model.hidden_size as u128
        * (tp_count - 1) as u128
        * prec.half_bytes as u128;
    let page = hw.page_bytes as u128;
    to_u64(ceil_div(numerator, tp_count as u128 * page) * page)
}

struct Components {
    params: ParamsEstimate,
    optimizer_states: u64,
    outputs: u64,
    lm_head: u64,
}

fn components(
    model: &ModelProfile,
    chunk: &ChunkConfig,
    prec: &PrecisionSpec,
    run: &RunConfig,
    hw: &HardwareProfile,
) -> Result<Components> {
    Ok(Components {
        params: estimate_params(model, chunk, prec, hw),
        optimizer_states: estimate_optimizer_states(model, prec, hw),
        outputs: estimate_outputs(model, run, prec, hw),
        lm_head: estimate_lm_head(model, run, prec, hw)?,
    })
}

impl Components {
    fn into_breakdown(self, base: u64, tp_backward_buffer: u64, peak: u128) -> MemoryBreakdown {
        MemoryBreakdown {
            base,
            params: self.params.total,
            params_half: self.params.half,
            params_full: self.params.full,
            optimizer_states: self.optimizer_states,
            outputs: self.outputs,
            lm_head: self.lm_head,
            tp_backward_buffer,
            peak: to_u64(peak),
        }
    }
}

/// Peak on a single replica: every component charged in full on each GPU.
pub fn estimate_peak_single(
    model: &ModelProfile,
    chunk: &ChunkConfig,
    prec: &PrecisionSpec,
    run: &RunConfig,
    hw: &HardwareProfile,
) -> Result<MemoryBreakdown> {
    let c = components(model, chunk, prec, run, hw)?;
    let peak = hw.base_bytes as u128
        + c.params.total as u128
        + c.optimizer_states as u128
        + c.outputs as u128
        + c.lm_head as u128;
    Ok(c.into_breakdown(hw.base_bytes, 0, peak))
}

/// Peak under sharded data parallelism: the full-precision master copy and
/// the optimizer states are split across GPUs (their sum divided once,
/// rounding up to whole bytes), while the half-precision working copy is
/// gathered in full during compute and therefore charged whole.
///
/// The master copy's charge is the pool total minus the gathered
/// half-precision share (`params - params_half`), not the independently
/// aligned `params_full`: the two copies live in one pool, so splitting it
/// must not double-count padding. This keeps the single-GPU case exactly
/// equal to [`estimate_peak_single`] and the sharded peak never above it.
pub fn estimate_peak_adp(
    model: &ModelProfile,
    chunk: &ChunkConfig,
    prec: &PrecisionSpec,
    run: &RunConfig,
    hw: &HardwareProfile,
) -> Result<MemoryBreakdown> {
    let c = components(model, chunk, prec, run, hw)?;
    let sharded = ceil_div(
        (c.params.total - c.params.half) as u128 + c.optimizer_states as u128,
        hw.gpu_count as u128,
    );
    let peak = hw.base_bytes as u128
        + c.params.half as u128
        + sharded
        + c.outputs as u128
        + c.lm_head as u128;
    Ok(c.into_breakdown(hw.base_bytes, 0, peak))
}

/// Peak under one-dimensional tensor parallelism across all GPUs: parameters
/// and optimizer states stay sharded through compute (their sum divided once,
/// rounding up), activations and the output head are charged in full, and the
/// backward pass adds the regather buffer.
pub fn estimate_peak_tp(
    model: &ModelProfile,
    chunk: &ChunkConfig,
    prec: &PrecisionSpec,
    run: &RunConfig,
    strat: &StrategySpec,
    hw: &HardwareProfile,
) -> Result<MemoryBreakdown> {
    if strat.kind != StrategyKind::Tp {
        return Err(Error::invalid(
            "strategy",
            format!("expected tp, got {}", strat.label()),
        ));
    }
    strat.validate(hw)?;
    let c = components(model, chunk, prec, run, hw)?;
    let back = estimate_tp_backward_buffer(model, run, prec, strat.tp_count, hw);
    let sharded = ceil_div(
        c.params.total as u128 + c.optimizer_states as u128,
        hw.gpu_count as u128,
    );
    let peak = hw.base_bytes as u128
        + sharded
        + c.outputs as u128
        + c.lm_head as u128
        + back as u128;
    Ok(c.into_breakdown(hw.base_bytes, back, peak))
}

/// Peak when tensor-parallel groups of `tp_count` GPUs are replicated
/// `dp_count` times: start from the sharded-data-parallel peak, remove the
/// share of the half-precision working copy now held by other ranks of the
/// tensor group (`params_half * tp / gpus`, floored so the estimate stays
/// conservative), and add the regather buffer for the group size.
///
/// Degenerate layouts are rejected: `dp_count` and `tp_count` must both be at
/// least 2 (use the plain strategies otherwise). Inputs whose subtraction
/// would push the peak below the baseline signal [`Error::HybridUnderflow`]
/// rather than clamping.
pub fn estimate_peak_hybrid(
    model: &ModelProfile,
    chunk: &ChunkConfig,
    prec: &PrecisionSpec,
    run: &RunConfig,
    strat: &StrategySpec,
    hw: &HardwareProfile,
) -> Result<MemoryBreakdown> {
    if strat.kind != StrategyKind::Hybrid {
        return Err(Error::invalid(
            "strategy",
            format!("expected hybrid, got {}", strat.label()),
        ));
    }
    strat.validate(hw)?;
    let c = components(model, chunk, prec, run, hw)?;
    // Same sharded master-copy charge as the sharded-data-parallel peak:
    // the pool complement of the fp16 share, never the re-aligned fp32.
    let sharded = ceil_div(
        (c.params.total - c.params.half) as u128 + c.optimizer_states as u128,
        hw.gpu_count as u128,
    );
    let dp_peak = hw.base_bytes as u128
        + c.params.half as u128
        + sharded
        + c.outputs as u128
        + c.lm_head as u128;
    let subtrahend = c.params.half as u128 * strat.tp_count as u128 / hw.gpu_count as u128;
    if dp_peak - subtrahend < hw.base_bytes as u128 {
        return Err(Error::HybridUnderflow {
            subtrahend: to_u64(subtrahend),
            base: hw.base_bytes,
        });
    }
    let back = estimate_tp_backward_buffer(model, run, prec, strat.tp_count, hw);
    let peak = dp_peak - subtrahend + back as u128;
    Ok(c.into_breakdown(hw.base_bytes, back, peak))
}

/// Estimates the peak for any GPU-resident strategy.
///
/// `CpuOffload` carries no GPU layout and is rejected.
pub fn estimate_peak(
    strat: &StrategySpec,
    model: &ModelProfile,
    chunk: &ChunkConfig,
    prec: &PrecisionSpec,
    run: &RunConfig,
    hw: &HardwareProfile,
) -> Result<MemoryBreakdown> {
    match strat.kind {
        StrategyKind::Cdp => {
            strat.validate(hw)?;
            estimate_peak_single(model, chunk, prec, run, hw)
        }
        StrategyKind::Adp => {
            strat.validate(hw)?;
            estimate_peak_adp(model, chunk, prec, run, hw)
        }
        StrategyKind::Tp => estimate_peak_tp(model, chunk, prec, run, strat, hw),
        StrategyKind::Hybrid => estimate_peak_hybrid(model, chunk, prec, run, strat, hw),
        StrategyKind::CpuOffload => Err(Error::invalid(
            "strategy",
            "cpu-offload has no GPU peak to estimate",
        )),
    }
}
