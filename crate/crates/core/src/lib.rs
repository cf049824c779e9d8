//! Analytical peak-GPU-memory estimation and strategy planning for
//! fine-tuning decoder-style transformer language models.
//!
//! The estimator predicts, in exact integer bytes, the peak per-GPU memory
//! of a fine-tuning run under four distributed strategies — classic data
//! parallelism (CDP), fully sharded data parallelism (ADP), 1-D tensor
//! parallelism (TP), and a data×tensor hybrid — from nothing but the model's
//! parameter layout, the precision widths, the batch geometry, and the
//! allocator's page size. The planner searches each strategy's maximum
//! feasible batch size, scores projected throughput, and picks a strategy
//! (or CPU offload when a single sample cannot fit).
//!
//! Organization:
//!
//! * [`types`] — domain types: model profiles, hardware, strategies,
//!   precision, and the per-component [`MemoryBreakdown`].
//! * [`estimator`] — the component formulas and per-strategy peak rules.
//! * [`planner`] — batch search, scoring, decision, and grid sweeps.
//! * [`ingest`] — model manifests on disk and architecture-based derivation.
//!
//! All byte math is integer-exact: widening to 128 bits internally, aligning
//! up to allocator pages, and never rounding through floats.

pub mod error;
pub mod estimator;
pub mod ingest;
pub mod planner;
pub mod types;

pub use error::{Error, Result};
pub use estimator::{
    align_to_page, estimate_lm_head, estimate_optimizer_states, estimate_outputs, estimate_params,
    estimate_peak, estimate_peak_adp, estimate_peak_hybrid, estimate_peak_single, estimate_peak_tp,
    estimate_tp_backward_buffer, ParamsEstimate,
};
pub use ingest::{
    choose_chunk_size, default_chunk_candidates, derive_profile, load_manifest, ArchitectureSpec,
    Manifest, ManifestPrecision,
};
pub use planner::{
    decide, max_feasible_batch, score_strategy, sweep, sweep_serial, DecisionReport, HybridPolicy,
    PlannerOptions, Score, StrategyResult, SweepCell,
};
pub use types::{
    ChunkConfig, HardwareProfile, MemoryBreakdown, ModelProfile, OperatorKind, OperatorRecord,
    PrecisionSpec, RunConfig, StrategyKind, StrategySpec, DEFAULT_BASE_BYTES, DEFAULT_BATCH_CAP,
    DEFAULT_PAGE_BYTES,
};
