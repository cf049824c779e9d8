//! Strategy planning: per-strategy maximum-batch search, scoring, and the
//! final pick.
//!
//! For a model/hardware pair the planner finds, for each candidate strategy,
//! the largest batch size whose estimated peak fits per-GPU capacity, scores
//! each strategy by projected per-iteration throughput, and picks the
//! highest-scoring one (ties resolved by a fixed preference order). When even
//! the tensor-parallel strategy cannot fit a single sample, the pick falls
//! back to CPU offloading. [`sweep`] evaluates a sequence-length × GPU-count
//! grid of such decisions.

use std::fmt;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimator::estimate_peak;
use crate::types::{
    ChunkConfig, HardwareProfile, MemoryBreakdown, ModelProfile, PrecisionSpec, RunConfig,
    StrategyKind, StrategySpec, DEFAULT_BATCH_CAP,
};

/// A throughput score measured in exact half-units.
///
/// Scores are small rationals with denominator at most 2 (the data-parallel
/// credit multiplies by 3/2), so they are stored as integer half-units:
/// `Score::from_halves(9)` is the score 4.5. Comparison is exact; no floats
/// are involved until display or serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Score(u128);

impl Score {
    pub const ZERO: Score = Score(0);

    pub fn from_halves(halves: u128) -> Score {
        Score(halves)
    }

    /// The score in half-units (twice its rational value).
    pub fn halves(&self) -> u128 {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(2) {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}.5", self.0 / 2)
        }
    }
}

impl Serialize for Score {
    /// Serializes as a number (`18` or `4.5`). Exact for any score the
    /// planner can produce: half-units stay far below 2^53.
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.0 as f64 / 2.0)
    }
}

impl<'de> Deserialize<'de> for Score {
    /// Accepts the number forms [`Score::serialize`] can emit: a
    /// non-negative integer (exact for any magnitude) or a float that is a
    /// multiple of 0.5. A float whose doubled value exceeds 2^53 is rejected
    /// rather than read back inexactly.
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Score, D::Error> {
        struct ScoreVisitor;

        impl serde::de::Visitor<'_> for ScoreVisitor {
            type Value = Score;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative multiple of 0.5")
            }

            fn visit_u64<E: serde::de::Error>(self, n: u64) -> std::result::Result<Score, E> {
                Ok(Score(2 * n as u128))
            }

            fn visit_i64<E: serde::de::Error>(self, n: i64) -> std::result::Result<Score, E> {
                if n < 0 {
                    return Err(E::custom(format!("score must be non-negative, got {n}")));
                }
                Ok(Score(2 * n as u128))
            }

            fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<Score, E> {
                let halves = v * 2.0;
                if !halves.is_finite() || halves < 0.0 || halves.fract() != 0.0 {
                    return Err(E::custom(format!(
                        "score must be a non-negative multiple of 0.5, got {v}"
                    )));
                }
                if halves > (1u64 << 53) as f64 {
                    return Err(E::custom(format!(
                        "score {v} is too large to read back exactly"
                    )));
                }
                Ok(Score(halves as u128))
            }
        }

        deserializer.deserialize_any(ScoreVisitor)
    }
}

/// Scores a strategy by its projected per-iteration sample throughput.
///
/// With `mb` the maximum feasible batch per GPU: CDP earns `1.5 * mb * gpu_n`
/// (plain data parallelism moves two-thirds of the sharded variant's gradient
/// traffic, credited as a 1.5× factor), ADP earns `mb * gpu_n`, TP earns `mb`
/// (one model instance), and a hybrid earns `mb * dp_n` (one instance per
/// data-parallel replica). A strategy that fits no batch scores zero.
pub fn score_strategy(strategy: &StrategySpec, max_batch: u64, gpu_count: u64) -> Score {
    if max_batch == 0 {
        return Score::ZERO;
    }
    let mb = max_batch as u128;
    let halves = match strategy.kind {
        StrategyKind::Cdp => 3 * mb * gpu_count as u128,
        StrategyKind::Adp => 2 * mb * gpu_count as u128,
        StrategyKind::Tp => 2 * mb,
        StrategyKind::Hybrid => 2 * mb * strategy.dp_count as u128,
        StrategyKind::CpuOffload => 0,
    };
    Score(halves)
}

/// Finds the largest batch size whose peak fits per-GPU capacity.
///
/// Returns 0 when a single sample already overflows, and errors with
/// [`Error::BatchCapExceeded`] when `batch_cap` itself still fits (the true
/// maximum would be censored). Peaks are non-decreasing in batch size, so an
/// exponential probe followed by bisection finds the same answer a linear
/// scan would.
pub fn max_feasible_batch(
    strategy: &StrategySpec,
    model: &ModelProfile,
    chunk: &ChunkConfig,
    prec: &PrecisionSpec,
    seq_len: u64,
    hw: &HardwareProfile,
    batch_cap: u64,
) -> Result<u64> {
    if batch_cap == 0 {
        return Err(Error::invalid("batch_cap", "must be at least 1"));
    }
    let fits = |bs: u64| -> Result<bool> {
        let run = RunConfig::new(bs, seq_len)?;
        let breakdown = estimate_peak(strategy, model, chunk, prec, &run, hw)?;
        Ok(breakdown.peak <= hw.capacity_bytes)
    };
    if !fits(1)? {
        return Ok(0);
    }
    if fits(batch_cap)? {
        return Err(Error::BatchCapExceeded { cap: batch_cap });
    }
    // Bracket [lo feasible, hi infeasible], tightened exponentially first.
    let mut lo = 1u64;
    let mut hi = batch_cap;
    let mut probe = 2u64;
    while probe < hi && fits(probe)? {
        lo = probe;
        probe = probe.saturating_mul(2);
    }
    if probe < hi {
        hi = probe;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Which hybrid layouts [`decide`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HybridPolicy {
    /// Every factorization `dp * tp = gpu_count` with both factors ≥ 2.
    #[default]
    All,
    /// Only the most balanced factorization (minimal `|dp - tp|`, larger
    /// data-parallel side on ties).
    Balanced,
}

/// Knobs for [`decide`] and [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerOptions {
    /// Upper bound on the batch search; hitting it while still feasible is
    /// reported as an error rather than a censored result.
    pub batch_cap: u64,
    pub hybrid: HybridPolicy,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        PlannerOptions {
            batch_cap: DEFAULT_BATCH_CAP,
            hybrid: HybridPolicy::All,
        }
    }
}

/// One strategy's search outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyResult {
    pub strategy: StrategySpec,
    /// Largest batch size that fits; 0 when a single sample overflows.
    pub max_batch: u64,
    pub score: Score,
    /// The breakdown at `max_batch`; absent when nothing fits.
    pub breakdown_at_max: Option<MemoryBreakdown>,
}

/// The full decision: every evaluated strategy plus the pick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionReport {
    /// In evaluation order: CDP, ADP, TP, then hybrids with larger
    /// data-parallel counts first. A single-GPU run lists only CDP.
    pub results: Vec<StrategyResult>,
    pub chosen: StrategySpec,
    pub chosen_batch: u64,
}

impl DecisionReport {
    /// The result row for a strategy kind, if it was evaluated (first match
    /// for hybrids).
    pub fn result_for(&self, kind: StrategyKind) -> Option<&StrategyResult> {
        self.results.iter().find(|r| r.strategy.kind == kind)
    }

    /// The highest-scoring hybrid row, larger dp first on ties.
    pub fn best_hybrid(&self) -> Option<&StrategyResult> {
        self.results
            .iter()
            .filter(|r| r.strategy.kind == StrategyKind::Hybrid)
            .max_by(|a, b| {
                a.score
                    .cmp(&b.score)
                    .then(a.strategy.dp_count.cmp(&b.strategy.dp_count))
            })
    }
}

/// Hybrid layouts for `gpu_count` under `policy`, larger dp first.
fn hybrid_layouts(gpu_count: u64, policy: HybridPolicy) -> Vec<StrategySpec> {
    let mut layouts: Vec<StrategySpec> = Vec::new();
    let mut dp = gpu_count / 2;
    while dp >= 2 {
        if gpu_count.is_multiple_of(dp) && gpu_count / dp >= 2 {
            layouts.push(StrategySpec::hybrid(dp, gpu_count / dp));
        }
        dp -= 1;
    }
    if policy == HybridPolicy::Balanced && !layouts.is_empty() {
        let best = layouts
            .iter()
            .copied()
            .min_by_key(|s| (s.dp_count.abs_diff(s.tp_count), u64::MAX - s.dp_count))
            .expect("nonempty");
        layouts = vec![best];
    }
    layouts
}

/// Picks the fine-tuning strategy for one model/hardware/sequence-length
/// point.
///
/// Evaluates CDP, ADP, TP, and the hybrid layouts chosen by
/// `opts.hybrid` (on a single GPU all strategies coincide, so only CDP is
/// evaluated), searches each strategy's maximum feasible batch, and picks
/// the highest score; ties go to the earliest strategy in evaluation order.
/// When the minimum-memory strategy in the comparison (TP, or CDP on one
/// GPU) scores zero, the pick is CPU offload with batch 0 — even if some
/// other strategy was feasible, matching the algorithm's literal fallback
/// condition.
pub fn decide(
    model: &ModelProfile,
    chunk: &ChunkConfig,
    prec: &PrecisionSpec,
    seq_len: u64,
    hw: &HardwareProfile,
    opts: &PlannerOptions,
) -> Result<DecisionReport> {
    model.validate()?;
    chunk.validate()?;
    prec.validate()?;
    hw.validate()?;

    let gpu = hw.gpu_count;
    let mut strategies = vec![StrategySpec::cdp(gpu)];
    if gpu > 1 {
        strategies.push(StrategySpec::adp(gpu));
        strategies.push(StrategySpec::tp(gpu));
        strategies.extend(hybrid_layouts(gpu, opts.hybrid));
    }

    let mut results = Vec::with_capacity(strategies.len());
    for strategy in &strategies {
        let max_batch =
            max_feasible_batch(strategy, model, chunk, prec, seq_len, hw, opts.batch_cap)?;
        let score = score_strategy(strategy, max_batch, gpu);
        let breakdown_at_max = if max_batch >= 1 {
            let run = RunConfig::new(max_batch, seq_len)?;
            Some(estimate_peak(strategy, model, chunk, prec, &run, hw)?)
        } else {
            None
        };
        results.push(StrategyResult {
            strategy: *strategy,
            max_batch,
            score,
            breakdown_at_max,
        });
    }

    // Fallback gate: the strategy with the smallest peak must fit at least
    // one sample. With several GPUs that is TP; alone, CDP is the only (and
    // equivalent) candidate.
    let gate_kind = if gpu > 1 {
        StrategyKind::Tp
    } else {
        StrategyKind::Cdp
    };
    let gate_scored = self::gate_score(&results, gate_kind);
    if gate_scored.is_zero() {
        return Ok(DecisionReport {
            results,
            chosen: StrategySpec::cpu_offload(),
            chosen_batch: 0,
        });
    }

    let best = results
        .iter()
        .max_by(|a, b| a.score.cmp(&b.score))
        .expect("at least CDP is evaluated");
    // max_by returns the last maximum; scan again for the first, which is
    // the preferred strategy in evaluation order.
    let best = results
        .iter()
        .find(|r| r.score == best.score)
        .expect("just found");
    Ok(DecisionReport {
        chosen: best.strategy,
        chosen_batch: best.max_batch,
        results,
    })
}

fn gate_score(results: &[StrategyResult], kind: StrategyKind) -> Score {
    results
        .iter()
        .find(|r| r.strategy.kind == kind)
        .map(|r| r.score)
        .unwrap_or(Score::ZERO)
}

/// One grid point of a [`sweep`]: the decision, or the error that cell hit.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub seq_len: u64,
    pub gpu_count: u64,
    pub report: Result<DecisionReport>,
}

/// Evaluates [`decide`] over a sequence-length × GPU-count grid.
///
/// Cells come back in deterministic sequence-length-major order; a cell
/// that fails records its error in place and never aborts the rest. With
/// the `parallel` feature (on by default) cells are evaluated on the rayon
/// thread pool; [`sweep_serial`] is the single-threaded equivalent and
/// returns identical results.
pub fn sweep(
    model: &ModelProfile,
    chunk: &ChunkConfig,
    prec: &PrecisionSpec,
    hw: &HardwareProfile,
    seq_lens: &[u64],
    gpu_counts: &[u64],
    opts: &PlannerOptions,
) -> Result<Vec<SweepCell>> {
    let points = grid_points(seq_lens, gpu_counts)?;
    #[cfg(feature = "parallel")]
    {
        Ok(points
            .par_iter()
            .map(|&(sl, gpu)| evaluate_cell(model, chunk, prec, hw, sl, gpu, opts))
            .collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(points
            .iter()
            .map(|&(sl, gpu)| evaluate_cell(model, chunk, prec, hw, sl, gpu, opts))
            .collect())
    }
}

/// Single-threaded [`sweep`], available regardless of features.
pub fn sweep_serial(
    model: &ModelProfile,
    chunk: &ChunkConfig,
    prec: &PrecisionSpec,
    hw: &HardwareProfile,
    seq_lens: &[u64],
    gpu_counts: &[u64],
    opts: &PlannerOptions,
) -> Result<Vec<SweepCell>> {
    let points = grid_points(seq_lens, gpu_counts)?;
    Ok(points
        .iter()
        .map(|&(sl, gpu)| evaluate_cell(model, chunk, prec, hw, sl, gpu, opts))
        .collect())
}

fn grid_points(seq_lens: &[u64], gpu_counts: &[u64]) -> Result<Vec<(u64, u64)>> {
    if seq_lens.is_empty() {
        return Err(Error::invalid("seq_lens", "grid must not be empty"));
    }
    if gpu_counts.is_empty() {
        return Err(Error::invalid("gpu_counts", "grid must not be empty"));
    }
    let mut points = Vec::with_capacity(seq_lens.len() * gpu_counts.len());
    for &sl in seq_lens {
        for &gpu in gpu_counts {
            points.push((sl, gpu));
        }
    }
    Ok(points)
}

fn evaluate_cell(
    model: &ModelProfile,
    chunk: &ChunkConfig,
    prec: &PrecisionSpec,
    hw: &HardwareProfile,
    seq_len: u64,
    gpu_count: u64,
    opts: &PlannerOptions,
) -> SweepCell {
    let report = hw
        .with_gpu_count(gpu_count)
        .validate()
        .map(|_| hw.with_gpu_count(gpu_count))
        .and_then(|cell_hw| decide(model, chunk, prec, seq_len, &cell_hw, opts));
    SweepCell {
        seq_len,
        gpu_count,
        report,
    }
}
